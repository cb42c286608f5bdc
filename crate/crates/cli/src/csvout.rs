//! CSV rendering. All numbers go through one canonical formatter so that a
//! re-run with the same seed reproduces files byte for byte.

use eads_core::phasespace::WignerGrid;
use eads_core::tomography::QuadratureDataset;

/// Canonical float: Rust's shortest round-trip formatting, with negative
/// zero folded onto zero so equal values always print identically.
pub fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Nine significant digits, scientific notation.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000e0".to_string();
    }
    format!("{v:.8e}")
}

/// One theory-curve record.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub label: String,
    pub n: usize,
    pub fidelity: f64,
    pub w0: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("variant,N,F,W0\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label,
            r.n,
            fmt(r.fidelity),
            fmt(r.w0)
        ));
    }
    out
}

pub fn wigner_csv(w: &WignerGrid) -> String {
    let mut out = String::from("x,p,w\n");
    for (i, &x) in w.xs.iter().enumerate() {
        for (j, &p) in w.ps.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt(x), fmt(p), fmt(w.w[[i, j]])));
        }
    }
    out
}

/// Summary table accompanying a batch of Wigner maps.
#[derive(Debug, Clone)]
pub struct WignerRow {
    pub label: String,
    pub n: usize,
    pub w0: f64,
    pub w0_at: (f64, f64),
}

pub fn wigner_summary_csv(rows: &[WignerRow]) -> String {
    let mut out = String::from("variant,N,W0,W0_x,W0_p\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            r.n,
            fmt(r.w0),
            fmt(r.w0_at.0),
            fmt(r.w0_at.1)
        ));
    }
    out
}

pub fn dataset_csv(data: &QuadratureDataset) -> String {
    let mut out = String::from("theta,x\n");
    for (j, samples) in data.samples().iter().enumerate() {
        let theta = fmt_sig9(data.phases()[j]);
        for &x in samples {
            out.push_str(&format!("{theta},{}\n", fmt_sig9(x)));
        }
    }
    out
}

pub fn density_csv(rho: &eads_core::fockspace::FockDensityMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    let m = rho.matrix();
    for i in 0..rho.dim() {
        for j in 0..rho.dim() {
            out.push_str(&format!(
                "{i},{j},{},{}\n",
                fmt(m[[i, j]].re),
                fmt(m[[i, j]].im)
            ));
        }
    }
    out
}

/// One cross-engine comparison: the ensemble-mean moment, the channel
/// prediction, and the Monte Carlo standard error that scales the check.
#[derive(Debug, Clone, Copy)]
pub struct OracleMoment {
    pub mc: f64,
    pub reference: f64,
    pub se: f64,
}

impl OracleMoment {
    /// Agreement within three standard errors (plus a hair of absolute
    /// slack so exactly deterministic cases do not divide by zero).
    pub fn ok(&self) -> bool {
        (self.mc - self.reference).abs() <= 3.0 * self.se + 1e-9
    }
}

#[derive(Debug, Clone)]
pub struct OracleRow {
    pub label: String,
    pub n: usize,
    pub fidelity: f64,
    pub mean_x: OracleMoment,
    pub mean_p: OracleMoment,
    pub var_x: OracleMoment,
    pub var_p: OracleMoment,
    pub pass: bool,
}

impl OracleRow {
    pub fn moments(&self) -> [&OracleMoment; 4] {
        [&self.mean_x, &self.mean_p, &self.var_x, &self.var_p]
    }
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from(
        "variant,N,fidelity,\
         mean_x_mc,mean_x_ref,mean_x_se,\
         mean_p_mc,mean_p_ref,mean_p_se,\
         var_x_mc,var_x_ref,var_x_se,\
         var_p_mc,var_p_ref,var_p_se,pass\n",
    );
    for r in rows {
        out.push_str(&format!("{},{},{}", r.label, r.n, fmt(r.fidelity)));
        for m in r.moments() {
            out.push_str(&format!(",{},{},{}", fmt(m.mc), fmt(m.reference), fmt(m.se)));
        }
        out.push_str(if r.pass { ",1\n" } else { ",0\n" });
    }
    out
}

/// One tomography metric with an optional bootstrap standard error.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub input: String,
    pub metric: String,
    pub value: String,
    pub se: Option<f64>,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("input,metric,value,se\n");
    for r in rows {
        let se = r.se.map(fmt).unwrap_or_default();
        out.push_str(&format!("{},{},{},{se}\n", r.input, r.metric, r.value));
    }
    out
}
