//! Truncated Fock-space representation: states, Gaussian unitaries, the
//! pure-loss channel, beamsplitter coupling, and homodyne measurement.
//!
//! All operators act on the first `dim` number states {|0⟩, …, |dim−1⟩}.
//! Unitaries are built by exponentiating truncated generators, so they are
//! exactly unitary on the truncated space; fidelity to the untruncated
//! operation is governed by how much population reaches the cutoff, which
//! is what the [`Warning::Truncation`] diagnostics monitor.
//!
//! Beamsplitter convention (transmissivity η, modes A and B):
//!
//! ```text
//! x_out  = √η·x_A + √(1−η)·x_B      x_leak = √(1−η)·x_A − √η·x_B
//! ```
//!
//! and identically for p. Mode A carries the signal; mode B starts in the
//! environment state and becomes the monitored leak.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use thiserror::Error;

use crate::linalg;
use crate::Warning;

/// Population allowed at the top retained Fock level before a truncation
/// warning is raised.
pub const DEFAULT_TRUNCATION_BUDGET: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("state norm vanishes in {context}")]
    VanishingNorm { context: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not a density matrix: {0}")]
    InvalidState(String),
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Cumulative log-factorial table: `table[n] = ln(n!)`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

// ---------------------------------------------------------------------------
// states
// ---------------------------------------------------------------------------

/// A pure state as amplitudes over number states.
#[derive(Debug, Clone, PartialEq)]
pub struct PureFockVector {
    data: Array1<C64>,
}

impl PureFockVector {
    pub fn new(data: Array1<C64>) -> Self {
        Self { data }
    }

    /// Number state |n⟩ in a `dim`-level space.
    pub fn fock(n: usize, dim: usize) -> Self {
        assert!(n < dim, "fock level {n} does not fit in dimension {dim}");
        let mut data = Array1::zeros(dim);
        data[n] = c(1.0);
        Self { data }
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::fock(0, dim)
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self, FockError> {
        let n = self.norm();
        if n < 1e-12 {
            return Err(FockError::VanishingNorm {
                context: "normalize",
            });
        }
        Ok(Self {
            data: self.data.mapv(|a| a / n),
        })
    }

    /// Zero-pad to a larger space.
    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim(), "embed cannot shrink a state");
        let mut data = Array1::zeros(dim);
        for (i, a) in self.data.iter().enumerate() {
            data[i] = *a;
        }
        Self { data }
    }

    /// Drop amplitudes above the cutoff and renormalize. Returns the state
    /// and the probability mass that was discarded.
    pub fn truncate(&self, dim: usize) -> Result<(Self, f64), FockError> {
        assert!(dim >= 1 && dim <= self.dim());
        let mut data = Array1::zeros(dim);
        for i in 0..dim {
            data[i] = self.data[i];
        }
        let kept: f64 = data.iter().map(|a| a.norm_sqr()).sum();
        if kept < 1e-12 {
            return Err(FockError::VanishingNorm {
                context: "truncate",
            });
        }
        let scale = kept.sqrt();
        Ok((
            Self {
                data: data.mapv(|a| a / scale),
            },
            1.0 - kept,
        ))
    }

    pub fn to_density(&self) -> FockDensityMatrix {
        let d = self.dim();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = self.data[i] * self.data[j].conj();
            }
        }
        FockDensityMatrix { data: m }
    }
}

/// A density matrix over number states.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    data: Array2<C64>,
}

/// First and second quadrature moments of a single-mode state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl FockDensityMatrix {
    pub fn new(data: Array2<C64>) -> Result<Self, FockError> {
        if data.nrows() != data.ncols() {
            return Err(FockError::DimensionMismatch {
                context: "FockDensityMatrix::new",
                left: data.nrows(),
                right: data.ncols(),
            });
        }
        Ok(Self { data })
    }

    pub fn vacuum(dim: usize) -> Self {
        PureFockVector::vacuum(dim).to_density()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[[i, i]].re).sum()
    }

    /// Population of the highest retained level.
    pub fn top_population(&self) -> f64 {
        let d = self.dim();
        self.data[[d - 1, d - 1]].re
    }

    pub fn normalized(&self) -> Result<Self, FockError> {
        let t = self.trace();
        if t < 1e-12 {
            return Err(FockError::VanishingNorm {
                context: "normalize",
            });
        }
        Ok(Self {
            data: self.data.mapv(|v| v / t),
        })
    }

    /// Replace ρ by (ρ + ρ†)/2, scrubbing asymmetric rounding noise.
    pub fn hermitized(&self) -> Self {
        let d = self.dim();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = 0.5 * (self.data[[i, j]] + self.data[[j, i]].conj());
            }
        }
        Self { data: m }
    }

    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim(), "embed cannot shrink a state");
        let mut m = Array2::zeros((dim, dim));
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                m[[i, j]] = self.data[[i, j]];
            }
        }
        Self { data: m }
    }

    /// Truncate to a smaller space and renormalize. Returns the discarded
    /// probability mass alongside the state.
    pub fn truncate_renorm(&self, dim: usize) -> Result<(Self, f64), FockError> {
        assert!(dim >= 1 && dim <= self.dim());
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[[i, j]] = self.data[[i, j]];
            }
        }
        let out = Self { data: m };
        let kept = out.trace();
        if kept < 1e-12 {
            return Err(FockError::VanishingNorm {
                context: "truncate_renorm",
            });
        }
        Ok((out.normalized()?, 1.0 - kept))
    }

    pub fn conjugate_by(&self, u: &Array2<C64>) -> Result<Self, FockError> {
        if u.nrows() != self.dim() {
            return Err(FockError::DimensionMismatch {
                context: "conjugate_by",
                left: u.nrows(),
                right: self.dim(),
            });
        }
        let ud = u.t().mapv(|v| v.conj());
        Ok(Self {
            data: u.dot(&self.data).dot(&ud),
        })
    }

    pub fn mean_photon(&self) -> f64 {
        (0..self.dim())
            .map(|n| n as f64 * self.data[[n, n]].re)
            .sum()
    }

    /// First and second quadrature moments, from the ladder identities
    ///
    /// ⟨x̂⟩ = √2·Re tr(ρâ),   ⟨x̂²⟩ = ⟨n̂⟩ + 1/2 + Re tr(ρâ²),
    /// ⟨p̂⟩ = √2·Im tr(ρâ),   ⟨p̂²⟩ = ⟨n̂⟩ + 1/2 − Re tr(ρâ²),
    /// ⟨{x̂,p̂}⟩/2 = Im tr(ρâ²).
    ///
    /// These involve only matrix elements inside the truncated space, so
    /// they are exact for the stored state (multiplying truncated x̂/p̂
    /// operators instead would clip the top level's ladder reach).
    pub fn quadrature_moments(&self) -> QuadMoments {
        let d = self.dim();
        let mut tr_a = C64::new(0.0, 0.0); // tr(ρ â)
        let mut tr_aa = C64::new(0.0, 0.0); // tr(ρ â²)
        let mut nbar = 0.0;
        for n in 0..d {
            nbar += n as f64 * self.data[[n, n]].re;
            if n + 1 < d {
                tr_a += ((n + 1) as f64).sqrt() * self.data[[n + 1, n]];
            }
            if n + 2 < d {
                tr_aa += (((n + 1) * (n + 2)) as f64).sqrt() * self.data[[n + 2, n]];
            }
        }
        let mean_x = std::f64::consts::SQRT_2 * tr_a.re;
        let mean_p = std::f64::consts::SQRT_2 * tr_a.im;
        QuadMoments {
            mean_x,
            mean_p,
            var_x: nbar + 0.5 + tr_aa.re - mean_x * mean_x,
            var_p: nbar + 0.5 - tr_aa.re - mean_p * mean_p,
            cov_xp: tr_aa.im - mean_x * mean_p,
        }
    }

    /// Check trace, hermiticity and positivity; return truncation warnings.
    pub fn validate(&self, budget: f64) -> Result<Vec<Warning>, FockError> {
        let t = self.trace();
        if (t - 1.0).abs() > 1e-8 {
            return Err(FockError::InvalidState(format!("trace = {t:.12}")));
        }
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let asym = (self.data[[i, j]] - self.data[[j, i]].conj()).norm();
                if asym > 1e-10 {
                    return Err(FockError::InvalidState(format!(
                        "non-Hermitian at ({i},{j}): {asym:.3e}"
                    )));
                }
            }
        }
        let min_eig = linalg::min_eig_hermitian(&self.data);
        if min_eig < -1e-8 {
            return Err(FockError::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        let mut warnings = Vec::new();
        let pop = self.top_population();
        if pop > budget {
            warnings.push(Warning::Truncation {
                context: "validate",
                population: pop,
                budget,
            });
        }
        Ok(warnings)
    }

    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += (self.data[[i, j]] * self.data[[j, i]]).re;
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// operators
// ---------------------------------------------------------------------------

/// Annihilation operator â: ⟨n−1|â|n⟩ = √n.
pub fn annihilation(dim: usize) -> Array2<C64> {
    let mut a = Array2::zeros((dim, dim));
    for n in 1..dim {
        a[[n - 1, n]] = c((n as f64).sqrt());
    }
    a
}

/// x̂ = (â + â†)/√2.
pub fn position_operator(dim: usize) -> Array2<C64> {
    let mut x = Array2::zeros((dim, dim));
    for n in 1..dim {
        let v = (n as f64 / 2.0).sqrt();
        x[[n - 1, n]] = c(v);
        x[[n, n - 1]] = c(v);
    }
    x
}

/// p̂ = −i(â − â†)/√2.
pub fn momentum_operator(dim: usize) -> Array2<C64> {
    let mut p = Array2::zeros((dim, dim));
    for n in 1..dim {
        let v = (n as f64 / 2.0).sqrt();
        p[[n - 1, n]] = C64::new(0.0, -v);
        p[[n, n - 1]] = C64::new(0.0, v);
    }
    p
}

fn cutoff_population(column: &[C64]) -> f64 {
    // Squeezed states populate only every other level, so look at the top
    // two levels to make the check parity-blind.
    let d = column.len();
    let top = column[d - 1].norm_sqr();
    if d >= 2 {
        top.max(column[d - 2].norm_sqr())
    } else {
        top
    }
}

/// Squeezing unitary Ŝ(r) = exp[(r/2)(â†² − â²)].
///
/// Heisenberg action: x̂ → eʳ·x̂, p̂ → e⁻ʳ·p̂, so Ŝ(r)|0⟩ with r > 0 is
/// squeezed in p (variance e⁻²ʳ/2) and anti-squeezed in x.
///
/// The attached warning fires when Ŝ(r)|0⟩ puts more than
/// [`DEFAULT_TRUNCATION_BUDGET`] of its population on the top two levels.
pub fn squeeze_unitary(r: f64, dim: usize) -> (Array2<C64>, Option<Warning>) {
    let half = 0.5 * r;
    let mut gen = Array2::<C64>::zeros((dim, dim));
    for n in 0..dim.saturating_sub(2) {
        // a†² |n⟩ = √((n+1)(n+2)) |n+2⟩
        let v = ((n + 1) as f64 * (n + 2) as f64).sqrt();
        gen[[n + 2, n]] = c(half * v);
        gen[[n, n + 2]] = c(-half * v);
    }
    let u = linalg::expm(&gen);
    let col: Vec<C64> = (0..dim).map(|i| u[[i, 0]]).collect();
    let pop = cutoff_population(&col);
    let warning = (pop > DEFAULT_TRUNCATION_BUDGET).then_some(Warning::Truncation {
        context: "squeeze_unitary",
        population: pop,
        budget: DEFAULT_TRUNCATION_BUDGET,
    });
    (u, warning)
}

/// Displacement unitary D̂ = exp(αâ† − α*â) with α = (dx + i·dp)/√2,
/// shifting ⟨x̂⟩ by dx and ⟨p̂⟩ by dp.
pub fn displacement_unitary(dx: f64, dp: f64, dim: usize) -> (Array2<C64>, Option<Warning>) {
    let alpha = C64::new(dx, dp) / C64::new(std::f64::consts::SQRT_2, 0.0);
    let mut gen = Array2::<C64>::zeros((dim, dim));
    for n in 1..dim {
        let v = (n as f64).sqrt();
        gen[[n, n - 1]] = alpha * v;
        gen[[n - 1, n]] = -alpha.conj() * v;
    }
    let u = linalg::expm(&gen);
    let col: Vec<C64> = (0..dim).map(|i| u[[i, 0]]).collect();
    let pop = cutoff_population(&col);
    let warning = (pop > DEFAULT_TRUNCATION_BUDGET).then_some(Warning::Truncation {
        context: "displacement_unitary",
        population: pop,
        budget: DEFAULT_TRUNCATION_BUDGET,
    });
    (u, warning)
}

/// Displacement unitary in closed form via the Laguerre matrix elements
///
/// ⟨m|D̂(α)|n⟩ = √(n!/m!)·α^{m−n}·e^{−|α|²/2}·L_n^{m−n}(|α|²)   (m ≥ n)
///
/// (and the conjugate-mirrored form for m < n), with α = (dx + i·dp)/√2.
/// Much cheaper than the exponential construction; the two are
/// cross-checked in the test suite.
pub fn displacement_matrix(dx: f64, dp: f64, dim: usize) -> Array2<C64> {
    let alpha = C64::new(dx, dp) / C64::new(std::f64::consts::SQRT_2, 0.0);
    let a2 = alpha.norm_sqr();
    let gauss = (-0.5 * a2).exp();
    let mut m = Array2::<C64>::zeros((dim, dim));
    let mut lag = vec![0.0f64; dim];
    // chain[d][n] = √(n!/(n+d)!)
    let mut c0d = 1.0;
    let mut apow = C64::new(1.0, 0.0);
    for d in 0..dim {
        if d > 0 {
            c0d /= (d as f64).sqrt();
            apow *= alpha;
        }
        let levels = dim - d;
        lag[0] = 1.0;
        if levels > 1 {
            lag[1] = 1.0 + d as f64 - a2;
        }
        for n in 1..levels.saturating_sub(1) {
            let nf = n as f64;
            lag[n + 1] = ((2.0 * nf + 1.0 + d as f64 - a2) * lag[n]
                - (nf + d as f64) * lag[n - 1])
                / (nf + 1.0);
        }
        let mut chain = c0d;
        let neg_conj_pow = if d % 2 == 0 {
            apow.conj()
        } else {
            -apow.conj()
        };
        for n in 0..levels {
            if n > 0 {
                chain *= ((n as f64) / ((n + d) as f64)).sqrt();
            }
            let radial = gauss * chain * lag[n];
            m[[n + d, n]] = apow * radial;
            if d > 0 {
                m[[n, n + d]] = neg_conj_pow * radial;
            }
        }
    }
    m
}

/// Squeezed vacuum Ŝ(r)|0⟩ built from the two-photon recurrence
/// c_{n+2} = tanh(r)·√((n+1)/(n+2))·c_n (then normalized), which solves
/// (cosh r·â − sinh r·â†)Ŝ(r)|0⟩ = 0. This is an independent construction
/// from [`squeeze_unitary`]; the two are cross-checked in the test suite.
pub fn squeezed_vacuum(r: f64, dim: usize) -> (PureFockVector, Option<Warning>) {
    let t = r.tanh();
    let mut amps = vec![0.0f64; dim];
    amps[0] = 1.0;
    let mut n = 0;
    while n + 2 < dim {
        amps[n + 2] = t * (((n + 1) as f64) / ((n + 2) as f64)).sqrt() * amps[n];
        n += 2;
    }
    let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    let data = Array1::from_iter(amps.iter().map(|a| c(a / norm)));
    let col: Vec<C64> = data.to_vec();
    let pop = cutoff_population(&col);
    let warning = (pop > DEFAULT_TRUNCATION_BUDGET).then_some(Warning::Truncation {
        context: "squeezed_vacuum",
        population: pop,
        budget: DEFAULT_TRUNCATION_BUDGET,
    });
    (PureFockVector::new(data), warning)
}

/// Heralded photon subtraction: â|ψ⟩ normalized.
///
/// Fails with a vanishing-norm error when |ψ⟩ has no photons to subtract
/// (e.g. vacuum, or squeezing parameter 0).
pub fn subtract_photon(psi: &PureFockVector) -> Result<PureFockVector, FockError> {
    let d = psi.dim();
    let mut data = Array1::zeros(d);
    for n in 1..d {
        data[n - 1] = psi.amplitudes()[n] * (n as f64).sqrt();
    }
    let out = PureFockVector::new(data);
    if out.norm() < 1e-9 {
        return Err(FockError::VanishingNorm {
            context: "subtract_photon",
        });
    }
    out.normalized()
}

/// Pure-loss channel of transmission η via the closed binomial Kraus sum:
///
/// ρ'_{mn} = Σ_k √(C(m+k,k)·C(n+k,k)) η^{(m+n)/2} (1−η)^k ρ_{m+k,n+k}.
pub fn loss_channel(rho: &FockDensityMatrix, eta: f64) -> Result<FockDensityMatrix, FockError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(FockError::InvalidParameter(format!(
            "loss transmission must be in [0,1], got {eta}"
        )));
    }
    let d = rho.dim();
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    if eta == 0.0 {
        let mut m = Array2::zeros((d, d));
        m[[0, 0]] = c(rho.trace());
        return Ok(FockDensityMatrix { data: m });
    }
    let lf = ln_factorials(2 * d);
    let ln_eta = eta.ln();
    let ln_one_minus = (1.0 - eta).ln();
    let mut out = Array2::zeros((d, d));
    for m in 0..d {
        for n in 0..d {
            let kmax = d - 1 - m.max(n);
            let mut s = C64::new(0.0, 0.0);
            for k in 0..=kmax {
                let lc_m = lf[m + k] - lf[m] - lf[k];
                let lc_n = lf[n + k] - lf[n] - lf[k];
                let w = (0.5 * (lc_m + lc_n)
                    + 0.5 * ((m + n) as f64) * ln_eta
                    + (k as f64) * ln_one_minus)
                    .exp();
                s += rho.matrix()[[m + k, n + k]] * w;
            }
            out[[m, n]] = s;
        }
    }
    Ok(FockDensityMatrix { data: out })
}

/// Fock matrix of the Gaussian rescaling operator
///
/// (Ô ψ)(x) = e^{−w·x² + λ·x} · ψ(a·x),
///
/// i.e. O_{mn} = ∫ h_m(x)·e^{−w·x² + λ·x}·h_n(a·x) dx over the position
/// wavefunctions h_n. Mixing a mode with a Gaussian state on a beamsplitter
/// and measuring the other output port acts on the kept mode in exactly
/// this form, which is what the trajectory engine uses it for.
///
/// All entries are real and the whole matrix follows from two coupled
/// three-term recursions (obtained by differentiating the Hermite
/// generating function under the integral), so the cost is O(dim²).
/// Requires a > 0 and w > −(1 + a²)/2 so the integrals converge.
pub fn gaussian_rescale_matrix(
    dim: usize,
    a: f64,
    w: f64,
    lambda: f64,
) -> Result<Array2<f64>, FockError> {
    let big_a = 0.5 * (1.0 + a * a) + w;
    if !(a > 0.0 && big_a > 0.0 && lambda.is_finite()) {
        return Err(FockError::InvalidParameter(format!(
            "gaussian rescale needs a > 0 and w > -(1+a²)/2, got a={a}, w={w}, λ={lambda}"
        )));
    }
    let c0 = (lambda * lambda / (4.0 * big_a)).exp() / big_a.sqrt();
    let p = 0.5 / big_a - 0.5;
    let q = 0.5 * a * a / big_a - 0.5;
    let r = a / big_a;
    let s = lambda / (std::f64::consts::SQRT_2 * big_a);
    let t = a * lambda / (std::f64::consts::SQRT_2 * big_a);
    let mut f = Array2::<f64>::zeros((dim, dim));
    f[[0, 0]] = c0;
    for n in 1..dim {
        let prev2 = if n >= 2 { f[[0, n - 2]] } else { 0.0 };
        f[[0, n]] =
            (t * f[[0, n - 1]] + 2.0 * q * ((n - 1) as f64).sqrt() * prev2) / (n as f64).sqrt();
    }
    for m in 1..dim {
        for n in 0..dim {
            let below2 = if m >= 2 { f[[m - 2, n]] } else { 0.0 };
            let left = if n >= 1 { f[[m - 1, n - 1]] } else { 0.0 };
            f[[m, n]] = (s * f[[m - 1, n]]
                + 2.0 * p * ((m - 1) as f64).sqrt() * below2
                + r * (n as f64).sqrt() * left)
                / (m as f64).sqrt();
        }
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// two-mode states and the beamsplitter
// ---------------------------------------------------------------------------

/// Joint density matrix of two modes; basis index is `a·dim_b + b`.
#[derive(Debug, Clone)]
pub struct TwoModeState {
    dim_a: usize,
    dim_b: usize,
    data: Array2<C64>,
}

impl TwoModeState {
    pub fn kron(a: &FockDensityMatrix, b: &FockDensityMatrix) -> Self {
        let (da, db) = (a.dim(), b.dim());
        let d = da * db;
        let mut m = Array2::zeros((d, d));
        for ia in 0..da {
            for ja in 0..da {
                let va = a.matrix()[[ia, ja]];
                if va.norm_sqr() < 1e-300 {
                    continue;
                }
                for ib in 0..db {
                    for jb in 0..db {
                        m[[ia * db + ib, ja * db + jb]] = va * b.matrix()[[ib, jb]];
                    }
                }
            }
        }
        Self {
            dim_a: da,
            dim_b: db,
            data: m,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim_a * self.dim_b)
            .map(|i| self.data[[i, i]].re)
            .sum()
    }

    /// Reduced state of mode A (mode B traced out).
    pub fn trace_out_b(&self) -> FockDensityMatrix {
        let (da, db) = (self.dim_a, self.dim_b);
        let mut m = Array2::zeros((da, da));
        for ia in 0..da {
            for ja in 0..da {
                let mut s = C64::new(0.0, 0.0);
                for ib in 0..db {
                    s += self.data[[ia * db + ib, ja * db + ib]];
                }
                m[[ia, ja]] = s;
            }
        }
        FockDensityMatrix { data: m }
    }

    /// Reduced state of mode B (mode A traced out).
    pub fn trace_out_a(&self) -> FockDensityMatrix {
        let (da, db) = (self.dim_a, self.dim_b);
        let mut m = Array2::zeros((db, db));
        for ib in 0..db {
            for jb in 0..db {
                let mut s = C64::new(0.0, 0.0);
                for ia in 0..da {
                    s += self.data[[ia * db + ib, ia * db + jb]];
                }
                m[[ib, jb]] = s;
            }
        }
        FockDensityMatrix { data: m }
    }
}

/// Beamsplitter unitary in sector-sparse form.
///
/// The generator θ(â†b̂ − âb̂†) with cos θ = √η conserves total photon
/// number, so the unitary is block-diagonal over sectors n_A + n_B = const;
/// only those blocks are stored (real-valued: the generator is real
/// skew-symmetric, and the trailing mode-B parity phase e^{iπ b̂†b̂} that
/// fixes the sign convention is ±1).
pub struct BeamsplitterUnitary {
    dim_a: usize,
    dim_b: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl BeamsplitterUnitary {
    pub fn new(eta: f64, dim_a: usize, dim_b: usize) -> Result<Self, FockError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(FockError::InvalidParameter(format!(
                "beamsplitter transmissivity must be in [0,1], got {eta}"
            )));
        }
        let theta = eta.sqrt().min(1.0).acos();
        let d = dim_a * dim_b;
        // rows[r] = list of (column, value)
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for total in 0..=(dim_a - 1 + dim_b - 1) {
            let a_min = total.saturating_sub(dim_b - 1);
            let a_max = total.min(dim_a - 1);
            let size = a_max - a_min + 1;
            let mut gen = Array2::<f64>::zeros((size, size));
            for (i, a) in (a_min..=a_max).enumerate() {
                // ⟨a+1, b−1| â†b̂ |a, b⟩ = √((a+1)·b), with b = total − a.
                let b = total - a;
                if a + 1 <= a_max && b >= 1 {
                    let v = theta * (((a + 1) as f64) * (b as f64)).sqrt();
                    gen[[i + 1, i]] = v;
                    gen[[i, i + 1]] = -v;
                }
            }
            let block = linalg::expm_real(&gen);
            for (i, a) in (a_min..=a_max).enumerate() {
                let b = total - a;
                let row = a * dim_b + b;
                // mode-B parity phase applied after the rotation
                let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                for (j, a2) in (a_min..=a_max).enumerate() {
                    let v = sign * block[[i, j]];
                    if v.abs() > 1e-300 {
                        let col = a2 * dim_b + (total - a2);
                        rows[row].push((col, v));
                    }
                }
            }
        }
        let mut indptr = Vec::with_capacity(d + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &rows {
            for &(col, v) in row {
                indices.push(col);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            dim_a,
            dim_b,
            indptr,
            indices,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    /// U·M for a dense square matrix M (flat row-major kernels).
    fn csr_mul(&self, m: &Array2<C64>) -> Array2<C64> {
        let d = self.dim_a * self.dim_b;
        let mut out = Array2::<C64>::zeros((d, d));
        let ms = m.as_slice().expect("standard layout");
        let os = out.as_slice_mut().expect("standard layout");
        for r in 0..d {
            let lo = self.indptr[r];
            let hi = self.indptr[r + 1];
            if lo == hi {
                continue;
            }
            let orow = &mut os[r * d..(r + 1) * d];
            for idx in lo..hi {
                let col = self.indices[idx];
                let v = self.values[idx];
                let mrow = &ms[col * d..(col + 1) * d];
                for (o, mi) in orow.iter_mut().zip(mrow.iter()) {
                    *o += *mi * v;
                }
            }
        }
        out
    }

    /// ρ → U ρ U† (U is real, so U† = Uᵀ).
    pub fn apply(&self, state: &TwoModeState) -> Result<TwoModeState, FockError> {
        if state.dim_a != self.dim_a || state.dim_b != self.dim_b {
            return Err(FockError::DimensionMismatch {
                context: "BeamsplitterUnitary::apply",
                left: state.dim_a * state.dim_b,
                right: self.dim_a * self.dim_b,
            });
        }
        let t1 = self.csr_mul(&state.data);
        let t1t = t1.t().as_standard_layout().into_owned();
        let t2 = self.csr_mul(&t1t);
        Ok(TwoModeState {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            data: t2.t().as_standard_layout().into_owned(),
        })
    }

    /// Dense matrix form (tests and small dimensions only).
    pub fn to_dense(&self) -> Array2<f64> {
        let d = self.dim_a * self.dim_b;
        let mut m = Array2::zeros((d, d));
        for r in 0..d {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                m[[r, self.indices[idx]]] = self.values[idx];
            }
        }
        m
    }
}

/// Couple `signal` (mode A) to `environment` (mode B) on a beamsplitter of
/// transmissivity η. Returns the joint output state plus a truncation
/// warning when either reduced output crowds its cutoff.
pub fn beamsplitter_apply(
    signal: &FockDensityMatrix,
    environment: &FockDensityMatrix,
    eta: f64,
) -> Result<(TwoModeState, Option<Warning>), FockError> {
    let bs = BeamsplitterUnitary::new(eta, signal.dim(), environment.dim())?;
    let joint = TwoModeState::kron(signal, environment);
    let out = bs.apply(&joint)?;
    let pop_a = out.trace_out_b().top_population();
    let pop_b = out.trace_out_a().top_population();
    let pop = pop_a.max(pop_b);
    let warning = (pop > DEFAULT_TRUNCATION_BUDGET).then_some(Warning::Truncation {
        context: "beamsplitter_apply",
        population: pop,
        budget: DEFAULT_TRUNCATION_BUDGET,
    });
    Ok((out, warning))
}

// ---------------------------------------------------------------------------
// homodyne measurement
// ---------------------------------------------------------------------------

/// Harmonic-oscillator quadrature wavefunctions ψ_n(x) for n < dim,
/// evaluated at each x: `table[[n, i]] = ψ_n(xs[i])`. Vacuum variance 1/2.
pub fn quad_wavefunctions(dim: usize, xs: &[f64]) -> Array2<f64> {
    let mut t = Array2::zeros((dim, xs.len()));
    let norm0 = std::f64::consts::PI.powf(-0.25);
    for (i, &x) in xs.iter().enumerate() {
        t[[0, i]] = norm0 * (-0.5 * x * x).exp();
        if dim > 1 {
            t[[1, i]] = std::f64::consts::SQRT_2 * x * t[[0, i]];
        }
        for n in 2..dim {
            let nf = n as f64;
            t[[n, i]] = (2.0 / nf).sqrt() * x * t[[n - 1, i]]
                - ((nf - 1.0) / nf).sqrt() * t[[n - 2, i]];
        }
    }
    t
}

/// Probability density of measuring quadrature x̂_θ = cos θ·x̂ + sin θ·p̂
/// at each of the given points:
///
/// p(x|θ) = Σ_{mn} ρ_{mn} e^{iθ(n−m)} ψ_m(x) ψ_n(x).
pub fn homodyne_pdf(rho: &FockDensityMatrix, theta: f64, xs: &[f64]) -> Vec<f64> {
    let d = rho.dim();
    let psi = quad_wavefunctions(d, xs);
    let phases: Vec<C64> = (0..d)
        .map(|m| C64::new(0.0, theta * m as f64).exp())
        .collect();
    let mut pdf = vec![0.0; xs.len()];
    for m in 0..d {
        for n in 0..=m {
            let r = rho.matrix()[[m, n]] * phases[m].conj() * phases[n];
            let weight = if m == n { r.re } else { 2.0 * r.re };
            if weight.abs() < 1e-300 {
                continue;
            }
            for (i, p) in pdf.iter_mut().enumerate() {
                *p += weight * psi[[m, i]] * psi[[n, i]];
            }
        }
    }
    pdf
}

/// Inverse-CDF sampler for the outcome distribution of one homodyne
/// measurement at phase θ.
///
/// The exact marginal pdf is tabulated on a uniform grid spanning
/// `halfwidth` standard deviations either side of the rotated mean,
/// integrated by the trapezoid rule, and inverted by linear interpolation.
/// Drawing consumes exactly one uniform variate, so sample streams are
/// easy to keep deterministic.
pub struct HomodyneSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl HomodyneSampler {
    pub fn new(
        rho: &FockDensityMatrix,
        theta: f64,
        points: usize,
        halfwidth: f64,
    ) -> Result<Self, FockError> {
        let m = rho.quadrature_moments();
        let (c, s) = (theta.cos(), theta.sin());
        let mean = c * m.mean_x + s * m.mean_p;
        let var = (c * c * m.var_x + s * s * m.var_p + 2.0 * c * s * m.cov_xp).max(1e-12);
        let sd = var.sqrt();
        let lo = mean - halfwidth * sd;
        let hi = mean + halfwidth * sd;
        let n = points.max(3);
        let step = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let pdf = homodyne_pdf(rho, theta, &xs);
        Self::from_pdf(xs, &pdf)
    }

    /// Build a sampler from a pdf already tabulated on an increasing grid.
    /// The table is integrated by the trapezoid rule and normalized;
    /// negative entries are clipped, and a non-finite or vanishing total
    /// mass is rejected.
    pub fn from_pdf(xs: Vec<f64>, pdf: &[f64]) -> Result<Self, FockError> {
        let n = xs.len();
        if n < 3 || pdf.len() != n {
            return Err(FockError::InvalidParameter(format!(
                "sampler needs ≥ 3 grid points and a matching pdf, got {n} and {}",
                pdf.len()
            )));
        }
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            let dx = xs[i] - xs[i - 1];
            cdf[i] = cdf[i - 1] + 0.5 * (pdf[i - 1].max(0.0) + pdf[i].max(0.0)) * dx;
        }
        let total = cdf[n - 1];
        if !(total.is_finite() && total > 1e-12) {
            return Err(FockError::InvalidState(format!(
                "homodyne pdf mass {total:.3e} over the sampling window"
            )));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Self { xs, cdf })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c < u);
        if i == 0 {
            return self.xs[0];
        }
        if i >= self.cdf.len() {
            return *self.xs.last().expect("sampler grid is non-empty");
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.xs[i - 1] + t * (self.xs[i] - self.xs[i - 1])
    }
}

/// Project mode B of a joint state onto the x-quadrature eigenstate at the
/// measured value (θ = 0 homodyne). Returns the normalized conditional
/// state of mode A and the outcome's likelihood density.
pub fn homodyne_project(
    joint: &TwoModeState,
    outcome: f64,
) -> Result<(FockDensityMatrix, f64), FockError> {
    let (da, db) = joint.dims();
    let xs = [outcome];
    let psi = quad_wavefunctions(db, &xs);
    let phi: Vec<f64> = (0..db).map(|n| psi[[n, 0]]).collect();

    // v[(ia,ib), ja] = Σ_jb ρ[(ia,ib),(ja,jb)] φ_jb
    let data = joint.matrix().as_slice().expect("standard layout");
    let d = da * db;
    let mut v = vec![C64::new(0.0, 0.0); d * da];
    for r in 0..d {
        let row = &data[r * d..(r + 1) * d];
        let vrow = &mut v[r * da..(r + 1) * da];
        for ja in 0..da {
            let mut s = C64::new(0.0, 0.0);
            let block = &row[ja * db..(ja + 1) * db];
            for (amp, w) in block.iter().zip(phi.iter()) {
                s += *amp * *w;
            }
            vrow[ja] = s;
        }
    }
    // cond[ia, ja] = Σ_ib φ_ib · v[(ia,ib), ja]
    let mut cond = Array2::<C64>::zeros((da, da));
    for ia in 0..da {
        for ib in 0..db {
            let w = phi[ib];
            if w.abs() < 1e-300 {
                continue;
            }
            let vrow = &v[(ia * db + ib) * da..(ia * db + ib + 1) * da];
            for ja in 0..da {
                cond[[ia, ja]] += vrow[ja] * w;
            }
        }
    }
    let lik: f64 = (0..da).map(|i| cond[[i, i]].re).sum();
    if lik <= 1e-12 {
        return Err(FockError::VanishingNorm {
            context: "homodyne_project",
        });
    }
    let cond = cond.mapv(|z| z / lik);
    Ok((FockDensityMatrix { data: cond }, lik))
}

// ---------------------------------------------------------------------------
// fidelities
// ---------------------------------------------------------------------------

/// Fidelity of a (possibly mixed) state against a pure reference:
/// F = ⟨ψ|ρ|ψ⟩.
pub fn fidelity_pure(rho: &FockDensityMatrix, psi: &PureFockVector) -> f64 {
    let d = rho.dim().min(psi.dim());
    let mut s = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            s += psi.amplitudes()[i].conj() * rho.matrix()[[i, j]] * psi.amplitudes()[j];
        }
    }
    s.re.clamp(0.0, 1.0)
}

/// Uhlmann fidelity F(ρ,σ) = (tr √(√ρ σ √ρ))² between two density
/// matrices (states are hermitized and padded to a common dimension).
pub fn fidelity(rho: &FockDensityMatrix, sigma: &FockDensityMatrix) -> f64 {
    let d = rho.dim().max(sigma.dim());
    let a = rho.embed(d).hermitized();
    let b = sigma.embed(d).hermitized();
    let sa = linalg::sqrtm_psd(a.matrix());
    let inner = sa.dot(b.matrix()).dot(&sa);
    let s = linalg::sqrtm_psd(&inner);
    let tr: f64 = (0..d).map(|i| s[[i, i]].re).sum();
    (tr * tr).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // dB → r conversion: r = dB·ln(10)/20
    fn r_of_db(db: f64) -> f64 {
        db * std::f64::consts::LN_10 / 20.0
    }

    #[test]
    fn annihilation_lowers_fock_states() {
        let a = annihilation(5);
        let three = PureFockVector::fock(3, 5);
        let lowered = a.dot(three.amplitudes());
        assert_abs_diff_eq!(lowered[2].re, 3.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(lowered[3].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn squeezed_vacuum_has_frozen_variances() {
        // r = 0.5: var_p = e⁻¹/2 = 0.18393972058572117, var_x = e¹/2.
        let (psi, w) = squeezed_vacuum(0.5, 40);
        assert!(w.is_none());
        let m = psi.to_density().quadrature_moments();
        assert_abs_diff_eq!(m.var_p, 0.183_939_720_585_721_17, epsilon = 1e-9);
        assert_abs_diff_eq!(m.var_x, 0.5 * 1.0f64.exp(), epsilon = 1e-9);
        assert_abs_diff_eq!(m.mean_x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn squeeze_unitary_matches_recurrence_construction() {
        // Two independent routes to S(r)|0⟩ must agree.
        let r = 0.7;
        let dim = 60;
        let (u, w) = squeeze_unitary(r, dim);
        assert!(w.is_none());
        let (psi, _) = squeezed_vacuum(r, dim);
        // Truncation influence creeps down from the cutoff, so compare the
        // levels whose amplitudes dwarf the tail population.
        for n in 0..30 {
            let ua = u[[n, 0]];
            let pa = psi.amplitudes()[n];
            assert_abs_diff_eq!(ua.re, pa.re, epsilon = 1e-11);
            assert_abs_diff_eq!(ua.im, pa.im, epsilon = 1e-11);
        }
    }

    #[test]
    fn squeeze_unitary_is_unitary_and_warns_when_cramped() {
        let (u, warning) = squeeze_unitary(1.5, 6);
        assert!(warning.is_some());
        let ud = u.t().mapv(|v| v.conj());
        let id = ud.dot(&u);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[[i, j]].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(id[[i, j]].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn displacement_shifts_moments_and_photon_number() {
        // D(0.3, 0) on |1⟩: ⟨n⟩ = 1 + |α|² = 1 + 0.3²/2 = 1.045,
        // ⟨x⟩ = 0.3, variances unchanged (still 3/2).
        let dim = 24;
        let (u, w) = displacement_unitary(0.3, 0.0, dim);
        assert!(w.is_none());
        let one = PureFockVector::fock(1, dim).to_density();
        let moved = one.conjugate_by(&u).unwrap();
        assert_abs_diff_eq!(moved.mean_photon(), 1.045, epsilon = 1e-9);
        let m = moved.quadrature_moments();
        assert_abs_diff_eq!(m.mean_x, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.var_x, 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(m.var_p, 1.5, epsilon = 1e-8);
    }

    #[test]
    fn ladder_moments_match_operator_expectations() {
        // On a state with negligible top-level population, the ladder-sum
        // moments must agree with brute-force truncated-operator traces.
        let dim = 30;
        let (sv, _) = squeezed_vacuum(0.45, dim);
        let rho = loss_channel(&sv.to_density(), 0.8).unwrap();
        let (u, _) = displacement_unitary(0.4, -0.3, dim);
        let rho = rho.conjugate_by(&u).unwrap();
        let x = position_operator(dim);
        let p = momentum_operator(dim);
        let ev = |op: &Array2<C64>| -> f64 {
            let prod = op.dot(rho.matrix());
            (0..dim).map(|i| prod[[i, i]].re).sum()
        };
        let m = rho.quadrature_moments();
        let (ex, ep) = (ev(&x), ev(&p));
        assert_abs_diff_eq!(m.mean_x, ex, epsilon = 1e-10);
        assert_abs_diff_eq!(m.mean_p, ep, epsilon = 1e-10);
        assert_abs_diff_eq!(m.var_x, ev(&x.dot(&x)) - ex * ex, epsilon = 1e-9);
        assert_abs_diff_eq!(m.var_p, ev(&p.dot(&p)) - ep * ep, epsilon = 1e-9);
        let sym = 0.5 * (ev(&x.dot(&p)) + ev(&p.dot(&x)));
        assert_abs_diff_eq!(m.cov_xp, sym - ex * ep, epsilon = 1e-9);
    }

    #[test]
    fn homodyne_phase_rotates_x_toward_p() {
        // (|0⟩ + i|1⟩)/√2 has ⟨x̂⟩ = 0 and ⟨p̂⟩ = +1/√2, so the θ = π/2
        // distribution must center on +1/√2 under x̂_θ = cos θ·x̂ + sin θ·p̂.
        let mut v = Array1::<C64>::zeros(8);
        v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[1] = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        let rho = PureFockVector::new(v).to_density();
        let n = 1601;
        let xs: Vec<f64> = (0..n)
            .map(|i| -8.0 + 16.0 * i as f64 / (n - 1) as f64)
            .collect();
        let h = xs[1] - xs[0];
        let mean = |theta: f64| -> f64 {
            homodyne_pdf(&rho, theta, &xs)
                .iter()
                .zip(&xs)
                .map(|(p, x)| p * x * h)
                .sum()
        };
        assert_abs_diff_eq!(mean(0.0), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            mean(std::f64::consts::FRAC_PI_2),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            mean(-std::f64::consts::FRAC_PI_2),
            -std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn displacement_closed_form_matches_exponential() {
        let dim = 28;
        for &(dx, dp) in &[(0.3, 0.0), (-0.7, 0.4), (0.0, 1.1), (1.3, -0.8)] {
            let (u, _) = displacement_unitary(dx, dp, dim);
            let m = displacement_matrix(dx, dp, dim);
            // Compare the block far enough from the cutoff that the
            // exponential construction is itself converged.
            for i in 0..12 {
                for j in 0..12 {
                    assert_abs_diff_eq!(u[[i, j]].re, m[[i, j]].re, epsilon = 1e-10);
                    assert_abs_diff_eq!(u[[i, j]].im, m[[i, j]].im, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn subtracted_squeezed_vacuum_is_squeezed_one_photon() {
        // â S(r)|0⟩ ∝ S(r)|1⟩ exactly (S†âS = cosh r·â + sinh r·â†).
        let r = r_of_db(3.5);
        let dim = 40;
        let (sv, _) = squeezed_vacuum(r, dim);
        let sub = subtract_photon(&sv).unwrap();
        let (u, _) = squeeze_unitary(r, dim);
        let one = PureFockVector::fock(1, dim);
        let target = PureFockVector::new(u.dot(one.amplitudes()));
        let f = fidelity_pure(&sub.to_density(), &target);
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-10);
        // Subtraction discards the amplitude fed from above the cutoff, so
        // compare levels whose amplitudes dwarf that edge effect.
        for n in 0..25 {
            assert_abs_diff_eq!(
                sub.amplitudes()[n].re,
                target.amplitudes()[n].re,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn subtracting_from_vacuum_fails() {
        let vac = PureFockVector::vacuum(10);
        assert!(matches!(
            subtract_photon(&vac),
            Err(FockError::VanishingNorm { .. })
        ));
        let (zero_squeezed, _) = squeezed_vacuum(0.0, 10);
        assert!(subtract_photon(&zero_squeezed).is_err());
    }

    #[test]
    fn loss_on_single_photon_is_binomial() {
        let one = PureFockVector::fock(1, 6).to_density();
        let out = loss_channel(&one, 0.9).unwrap();
        assert_abs_diff_eq!(out.matrix()[[0, 0]].re, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(out.matrix()[[1, 1]].re, 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn loss_channels_compose_as_a_semigroup() {
        let r = r_of_db(3.5);
        let dim = 24;
        let (sv, _) = squeezed_vacuum(r, dim);
        let rho = subtract_photon(&sv).unwrap().to_density();
        let twice = loss_channel(&loss_channel(&rho, 0.9).unwrap(), 0.8).unwrap();
        let once = loss_channel(&rho, 0.72).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                let d = (twice.matrix()[[i, j]] - once.matrix()[[i, j]]).norm();
                assert!(d < 1e-12, "mismatch at ({i},{j}): {d:.3e}");
            }
        }
        assert_abs_diff_eq!(twice.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_extremes_are_identity_and_vacuum() {
        let rho = PureFockVector::fock(2, 8).to_density();
        let same = loss_channel(&rho, 1.0).unwrap();
        assert_abs_diff_eq!(fidelity(&same, &rho), 1.0, epsilon = 1e-12);
        let dark = loss_channel(&rho, 0.0).unwrap();
        assert_abs_diff_eq!(dark.matrix()[[0, 0]].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_rescale_with_trivial_parameters_is_the_identity() {
        let f = gaussian_rescale_matrix(10, 1.0, 0.0, 0.0).unwrap();
        for m in 0..10 {
            for n in 0..10 {
                let want = if m == n { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(f[[m, n]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_rescale_matches_direct_quadrature() {
        // O_{mn} = ∫ h_m(x)·e^{−w·x² + λ·x}·h_n(a·x) dx, integrated
        // numerically on a dense grid for a spread of parameters.
        let dim = 7;
        let n_pts = 14_001usize;
        let half = 14.0;
        let step = 2.0 * half / (n_pts - 1) as f64;
        let xs: Vec<f64> = (0..n_pts).map(|i| -half + step * i as f64).collect();
        let hm = quad_wavefunctions(dim, &xs);
        for (a, w, lambda) in [
            (0.9487f64, 0.033f64, 0.0f64),
            (0.9487, 0.07, 0.8),
            (1.0, 0.35, -1.3),
            (0.6, 0.0, 2.0),
        ] {
            let axs: Vec<f64> = xs.iter().map(|x| a * x).collect();
            let hn = quad_wavefunctions(dim, &axs);
            let f = gaussian_rescale_matrix(dim, a, w, lambda).unwrap();
            for m in 0..dim {
                for n in 0..dim {
                    let mut num = 0.0;
                    for (i, x) in xs.iter().enumerate() {
                        let weight = if i == 0 || i == n_pts - 1 { 0.5 } else { 1.0 };
                        num += weight * hm[[m, i]] * (-w * x * x + lambda * x).exp() * hn[[n, i]];
                    }
                    num *= step;
                    assert!(
                        (f[[m, n]] - num).abs() < 1e-9,
                        "(a={a}, w={w}, λ={lambda}) entry ({m},{n}): \
                         recursion {} vs quadrature {num}",
                        f[[m, n]]
                    );
                }
            }
        }
    }

    #[test]
    fn gaussian_rescale_rejects_divergent_parameters() {
        assert!(gaussian_rescale_matrix(4, 0.0, 0.1, 0.0).is_err());
        assert!(gaussian_rescale_matrix(4, 1.0, -1.1, 0.0).is_err());
    }

    #[test]
    fn beamsplitter_matches_quadrature_convention() {
        // V†(â⊗1)V = √η·â⊗1 + √(1−η)·1⊗b̂ and
        // V†(1⊗b̂)V = √(1−η)·â⊗1 − √η·1⊗b̂,
        // checked on matrix elements safely below the joint cutoff.
        let (da, db, eta) = (8usize, 8usize, 0.73f64);
        let bs = BeamsplitterUnitary::new(eta, da, db).unwrap();
        let v = bs.to_dense().mapv(|x| C64::new(x, 0.0));
        let vd = v.t().to_owned(); // real ⇒ adjoint = transpose
        let kron_op = |oa: &Array2<C64>, ob: &Array2<C64>| {
            let mut m = Array2::<C64>::zeros((da * db, da * db));
            for ia in 0..da {
                for ja in 0..da {
                    for ib in 0..db {
                        for jb in 0..db {
                            m[[ia * db + ib, ja * db + jb]] = oa[[ia, ja]] * ob[[ib, jb]];
                        }
                    }
                }
            }
            m
        };
        let id_a = Array2::<C64>::eye(da);
        let id_b = Array2::<C64>::eye(db);
        let a_op = kron_op(&annihilation(da), &id_b);
        let b_op = kron_op(&id_a, &annihilation(db));
        let lhs_a = vd.dot(&a_op).dot(&v);
        let rhs_a = &a_op * C64::new(eta.sqrt(), 0.0) + &b_op * C64::new((1.0 - eta).sqrt(), 0.0);
        let lhs_b = vd.dot(&b_op).dot(&v);
        let rhs_b = &a_op * C64::new((1.0 - eta).sqrt(), 0.0) - &b_op * C64::new(eta.sqrt(), 0.0);
        for ia in 0..da {
            for ib in 0..db {
                if ia + ib > 5 {
                    continue;
                }
                for ja in 0..da {
                    for jb in 0..db {
                        if ja + jb > 5 {
                            continue;
                        }
                        let (r, s) = (ia * db + ib, ja * db + jb);
                        assert_abs_diff_eq!(lhs_a[[r, s]].re, rhs_a[[r, s]].re, epsilon = 1e-12);
                        assert_abs_diff_eq!(lhs_b[[r, s]].re, rhs_b[[r, s]].re, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn beamsplitter_with_vacuum_environment_is_the_loss_channel() {
        let r = r_of_db(3.5);
        let (sv, _) = squeezed_vacuum(r, 12);
        let rho = subtract_photon(&sv).unwrap().to_density();
        let env = FockDensityMatrix::vacuum(12);
        let eta = 0.74;
        let (joint, _) = beamsplitter_apply(&rho, &env, eta).unwrap();
        let reduced = joint.trace_out_b();
        let direct = loss_channel(&rho, eta).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let d = (reduced.matrix()[[i, j]] - direct.matrix()[[i, j]]).norm();
                assert!(d < 1e-10, "mismatch at ({i},{j}): {d:.3e}");
            }
        }
        assert_abs_diff_eq!(joint.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn beamsplitter_output_variance_mixes_input_variances() {
        // Vacuum signal ⊗ p-squeezed environment (r = 1.1166) at η = 0.9:
        // mode-A p-variance = 0.9·(1/2) + 0.1·(e^(−2r)/2) = 0.4553592444559072.
        let r = 1.1166;
        let (da, db) = (16usize, 30usize);
        let vac = FockDensityMatrix::vacuum(da);
        let (sv, _) = squeezed_vacuum(r, db);
        let (joint, _) = beamsplitter_apply(&vac, &sv.to_density(), 0.9).unwrap();
        let out = joint.trace_out_b();
        let m = out.quadrature_moments();
        assert_abs_diff_eq!(m.var_p, 0.455_359_244_455_907_2, epsilon = 2e-3);
        assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn homodyne_pdf_of_vacuum_is_a_gaussian() {
        let vac = FockDensityMatrix::vacuum(8);
        let xs: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.02).collect();
        let pdf = homodyne_pdf(&vac, 0.0, &xs);
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        for (i, &x) in xs.iter().enumerate() {
            let want = inv_sqrt_pi * (-x * x).exp();
            assert_abs_diff_eq!(pdf[i], want, epsilon = 1e-10);
        }
        let total: f64 = pdf.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.02).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn homodyne_pdf_respects_the_measurement_phase() {
        // S(r)|0⟩ is p-squeezed: the θ = π/2 quadrature has variance
        // e^(−2r)/2, while θ = 0 sees the anti-squeezed e^(2r)/2.
        let r = 0.5;
        let (sv, _) = squeezed_vacuum(r, 30);
        let rho = sv.to_density();
        let xs: Vec<f64> = (-600..=600).map(|i| i as f64 * 0.02).collect();
        for (theta, want) in [
            (0.0, 0.5 * (2.0 * r).exp()),
            (std::f64::consts::FRAC_PI_2, 0.5 * (-2.0 * r).exp()),
        ] {
            let pdf = homodyne_pdf(&rho, theta, &xs);
            let mean: f64 = xs
                .iter()
                .zip(&pdf)
                .map(|(x, p)| x * p * 0.02)
                .sum();
            let var: f64 = xs
                .iter()
                .zip(&pdf)
                .map(|(x, p)| (x - mean) * (x - mean) * p * 0.02)
                .sum();
            assert_abs_diff_eq!(var, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn homodyne_projection_of_joint_vacuum() {
        // Projecting mode B of |0⟩⊗|0⟩ at x leaves A in vacuum with
        // likelihood density π^(−1/2)·e^(−x²).
        let joint = TwoModeState::kron(&FockDensityMatrix::vacuum(6), &FockDensityMatrix::vacuum(6));
        let x = 0.3;
        let (cond, lik) = homodyne_project(&joint, x).unwrap();
        let want = (-x * x).exp() / std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(lik, want, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.matrix()[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uhlmann_fidelity_frozen_diagonal_oracle() {
        // loss(0.9)|1⟩ vs loss(0.8)|1⟩: F = (√(0.1·0.2) + √(0.9·0.8))² = 0.98.
        let one = PureFockVector::fock(1, 4).to_density();
        let a = loss_channel(&one, 0.9).unwrap();
        let b = loss_channel(&one, 0.8).unwrap();
        assert_abs_diff_eq!(fidelity(&a, &b), 0.98, epsilon = 1e-10);
    }

    #[test]
    fn uhlmann_fidelity_agrees_with_pure_overlap() {
        let r = r_of_db(3.5);
        let (sv, _) = squeezed_vacuum(r, 20);
        let psi = subtract_photon(&sv).unwrap();
        let rho = loss_channel(&psi.to_density(), 0.62).unwrap();
        let f_pure = fidelity_pure(&rho, &psi);
        let f_uhlmann = fidelity(&rho, &psi.to_density());
        assert_abs_diff_eq!(f_pure, f_uhlmann, epsilon = 1e-9);
        assert_abs_diff_eq!(fidelity(&rho, &rho), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fock_one_has_symmetric_moments() {
        let one = PureFockVector::fock(1, 8).to_density();
        let m = one.quadrature_moments();
        assert_abs_diff_eq!(m.var_x, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.var_p, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mean_x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.cov_xp, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn validate_flags_broken_states() {
        let mut m = Array2::<C64>::zeros((3, 3));
        m[[0, 0]] = c(1.2);
        m[[1, 1]] = c(-0.2);
        let bad = FockDensityMatrix::new(m).unwrap();
        assert!(bad.validate(1e-4).is_err());

        let good = PureFockVector::fock(1, 12).to_density();
        assert!(good.validate(1e-4).unwrap().is_empty());
    }

    #[test]
    fn truncate_renorm_reports_lost_mass() {
        let one = PureFockVector::fock(1, 6).to_density();
        let lossy = loss_channel(&one, 0.5).unwrap();
        let (cut, lost) = lossy.truncate_renorm(1).unwrap();
        assert_abs_diff_eq!(lost, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cut.trace(), 1.0, epsilon = 1e-12);
    }
}
