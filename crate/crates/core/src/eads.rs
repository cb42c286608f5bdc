//! Analytic engine for multi-step environment-assisted decoherence
//! suppression (EADS).
//!
//! A fragile non-Gaussian state circulates through N identical steps. Each
//! step taps the signal on a beamsplitter of transmissivity η_BS whose
//! second port carries a p-squeezed ancilla, measures the leak port by
//! x-homodyne, and applies round-trip loss η_loop; after the last step the
//! accumulated measurement record feeds forward into one displacement
//! correction. Conditioned on the record, the whole loop acts on the
//! signal as a *Gaussian channel*, which this module derives in closed
//! form:
//!
//! - scale  S = √(η_loop^N)·diag(η_BS^(−N/2), η_BS^(N/2)),
//! - noise  V = diag(v₁, v₂) with geometric-series forms below,
//!
//! so Wigner functions and fidelities follow from grid operations alone.
//! The correction leaves a deterministic squeezing byproduct
//! (r_byp = ½·ln η_BS per step) which is compensated in post-processing;
//! fidelities reported here are compensated fidelities against the pure
//! target state.

use ndarray::Array1;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::fockspace::{
    fidelity_pure, loss_channel, squeeze_unitary, squeezed_vacuum, subtract_photon,
    FockDensityMatrix, FockError, PureFockVector, QuadMoments, DEFAULT_TRUNCATION_BUDGET,
};
use crate::phasespace::{
    channel_output_from_fock, overlap, wigner_from_fock, GaussianChannelSpec, GridSpec,
    PhaseSpaceError, WignerGrid,
};
use crate::Warning;

/// Fock dimension used for loop input/output states.
pub const DEFAULT_STATE_DIM: usize = 20;

/// Grid spanning the theory curves; 961 points keep h² interpolation error
/// below the curve tolerances while (n−1) stays divisible by the overlap
/// stride.
pub const DEFAULT_CURVE_GRID: GridSpec = GridSpec {
    min: -8.0,
    max: 8.0,
    n: 961,
};

/// Overlap integrals are evaluated on every third grid point: the integrand
/// is smooth, so this costs ~1e-4 in fidelity while cutting the quadratic
/// work ninefold.
pub const OVERLAP_STRIDE: usize = 3;

/// Ancilla squeezing (dB) used for the infinite-squeezing reference curve.
pub const IDEAL_ANCILLA_DB: f64 = 60.0;

#[derive(Debug, Error)]
pub enum EadsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    PhaseSpace(#[from] PhaseSpaceError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// r = dB·ln(10)/20, so that 10·log₁₀(e^{2r}) = dB.
pub fn r_from_db(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

pub fn db_from_r(r: f64) -> f64 {
    20.0 * r / std::f64::consts::LN_10
}

/// Squeezing level (dB) pegged for the approximate single-photon input: a
/// photon-subtracted squeezed vacuum at very weak squeezing is the
/// experimentally natural stand-in for |1⟩.
pub const SINGLE_PHOTON_PEG_DB: f64 = 1.0;

/// Which non-Gaussian state enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputKind {
    /// Photon-subtracted squeezed vacuum, squeezed in p (anti-squeezed
    /// in x), then preparation loss η_NG.
    PSqueezedPhoton,
    /// Same state squeezed in x instead.
    XSqueezedPhoton,
    /// Approximate single photon: photon-subtracted x-squeezed vacuum at
    /// the pegged 1.0 dB squeezing, then preparation loss η_NG.
    SinglePhoton,
    /// Exact Fock |1⟩ (preparation loss η_NG still applies).
    IdealSinglePhoton,
    /// Bare vacuum: a Gaussian null input for calibration runs.
    Vacuum,
}

impl InputKind {
    pub fn label(&self) -> &'static str {
        match self {
            InputKind::PSqueezedPhoton => "p_squeezed_photon",
            InputKind::XSqueezedPhoton => "x_squeezed_photon",
            InputKind::SinglePhoton => "single_photon",
            InputKind::IdealSinglePhoton => "ideal_single_photon",
            InputKind::Vacuum => "vacuum",
        }
    }

    /// Short tag used to disambiguate rows when several inputs share a run.
    pub fn short_label(&self) -> &'static str {
        match self {
            InputKind::PSqueezedPhoton => "p",
            InputKind::XSqueezedPhoton => "x",
            InputKind::SinglePhoton => "single",
            InputKind::IdealSinglePhoton => "ideal",
            InputKind::Vacuum => "vac",
        }
    }
}

/// Which protocol arm a theory curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveVariant {
    /// EADS on: squeezed ancilla at the tap, homodyne feedforward.
    Suppressed,
    /// Plain lossy loop: vacuum at the tap, no measurement, no correction.
    Unsuppressed,
    /// Suppressed arm with an effectively infinitely squeezed, lossless
    /// ancilla — the reachable upper bound.
    SuppressedIdealAncilla,
}

impl CurveVariant {
    pub fn label(&self) -> &'static str {
        match self {
            CurveVariant::Suppressed => "suppressed",
            CurveVariant::Unsuppressed => "unsuppressed",
            CurveVariant::SuppressedIdealAncilla => "suppressed_ideal_ancilla",
        }
    }
}

/// Physical parameters of one loop scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub input: InputKind,
    /// Squeezing level of the resource squeezed vacuum, dB.
    pub r_ng_db: f64,
    /// Input-state preparation efficiency (loss 1−η_NG applied once).
    pub eta_ng: f64,
    /// Tap beamsplitter transmissivity.
    pub eta_bs: f64,
    /// Round-trip loop transmission per step (tap excluded).
    pub eta_loop: f64,
    /// Ancilla squeezing level, dB.
    pub r_a_db: f64,
    /// Ancilla preparation efficiency.
    pub eta_a: f64,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), EadsError> {
        let check_unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(EadsError::InvalidConfig(format!(
                    "{name} must be in (0, 1], got {v}"
                )))
            }
        };
        check_unit("eta_ng", self.eta_ng)?;
        check_unit("eta_bs", self.eta_bs)?;
        check_unit("eta_loop", self.eta_loop)?;
        check_unit("eta_a", self.eta_a)?;
        if self.r_ng_db < 0.0 || self.r_a_db < 0.0 {
            return Err(EadsError::InvalidConfig(
                "squeezing levels must be non-negative dB".into(),
            ));
        }
        Ok(())
    }

    /// The same scenario with the ancilla replaced by the effectively
    /// infinite-squeezing, lossless reference.
    pub fn with_ideal_ancilla(&self) -> LoopConfig {
        LoopConfig {
            r_a_db: IDEAL_ANCILLA_DB,
            eta_a: 1.0,
            ..*self
        }
    }

    fn r_ng(&self) -> f64 {
        r_from_db(self.r_ng_db)
    }

    fn r_a(&self) -> f64 {
        r_from_db(self.r_a_db)
    }
}

// ---------------------------------------------------------------------------
// state preparation
// ---------------------------------------------------------------------------

fn prep_dim_for(dim: usize) -> usize {
    (dim + 28).max(48)
}

/// Signed squeezing parameter for a kind: positive squeezes p, negative
/// squeezes x.
fn signed_r(cfg: &LoopConfig) -> f64 {
    match cfg.input {
        InputKind::PSqueezedPhoton => cfg.r_ng(),
        InputKind::XSqueezedPhoton => -cfg.r_ng(),
        InputKind::SinglePhoton => -r_from_db(SINGLE_PHOTON_PEG_DB),
        InputKind::IdealSinglePhoton | InputKind::Vacuum => 0.0,
    }
}

/// The pure target state |ψ_in⟩ the loop tries to preserve (no preparation
/// loss): a photon-subtracted squeezed vacuum, or |1⟩ for the ideal kind.
pub fn pure_target(cfg: &LoopConfig, dim: usize) -> Result<(PureFockVector, Vec<Warning>), EadsError> {
    if cfg.input == InputKind::IdealSinglePhoton {
        return Ok((PureFockVector::fock(1, dim), Vec::new()));
    }
    if cfg.input == InputKind::Vacuum {
        return Ok((PureFockVector::vacuum(dim), Vec::new()));
    }
    let prep = prep_dim_for(dim);
    let (sv, w1) = squeezed_vacuum(signed_r(cfg), prep);
    let psi = subtract_photon(&sv).map_err(|e| match e {
        FockError::VanishingNorm { .. } => EadsError::InvalidConfig(
            "input squeezing is zero: photon subtraction has nothing to herald".into(),
        ),
        other => EadsError::Fock(other),
    })?;
    let (cut, lost) = psi.truncate(dim)?;
    let mut warnings: Vec<Warning> = w1.into_iter().collect();
    if lost > DEFAULT_TRUNCATION_BUDGET {
        warnings.push(Warning::Truncation {
            context: "pure_target",
            population: lost,
            budget: DEFAULT_TRUNCATION_BUDGET,
        });
    }
    Ok((cut, warnings))
}

/// The mixed state actually entering the loop: the pure target degraded by
/// the preparation loss 1−η_NG.
pub fn prepare_input(
    cfg: &LoopConfig,
    dim: usize,
) -> Result<(FockDensityMatrix, Vec<Warning>), EadsError> {
    cfg.validate()?;
    if cfg.input == InputKind::IdealSinglePhoton {
        let rho = loss_channel(&PureFockVector::fock(1, dim).to_density(), cfg.eta_ng)?;
        return Ok((rho, Vec::new()));
    }
    if cfg.input == InputKind::Vacuum {
        return Ok((FockDensityMatrix::vacuum(dim), Vec::new()));
    }
    let prep = prep_dim_for(dim);
    let (sv, w1) = squeezed_vacuum(signed_r(cfg), prep);
    let psi = subtract_photon(&sv).map_err(|e| match e {
        FockError::VanishingNorm { .. } => EadsError::InvalidConfig(
            "input squeezing is zero: photon subtraction has nothing to herald".into(),
        ),
        other => EadsError::Fock(other),
    })?;
    let rho = loss_channel(&psi.to_density(), cfg.eta_ng)?;
    let (cut, lost) = rho.truncate_renorm(dim)?;
    let mut warnings: Vec<Warning> = w1.into_iter().collect();
    if lost > DEFAULT_TRUNCATION_BUDGET {
        warnings.push(Warning::Truncation {
            context: "prepare_input",
            population: lost,
            budget: DEFAULT_TRUNCATION_BUDGET,
        });
    }
    Ok((cut, warnings))
}

/// The ancilla state injected at the tap's second port: a p-squeezed
/// vacuum degraded by its preparation loss 1−η_a.
pub fn prepare_ancilla(
    cfg: &LoopConfig,
    dim: usize,
) -> Result<(FockDensityMatrix, Vec<Warning>), EadsError> {
    let (sv, w) = squeezed_vacuum(cfg.r_a(), dim);
    let rho = loss_channel(&sv.to_density(), cfg.eta_a)?;
    Ok((rho, w.into_iter().collect()))
}

// ---------------------------------------------------------------------------
// channel algebra
// ---------------------------------------------------------------------------

/// Σ_{k=0}^{n−1} ratio^k, continuous through ratio → 1.
fn geometric_sum(ratio: f64, n: usize) -> f64 {
    if (1.0 - ratio).abs() < 1e-12 {
        n as f64
    } else {
        (1.0 - ratio.powi(n as i32)) / (1.0 - ratio)
    }
}

/// Feedforward gains g_k (k = 1..N) weighting the k-th step's homodyne
/// outcome in the final correction: each records how the leak at step k
/// propagates to the output,
///
/// g_k = √η_loop·√((1−η_BS)/η_BS)·(√(η_loop/η_BS))^(N−k).
pub fn feedforward_gains(cfg: &LoopConfig, n: usize) -> Vec<f64> {
    let base = cfg.eta_loop.sqrt() * ((1.0 - cfg.eta_bs) / cfg.eta_bs).sqrt();
    let ratio = (cfg.eta_loop / cfg.eta_bs).sqrt();
    (1..=n)
        .map(|k| base * ratio.powi((n - k) as i32))
        .collect()
}

/// The conditional Gaussian channel of N suppressed steps (tap, ancilla,
/// x-homodyne on the leak, loop loss, one final feedforward correction).
pub fn suppressed_channel(cfg: &LoopConfig, n: usize) -> GaussianChannelSpec {
    if n == 0 {
        return GaussianChannelSpec::identity();
    }
    let ni = n as i32;
    let amp = cfg.eta_loop.powi(ni).sqrt();
    let sx = amp * cfg.eta_bs.powf(-(n as f64) / 2.0);
    let sp = amp * cfg.eta_bs.powf(n as f64 / 2.0);
    let v1 = geometric_sum(cfg.eta_loop / cfg.eta_bs, n) * (1.0 - cfg.eta_loop) / 2.0;
    let ancilla_p_var = cfg.eta_a * (-2.0 * cfg.r_a()).exp() + 1.0 - cfg.eta_a;
    let v2 = geometric_sum(cfg.eta_loop * cfg.eta_bs, n)
        * (cfg.eta_loop * (1.0 - cfg.eta_bs) * ancilla_p_var + 1.0 - cfg.eta_loop)
        / 2.0;
    GaussianChannelSpec {
        scale: [sx, sp],
        noise: [v1, v2, 0.0],
        shift: [0.0, 0.0],
    }
}

/// The plain lossy loop with no ancilla, measurement, or correction: N
/// compounded pure-loss steps of transmission η_BS·η_loop.
pub fn unsuppressed_channel(cfg: &LoopConfig, n: usize) -> GaussianChannelSpec {
    if n == 0 {
        return GaussianChannelSpec::identity();
    }
    let t = (cfg.eta_bs * cfg.eta_loop).powi(n as i32);
    GaussianChannelSpec {
        scale: [t.sqrt(), t.sqrt()],
        noise: [(1.0 - t) / 2.0, (1.0 - t) / 2.0, 0.0],
        shift: [0.0, 0.0],
    }
}

/// The channel describing one variant after n steps.
pub fn channel_for(cfg: &LoopConfig, variant: CurveVariant, n: usize) -> GaussianChannelSpec {
    match variant {
        CurveVariant::Suppressed => suppressed_channel(cfg, n),
        CurveVariant::Unsuppressed => unsuppressed_channel(cfg, n),
        CurveVariant::SuppressedIdealAncilla => suppressed_channel(&cfg.with_ideal_ancilla(), n),
    }
}

/// The deterministic squeezing byproduct left by the feedforward scheme:
/// r_byp = ½·ln(η_BS) per step, zero for the unsuppressed arm (its channel
/// is phase-insensitive). This is the squeezing parameter whose inverse is
/// applied in post-processing before computing fidelities.
pub fn byproduct_compensation(cfg: &LoopConfig, variant: CurveVariant, n: usize) -> f64 {
    match variant {
        CurveVariant::Unsuppressed => 0.0,
        _ => n as f64 * 0.5 * cfg.eta_bs.ln(),
    }
}

/// Push first/second moments through a Gaussian channel in closed form.
pub fn moments_through_channel(m: &QuadMoments, ch: &GaussianChannelSpec) -> QuadMoments {
    let [sx, sp] = ch.scale;
    QuadMoments {
        mean_x: sx * m.mean_x + ch.shift[0],
        mean_p: sp * m.mean_p + ch.shift[1],
        var_x: sx * sx * m.var_x + ch.noise[0],
        var_p: sp * sp * m.var_p + ch.noise[1],
        cov_xp: sx * sp * m.cov_xp + ch.noise[2],
    }
}

// ---------------------------------------------------------------------------
// compensated fidelity
// ---------------------------------------------------------------------------

/// Compensated fidelity ⟨ψ|S(r_comp)·ρ·S†(r_comp)|ψ⟩ computed by
/// anti-squeezing the pure target instead of the mixed output:
/// F = ⟨φ|ρ|φ⟩ with |φ⟩ = S(−r_comp)|ψ⟩.
pub fn compensated_fidelity(
    rho_out: &FockDensityMatrix,
    target: &PureFockVector,
    r_comp: f64,
) -> f64 {
    if r_comp == 0.0 {
        return fidelity_pure(rho_out, target);
    }
    let dim = target.dim().max(rho_out.dim()) + 6;
    let embedded = target.embed(dim);
    let (u, _) = squeeze_unitary(-r_comp, dim);
    let anti: Array1<C64> = u.dot(embedded.amplitudes());
    fidelity_pure(rho_out, &PureFockVector::new(anti))
}

/// The anti-compensated pure target S(−r_comp)|ψ⟩ used by the grid engine.
fn anti_compensated_target(
    target: &PureFockVector,
    r_comp: f64,
    dim: usize,
) -> PureFockVector {
    let embedded = target.embed(dim.max(target.dim()));
    if r_comp == 0.0 {
        return embedded;
    }
    let (u, _) = squeeze_unitary(-r_comp, embedded.dim());
    PureFockVector::new(u.dot(embedded.amplitudes()))
}

// ---------------------------------------------------------------------------
// theory curves
// ---------------------------------------------------------------------------

/// One point of a theory curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub n: usize,
    pub variant: CurveVariant,
    /// Compensated fidelity to the pure target.
    pub fidelity: f64,
    /// Negativity witness W₀ (minimum while negative, origin value after).
    pub w0: f64,
    /// Where W₀ was read.
    pub w0_at: (f64, f64),
}

/// Largest stride ≤ `want` that exactly divides the grid intervals.
fn usable_stride(n_points: usize, want: usize) -> usize {
    (1..=want.min(n_points - 1))
        .rev()
        .find(|s| (n_points - 1) % s == 0)
        .unwrap_or(1)
}

/// The analytic output Wigner function of one variant after n steps.
pub fn analytic_state(
    cfg: &LoopConfig,
    variant: CurveVariant,
    n: usize,
    grid: &GridSpec,
) -> Result<(WignerGrid, Vec<Warning>), EadsError> {
    let (rho_in, mut warnings) = prepare_input(cfg, DEFAULT_STATE_DIM)?;
    let ch = channel_for(cfg, variant, n);
    let (w_out, w2) = channel_output_from_fock(&rho_in, &ch, grid)?;
    warnings.extend(w2);
    Ok((w_out, warnings))
}

/// Fidelity and negativity curves for the requested variants over
/// N = 0..=n_max, all computed by the Gaussian-channel engine on the grid.
pub fn theory_curves(
    cfg: &LoopConfig,
    variants: &[CurveVariant],
    n_max: usize,
    grid: &GridSpec,
) -> Result<(Vec<CurvePoint>, Vec<Warning>), EadsError> {
    cfg.validate()?;
    let mut warnings = Vec::new();

    let (rho_in, w_prep) = prepare_input(cfg, DEFAULT_STATE_DIM)?;
    warnings.extend(w_prep);
    let (w_in, w_grid) = wigner_from_fock(&rho_in, grid);
    warnings.extend(w_grid);

    let stride = usable_stride(grid.n, OVERLAP_STRIDE);
    let sub_spec = GridSpec {
        min: grid.min,
        max: grid.max,
        n: (grid.n - 1) / stride + 1,
    };

    let (target, w_t) = pure_target(cfg, DEFAULT_STATE_DIM)?;
    warnings.extend(w_t);

    // The anti-compensated target's Wigner function depends only on r_comp;
    // cache it across variants that share a compensation.
    let mut target_cache: Vec<(u64, WignerGrid)> = Vec::new();
    let mut target_wigner = |r_comp: f64, warnings: &mut Vec<Warning>| -> WignerGrid {
        let key = r_comp.to_bits();
        if let Some((_, w)) = target_cache.iter().find(|(k, _)| *k == key) {
            return w.clone();
        }
        let phi = anti_compensated_target(&target, r_comp, DEFAULT_STATE_DIM + 6);
        let (w, warn) = wigner_from_fock(&phi.to_density(), &sub_spec);
        warnings.extend(warn);
        target_cache.push((key, w.clone()));
        w
    };

    let mut points = Vec::new();
    for n in 0..=n_max {
        for &variant in variants {
            let (w_out, boundary) = if n == 0 {
                (w_in.clone(), None)
            } else {
                let ch = channel_for(cfg, variant, n);
                channel_output_from_fock(&rho_in, &ch, grid)?
            };
            warnings.extend(boundary);
            let (w0, w0_at) = w_out.w0_metric();
            let r_comp = byproduct_compensation(cfg, variant, n);
            let w_target = target_wigner(r_comp, &mut warnings);
            let fidelity = overlap(&w_out.subsample(stride), &w_target);
            points.push(CurvePoint {
                n,
                variant,
                fidelity,
                w0,
                w0_at,
            });
        }
    }
    Ok((points, warnings))
}
