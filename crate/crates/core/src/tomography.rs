//! Homodyne tomography: phase-resolved quadrature sampling and iterative
//! maximum-likelihood reconstruction of the density matrix.
//!
//! The sampling half draws homodyne outcomes from any simulated state with
//! the same inverse-CDF machinery the trajectory engine uses, one
//! deterministic random stream per phase setting. The reconstruction half
//! bins the samples, builds the quadrature POVM at the bin centers, and
//! runs the expectation-maximization fixed-point iteration
//!
//! ρ ← M·ρ·M / tr(...),   M = I + ε·(R(ρ) − I),   R(ρ) = Σ_k (f_k / N·tr(ρΠ_k))·Π_k,
//!
//! whose fixed points are the maximum-likelihood states. The full step
//! ε = 1 is tried first and backtracked whenever it would lower the
//! likelihood (the undamped iteration carries no monotonicity guarantee),
//! so the recorded log-likelihood trace is non-decreasing by construction;
//! if no step size ascends, the iteration has reached its numerical fixed
//! point and stops.
//!
//! Error bars come from a nonparametric bootstrap: resample the dataset
//! within each phase, reconstruct, and read the spread of any scalar
//! metric across replicates.

use crate::fockspace::{
    quad_wavefunctions, FockDensityMatrix, FockError, HomodyneSampler,
};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid reconstruction options: {0}")]
    InvalidOptions(String),
    #[error("reconstruction diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}

/// Homodyne quadrature samples grouped by measurement phase:
/// `samples[j]` were all measured at `phases[j]` (radians).
#[derive(Debug, Clone)]
pub struct QuadratureDataset {
    phases: Vec<f64>,
    samples: Vec<Vec<f64>>,
}

impl QuadratureDataset {
    pub fn new(phases: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self, TomographyError> {
        if phases.is_empty() {
            return Err(TomographyError::InvalidDataset(
                "dataset has no phase settings".into(),
            ));
        }
        if phases.len() != samples.len() {
            return Err(TomographyError::InvalidDataset(format!(
                "{} phases but {} sample groups",
                phases.len(),
                samples.len()
            )));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.is_empty() {
                return Err(TomographyError::InvalidDataset(format!(
                    "phase setting {j} has no samples"
                )));
            }
        }
        if phases.iter().any(|t| !t.is_finite())
            || samples.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(TomographyError::InvalidDataset(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self { phases, samples })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn n_total(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    /// Bootstrap resample: draw with replacement within each phase,
    /// keeping the per-phase sample counts.
    pub fn resample_with<R: Rng>(&self, rng: &mut R) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| (0..s.len()).map(|_| s[rng.gen_range(0..s.len())]).collect())
            .collect();
        Self {
            phases: self.phases.clone(),
            samples,
        }
    }
}

/// Draw `per_phase` homodyne samples from `rho` at each phase. Phase `j`
/// consumes random stream `j` of `seed`, so datasets are reproducible and
/// independent of evaluation order.
pub fn sample_dataset(
    rho: &FockDensityMatrix,
    phases: &[f64],
    per_phase: usize,
    seed: u64,
) -> Result<QuadratureDataset, TomographyError> {
    if phases.is_empty() {
        return Err(TomographyError::InvalidDataset(
            "no measurement phases requested".into(),
        ));
    }
    if per_phase == 0 {
        return Err(TomographyError::InvalidDataset(
            "zero samples per phase requested".into(),
        ));
    }
    let mut samples = Vec::with_capacity(phases.len());
    for (j, &theta) in phases.iter().enumerate() {
        let sampler = HomodyneSampler::new(rho, theta, 1201, 8.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        samples.push((0..per_phase).map(|_| sampler.draw(&mut rng)).collect());
    }
    QuadratureDataset::new(phases.to_vec(), samples)
}

/// Reconstruction knobs.
#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Fock levels of the reconstructed density matrix.
    pub dim: usize,
    /// Histogram bins per phase.
    pub bins: usize,
    /// Histogram support; samples outside are clamped to the edge bins.
    pub bin_range: (f64, f64),
    /// Iteration cap.
    pub max_iters: usize,
    /// Stop when the per-sample log-likelihood gain drops below this.
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            dim: 12,
            bins: 200,
            bin_range: (-6.0, 6.0),
            max_iters: 500,
            tol: 1e-10,
        }
    }
}

/// Convergence record of one reconstruction.
#[derive(Debug, Clone)]
pub struct MleReport {
    /// Iterations actually executed.
    pub iterations: usize,
    /// Per-sample log-likelihood after each iteration (non-decreasing).
    pub log_likelihood: Vec<f64>,
    /// Whether the tolerance was reached before the iteration cap.
    pub converged: bool,
}

struct BinnedEffects {
    /// POVM vectors, one row per occupied (phase, bin) pair.
    phi: Array2<C64>,
    /// Observed counts for each row.
    counts: Vec<f64>,
    /// Bin width (the POVM weight Δx).
    width: f64,
}

fn bin_dataset(data: &QuadratureDataset, opts: &MleOptions) -> BinnedEffects {
    let (lo, hi) = opts.bin_range;
    let width = (hi - lo) / opts.bins as f64;
    let centers: Vec<f64> = (0..opts.bins)
        .map(|b| lo + (b as f64 + 0.5) * width)
        .collect();
    let psi = quad_wavefunctions(opts.dim, &centers);

    let mut rows: Vec<Array1<C64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for (j, samples) in data.samples.iter().enumerate() {
        let theta = data.phases[j];
        let mut hist = vec![0usize; opts.bins];
        for &x in samples {
            let b = ((x - lo) / width).floor();
            let b = (b.max(0.0) as usize).min(opts.bins - 1);
            hist[b] += 1;
        }
        let phase_n: Vec<C64> = (0..opts.dim)
            .map(|n| C64::new(0.0, theta * n as f64).exp())
            .collect();
        for (b, &f) in hist.iter().enumerate() {
            if f == 0 {
                continue;
            }
            let row =
                Array1::from_iter((0..opts.dim).map(|n| phase_n[n] * psi[[n, b]]));
            rows.push(row);
            counts.push(f as f64);
        }
    }
    let mut phi = Array2::zeros((rows.len(), opts.dim));
    for (k, row) in rows.into_iter().enumerate() {
        phi.row_mut(k).assign(&row);
    }
    BinnedEffects { phi, counts, width }
}

/// Iterative maximum-likelihood reconstruction from a quadrature dataset.
pub fn mle_reconstruct(
    data: &QuadratureDataset,
    opts: &MleOptions,
) -> Result<(FockDensityMatrix, MleReport), TomographyError> {
    if opts.dim < 2 {
        return Err(TomographyError::InvalidOptions(format!(
            "reconstruction dimension {} is too small",
            opts.dim
        )));
    }
    if opts.bins < 2 || !(opts.bin_range.0 < opts.bin_range.1) {
        return Err(TomographyError::InvalidOptions(format!(
            "need at least 2 bins over a non-empty range, got {} over [{}, {}]",
            opts.bins, opts.bin_range.0, opts.bin_range.1
        )));
    }
    if opts.max_iters < 1 {
        return Err(TomographyError::InvalidOptions(
            "need at least one iteration".into(),
        ));
    }
    let effects = bin_dataset(data, opts);
    let d = opts.dim;
    let n_total = data.n_total() as f64;
    let conj_phi = effects.phi.mapv(|z| z.conj());

    // Per-sample log-likelihood and bin probabilities of a candidate state:
    // p_k = Δx·φ_k†·ρ·φ_k, evaluated as rows of conj(Φ)·ρ dotted with φ_k.
    let evaluate = |rho: &Array2<C64>| -> (f64, Vec<f64>) {
        let t_mat = conj_phi.dot(rho); // K×D
        let probs: Vec<f64> = (0..effects.counts.len())
            .map(|ki| {
                let mut s = C64::new(0.0, 0.0);
                for n in 0..d {
                    s += t_mat[[ki, n]] * effects.phi[[ki, n]];
                }
                (s.re * effects.width).max(1e-300)
            })
            .collect();
        let ll = probs
            .iter()
            .zip(effects.counts.iter())
            .map(|(p, f)| f * p.ln())
            .sum::<f64>()
            / n_total;
        (ll, probs)
    };

    let hermitize = |rho: &mut Array2<C64>| {
        for i in 0..d {
            for j in 0..i {
                let h = 0.5 * (rho[[i, j]] + rho[[j, i]].conj());
                rho[[i, j]] = h;
                rho[[j, i]] = h.conj();
            }
            rho[[i, i]] = C64::new(rho[[i, i]].re, 0.0);
        }
    };

    let mut rho = Array2::<C64>::eye(d).mapv(|z| z / d as f64);
    let (mut ll, mut probs) = evaluate(&rho);
    if !ll.is_finite() {
        return Err(TomographyError::Diverged {
            iteration: 0,
            reason: "initial likelihood is not finite".into(),
        });
    }
    let mut ll_trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0usize;

    for t in 0..opts.max_iters {
        // R = Σ_k (f_k·Δx / N·p_k)·φ_k φ_k†, accumulated as Aᵀ·conj(Φ)
        // with A = diag(w)·Φ; the scaling makes R ≈ I at the fixed point.
        let mut a = effects.phi.clone();
        for (ki, mut row) in a.rows_mut().into_iter().enumerate() {
            let w = effects.counts[ki] * effects.width / (probs[ki] * n_total);
            row.mapv_inplace(|z| z * w);
        }
        let r = a.t().dot(&conj_phi);

        // Backtracking: full fixed-point step first, then damp toward the
        // identity until the likelihood does not decrease.
        let mut eps = 1.0f64;
        let mut stepped = false;
        while eps > 1e-7 {
            let mut m = r.mapv(|z| z * eps);
            for i in 0..d {
                m[[i, i]] += 1.0 - eps;
            }
            let cand = m.dot(&rho).dot(&m);
            let trace: f64 = (0..d).map(|i| cand[[i, i]].re).sum();
            if !(trace.is_finite() && trace > 0.0) {
                eps *= 0.25;
                continue;
            }
            let mut cand = cand.mapv(|z| z / trace);
            hermitize(&mut cand);
            let (ll_cand, probs_cand) = evaluate(&cand);
            if ll_cand.is_finite() && ll_cand >= ll - 1e-14 * (1.0 + ll.abs()) {
                rho = cand;
                probs = probs_cand;
                let gain = ll_cand - ll;
                ll = ll_cand.max(ll);
                ll_trace.push(ll);
                iterations = t + 1;
                stepped = true;
                if gain.abs() < opts.tol {
                    converged = true;
                }
                break;
            }
            eps *= 0.25;
        }
        if !stepped {
            // No ascent direction left at any damping: numerical optimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let state = FockDensityMatrix::new(rho)?.normalized()?;
    Ok((
        state,
        MleReport {
            iterations,
            log_likelihood: ll_trace,
            converged,
        },
    ))
}

/// A scalar estimated from a reconstructed state, with a bootstrap
/// standard error when at least two replicates were run.
#[derive(Debug, Clone)]
pub struct BootstrapEstimate {
    /// Metric on the full-data reconstruction.
    pub value: f64,
    /// Sample standard deviation across replicates (None if < 2).
    pub se: Option<f64>,
    /// Metric on each bootstrap reconstruction.
    pub resamples: Vec<f64>,
}

/// Reconstruct the full dataset, then `replicates` within-phase bootstrap
/// resamples of it, and report the metric's point estimate and spread.
/// Replicate `r` consumes random stream `r` of `seed`.
pub fn bootstrap_metric<F>(
    data: &QuadratureDataset,
    opts: &MleOptions,
    replicates: usize,
    seed: u64,
    metric: F,
) -> Result<BootstrapEstimate, TomographyError>
where
    F: Fn(&FockDensityMatrix) -> f64 + Sync,
{
    let (rho, _) = mle_reconstruct(data, opts)?;
    let value = metric(&rho);
    let resamples: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<f64, TomographyError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let resampled = data.resample_with(&mut rng);
            let (rho_r, _) = mle_reconstruct(&resampled, opts)?;
            Ok(metric(&rho_r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let se = if replicates >= 2 {
        let n = replicates as f64;
        let mean = resamples.iter().sum::<f64>() / n;
        let ss = resamples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        Some((ss / (n - 1.0)).sqrt())
    } else {
        None
    };
    Ok(BootstrapEstimate {
        value,
        se,
        resamples,
    })
}

/// Evenly spaced measurement phases over [0, π), the standard tomography
/// schedule (θ and θ+π measure the same quadrature up to sign).
pub fn phase_schedule(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| std::f64::consts::PI * j as f64 / n as f64)
        .collect()
}
