//! Monte Carlo trajectory engine for the suppression loop.
//!
//! Where the analytic engine averages over all measurement outcomes at
//! once, this engine simulates them one at a time. A single trajectory
//! through an N-step loop is
//!
//! 1. couple the signal to a fresh ancilla on the tap beamsplitter,
//! 2. draw an x-homodyne outcome for the leak mode from its exact marginal
//!    distribution (inverse-CDF on a dense grid),
//! 3. condition the kept mode on that outcome,
//! 4. apply the round-trip loss η_loop,
//!
//! repeated N times, followed by one feedforward displacement
//! `x → x + Σ_k g_k·x_k` built from the recorded outcomes. The ensemble
//! average of many trajectories must reproduce the analytic channel; the
//! oracle tests and `oracle` CLI subcommand hold the two engines to that.
//!
//! The ancilla is Gaussian, and the engine exploits that rather than ever
//! giving it a Fock basis of its own. A (generally mixed) zero-mean
//! Gaussian ancilla is a Gaussian mixture of identical pure wavepackets
//! displaced along x, so each step draws the packet variable ν and then
//! conditions the tap on the leak outcome in closed form: the kept mode's
//! wavefunction transforms as ψ(x) → e^{−w·x² + λ·x}·ψ(t·x) with t = √η_BS
//! ([`gaussian_rescale_matrix`]). The outcome itself is drawn from its
//! exact marginal, tabulated by contracting the signal state against a
//! kernel precomputed on a fixed grid. Both pieces are exact in the
//! ancilla, so the only truncation inside the loop is the signal's own
//! Fock cutoff.
//!
//! Mean displacements ride in a side channel: every outcome shifts the
//! signal by a known amount along x, and the engine tracks that shift as a
//! plain number μ next to the Fock state of the centered remainder instead
//! of displacing the state each step. At the end, μ and the feedforward
//! correction are applied as a single displacement; at unit gain the two
//! cancel exactly.
//!
//! Determinism: trajectory `i` of an ensemble seeded with `s` always
//! consumes the same random stream (ChaCha stream `i` of seed `s`): one
//! normal variate for the packet and one uniform per leak draw, in step
//! order, regardless of how many worker threads execute the ensemble.
//! Ensemble averages are accumulated in fixed chunk order, so re-running
//! an ensemble reproduces it bit for bit.

use crate::eads::{feedforward_gains, prepare_input, r_from_db, EadsError, LoopConfig};
use crate::fockspace::{
    displacement_matrix, gaussian_rescale_matrix, loss_channel, FockDensityMatrix, FockError,
    HomodyneSampler,
};
use crate::{merge_warning, Warning};
use ndarray::{Array2, ArrayView1};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

/// Trajectories per accumulation chunk. Chunks are summed in index order,
/// so the ensemble mean is independent of the thread count.
const ENSEMBLE_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Config(#[from] EadsError),
    /// All retries for one homodyne measurement produced outcomes whose
    /// conditional state had vanishing norm; the trajectory is dropped.
    #[error(
        "trajectory {index} discarded: vanishing outcome likelihood persisted \
         through {retries} retries at step {step}"
    )]
    Discarded {
        index: u64,
        step: usize,
        retries: usize,
    },
    #[error(
        "{discarded} of {total} trajectories were discarded, exceeding the \
         budget fraction {budget:.1e}"
    )]
    EnsembleQuality {
        discarded: usize,
        total: usize,
        budget: f64,
    },
}

/// Numerical knobs of the trajectory engine. The ancilla and the homodyne
/// conditioning are handled in closed form, so the only physical truncation
/// inside the loop is the signal's own Fock cutoff, and the defaults hold
/// the ensemble-vs-analytic moment bias far below the Monte Carlo noise of
/// any ensemble the CLI can produce.
#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    /// Fock levels kept for the signal while it circulates the loop.
    pub signal_cutoff: usize,
    /// Fock levels of the returned output state (after the feedforward
    /// displacement, which needs headroom above this).
    pub output_cutoff: usize,
    /// Multiplies every feedforward gain; 1 is the designed correction,
    /// 0 disables feedforward entirely.
    pub gain_scale: f64,
    /// Top-level population above which a truncation warning is attached.
    pub truncation_budget: f64,
    /// Grid points for the inverse-CDF leak sampler.
    pub sampler_points: usize,
    /// Half-width of the sampling window, in standard deviations of the
    /// leak's measurement noise beyond the signal state's own reach.
    pub sampler_halfwidth: f64,
    /// Redraws allowed when an outcome's conditional state has vanishing
    /// norm before the trajectory is discarded.
    pub max_retries: usize,
    /// Largest tolerated fraction of discarded trajectories per ensemble.
    pub discard_budget: f64,
    /// |correction| above which a headroom warning is attached.
    pub correction_budget: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            signal_cutoff: 18,
            output_cutoff: 20,
            gain_scale: 1.0,
            truncation_budget: 1e-4,
            sampler_points: 1201,
            sampler_halfwidth: 8.0,
            max_retries: 8,
            discard_budget: 1e-3,
            correction_budget: 3.5,
        }
    }
}

/// Everything shared by all trajectories of one ensemble: the prepared
/// input, the feedforward gains, the closed-form tap and ancilla
/// parameters, and the leak-outcome kernel tabulated on a fixed grid.
pub struct LoopContext {
    cfg: LoopConfig,
    opts: TrajectoryOptions,
    n_steps: usize,
    input: FockDensityMatrix,
    gains: Vec<f64>,
    /// Tap amplitudes √η_BS and √(1−η_BS).
    t: f64,
    r: f64,
    /// Ancilla momentum variance; its position variance enters only through
    /// the packet parameters below.
    vp: f64,
    /// Packet mixture: packet variable ν ~ N(0, σ_ν²) displaces the packet
    /// mean to u₀ = u0_coef·ν and tilts its envelope by √β·ν.
    sqrt_beta: f64,
    sigma_nu: f64,
    u0_coef: f64,
    /// Envelope curvature (1−η_BS)·Vp, the same for every step.
    w_env: f64,
    /// Fixed leak grid (in the frame of the tracked mean) and the kernel
    /// turning a signal density matrix into the leak pdf on that grid:
    /// row k is the upper triangle of ∫ h_m(y)·h_n(y)·N(q̃_k; r·y, σ_q²) dy
    /// packed with doubled off-diagonal entries, so that
    /// pdf_k = Σ_{m≤n} kernel[k, mn]·Re ρ_{mn}.
    qt_grid: Vec<f64>,
    leak_kernel: Array2<f64>,
    warnings: Vec<Warning>,
}

impl LoopContext {
    pub fn new(
        cfg: &LoopConfig,
        opts: &TrajectoryOptions,
        n_steps: usize,
    ) -> Result<Self, TrajectoryError> {
        cfg.validate()?;
        if cfg.eta_bs <= 0.0 {
            return Err(TrajectoryError::Config(EadsError::InvalidConfig(
                "the trajectory loop needs η_BS > 0: a fully reflective tap \
                 leaves no kept mode to condition"
                    .into(),
            )));
        }
        let mut warnings = Vec::new();
        let (input, w) = prepare_input(cfg, opts.signal_cutoff)?;
        for wi in w {
            merge_warning(&mut warnings, wi);
        }
        let t = cfg.eta_bs.sqrt();
        let r = (1.0 - cfg.eta_bs).sqrt();
        let r_a = r_from_db(cfg.r_a_db);
        let vx = 0.5 * (cfg.eta_a * (2.0 * r_a).exp() + 1.0 - cfg.eta_a);
        let vp = 0.5 * (cfg.eta_a * (-2.0 * r_a).exp() + 1.0 - cfg.eta_a);
        let beta = (vp - 0.25 / vx).max(0.0);
        let sqrt_beta = beta.sqrt();
        let sigma_nu = (4.0 * vx * vp).sqrt();
        let u0_coef = sqrt_beta / (2.0 * vp);
        let w_env = vp * r * r;
        let gains = feedforward_gains(cfg, n_steps);

        // The leak outcome (in the tracked-mean frame) is r·y − t·u₀ plus
        // noise of std σ_q; the grid spans the signal's Fock-basis reach in
        // y plus `sampler_halfwidth` σ_q of noise.
        let sigma_q = (cfg.eta_bs / (4.0 * vp)).sqrt();
        let dim = input.dim();
        let reach = ((2 * dim - 1) as f64).sqrt() + 3.0;
        let half = r * reach + opts.sampler_halfwidth * sigma_q;
        let points = opts.sampler_points.max(3);
        let step = 2.0 * half / (points - 1) as f64;
        let qt_grid: Vec<f64> = (0..points).map(|i| -half + step * i as f64).collect();
        let packed = dim * (dim + 1) / 2;
        let mut leak_kernel = Array2::<f64>::zeros((points, packed));
        let wq = 0.5 * r * r / (sigma_q * sigma_q);
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma_q);
        for (k, &qt) in qt_grid.iter().enumerate() {
            let g = gaussian_rescale_matrix(dim, 1.0, wq, r * qt / (sigma_q * sigma_q))?;
            let c = norm * (-0.5 * qt * qt / (sigma_q * sigma_q)).exp();
            let mut idx = 0;
            for m in 0..dim {
                for n in m..dim {
                    let v = c * g[[m, n]];
                    leak_kernel[[k, idx]] = if m == n { v } else { 2.0 * v };
                    idx += 1;
                }
            }
        }

        Ok(Self {
            cfg: cfg.clone(),
            opts: opts.clone(),
            n_steps,
            input,
            gains,
            t,
            r,
            vp,
            sqrt_beta,
            sigma_nu,
            u0_coef,
            w_env,
            qt_grid,
            leak_kernel,
            warnings,
        })
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn options(&self) -> &TrajectoryOptions {
        &self.opts
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn input(&self) -> &FockDensityMatrix {
        &self.input
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Warnings raised while preparing the shared states.
    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }
}

/// Per-trajectory bookkeeping: the measured leak outcomes, the applied
/// correction, and the output state's quadrature moments (first and second
/// raw moments, used for ensemble standard errors).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub outcomes: Vec<f64>,
    pub correction: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub msq_x: f64,
    pub msq_p: f64,
}

/// Result of an ensemble run.
pub struct EnsembleResult {
    /// Average of the accepted trajectories' output states.
    pub mean_state: FockDensityMatrix,
    /// One record per accepted trajectory, in trajectory order.
    pub records: Vec<TrajectoryRecord>,
    pub n_requested: usize,
    pub n_discarded: usize,
    pub seed: u64,
    pub warnings: Vec<Warning>,
}

fn resize_state(
    rho: &FockDensityMatrix,
    dim: usize,
) -> Result<(FockDensityMatrix, f64), FockError> {
    if dim >= rho.dim() {
        Ok((rho.embed(dim), 0.0))
    } else {
        rho.truncate_renorm(dim)
    }
}

/// Run one trajectory against a prepared context. `seed` identifies the
/// ensemble, `index` the trajectory within it; together they fix the
/// random stream.
pub fn run_trajectory_ctx(
    ctx: &LoopContext,
    seed: u64,
    index: u64,
) -> Result<(FockDensityMatrix, TrajectoryRecord, Vec<Warning>), TrajectoryError> {
    let opts = &ctx.opts;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let dim = ctx.input.dim();
    let mut rho = ctx.input.clone();
    let mut mu = 0.0f64;
    let mut outcomes = Vec::with_capacity(ctx.n_steps);
    let mut warnings = Vec::new();
    let mut packed = vec![0.0f64; dim * (dim + 1) / 2];
    let mut top_population = 0.0f64;

    for step in 0..ctx.n_steps {
        let mut idx = 0;
        for m in 0..dim {
            for n in m..dim {
                packed[idx] = rho.matrix()[[m, n]].re;
                idx += 1;
            }
        }
        let pdf = ctx.leak_kernel.dot(&ArrayView1::from(&packed[..]));
        let sampler = HomodyneSampler::from_pdf(
            ctx.qt_grid.clone(),
            pdf.as_slice().expect("kernel product is contiguous"),
        )?;
        let nu: f64 =
            ctx.sigma_nu * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let u0 = ctx.u0_coef * nu;

        let mut accepted = None;
        for _ in 0..=opts.max_retries {
            let q = sampler.draw(&mut rng) + ctx.r * mu - ctx.t * u0;
            let mu_next = (mu - ctx.r * q) / ctx.t;
            let v0 = ctx.r * mu_next - ctx.t * q;
            let lambda = ctx.r * (ctx.sqrt_beta * nu - 2.0 * ctx.vp * v0);
            let kernel = gaussian_rescale_matrix(dim, ctx.t, ctx.w_env, lambda)?
                .mapv(|v| C64::new(v, 0.0));
            let cond = kernel.dot(rho.matrix()).dot(&kernel.t());
            let trace: f64 = (0..dim).map(|i| cond[[i, i]].re).sum();
            if trace.is_finite() && trace > 1e-12 {
                accepted = Some((cond.mapv(|z| z / trace), q, mu_next));
                break;
            }
        }
        let Some((cond, q, mu_next)) = accepted else {
            return Err(TrajectoryError::Discarded {
                index,
                step,
                retries: opts.max_retries,
            });
        };
        outcomes.push(q);
        let cond = FockDensityMatrix::new(cond)?;
        top_population = top_population.max(cond.top_population().abs());
        rho = loss_channel(&cond, ctx.cfg.eta_loop)?;
        mu = ctx.cfg.eta_loop.sqrt() * mu_next;
    }
    if top_population > opts.truncation_budget {
        merge_warning(
            &mut warnings,
            Warning::Truncation {
                context: "trajectory_signal",
                population: top_population,
                budget: opts.truncation_budget,
            },
        );
    }

    let correction: f64 = opts.gain_scale
        * ctx.gains
            .iter()
            .zip(outcomes.iter())
            .map(|(g, x)| g * x)
            .sum::<f64>();
    if correction.abs() > opts.correction_budget {
        merge_warning(
            &mut warnings,
            Warning::CorrectionMagnitude {
                value: correction,
                budget: opts.correction_budget,
            },
        );
    }

    let shift = mu + correction;
    let out = if shift.abs() < 1e-12 {
        let (out, lost) = resize_state(&rho, opts.output_cutoff)?;
        if lost > opts.truncation_budget {
            merge_warning(
                &mut warnings,
                Warning::Truncation {
                    context: "trajectory_output",
                    population: lost,
                    budget: opts.truncation_budget,
                },
            );
        }
        out
    } else {
        let extra = ((1.5 * shift * shift).ceil() as usize).min(24);
        let headroom = (opts.output_cutoff + 8 + extra).max(rho.dim());
        let big = rho.embed(headroom);
        let disp = displacement_matrix(shift, 0.0, headroom);
        let moved = big.conjugate_by(&disp)?;
        let (out, lost) = moved.truncate_renorm(opts.output_cutoff.min(headroom))?;
        if lost > opts.truncation_budget {
            merge_warning(
                &mut warnings,
                Warning::Truncation {
                    context: "trajectory_output",
                    population: lost,
                    budget: opts.truncation_budget,
                },
            );
        }
        out
    };

    let qm = out.quadrature_moments();
    let record = TrajectoryRecord {
        index,
        outcomes,
        correction,
        mean_x: qm.mean_x,
        mean_p: qm.mean_p,
        msq_x: qm.var_x + qm.mean_x * qm.mean_x,
        msq_p: qm.var_p + qm.mean_p * qm.mean_p,
    };
    Ok((out, record, warnings))
}

struct ChunkAccum {
    sum: Array2<C64>,
    records: Vec<TrajectoryRecord>,
    discarded: usize,
    warnings: Vec<Warning>,
}

/// Run a full ensemble against a prepared context.
pub fn run_ensemble_ctx(
    ctx: &LoopContext,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleResult, TrajectoryError> {
    if n_traj == 0 {
        return Err(TrajectoryError::Config(EadsError::InvalidConfig(
            "ensemble needs at least one trajectory".into(),
        )));
    }
    let d_out = ctx.opts.output_cutoff;
    let n_chunks = n_traj.div_ceil(ENSEMBLE_CHUNK);
    let partials: Vec<Result<ChunkAccum, TrajectoryError>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * ENSEMBLE_CHUNK;
            let end = ((c + 1) * ENSEMBLE_CHUNK).min(n_traj);
            let mut acc = ChunkAccum {
                sum: Array2::zeros((d_out, d_out)),
                records: Vec::with_capacity(end - start),
                discarded: 0,
                warnings: Vec::new(),
            };
            for i in start..end {
                match run_trajectory_ctx(ctx, seed, i as u64) {
                    Ok((state, rec, w)) => {
                        acc.sum += state.matrix();
                        acc.records.push(rec);
                        for wi in w {
                            merge_warning(&mut acc.warnings, wi);
                        }
                    }
                    Err(TrajectoryError::Discarded { .. }) => acc.discarded += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .collect();

    let mut sum = Array2::<C64>::zeros((d_out, d_out));
    let mut records = Vec::with_capacity(n_traj);
    let mut discarded = 0usize;
    let mut warnings = ctx.warnings.clone();
    for partial in partials {
        let acc = partial?;
        sum += &acc.sum;
        records.extend(acc.records);
        discarded += acc.discarded;
        for w in acc.warnings {
            merge_warning(&mut warnings, w);
        }
    }

    let accepted = n_traj - discarded;
    if accepted == 0 || discarded as f64 / n_traj as f64 > ctx.opts.discard_budget {
        return Err(TrajectoryError::EnsembleQuality {
            discarded,
            total: n_traj,
            budget: ctx.opts.discard_budget,
        });
    }
    let mean = sum.mapv(|z| z / accepted as f64);
    let mean_state = FockDensityMatrix::new(mean)?.hermitized().normalized()?;
    Ok(EnsembleResult {
        mean_state,
        records,
        n_requested: n_traj,
        n_discarded: discarded,
        seed,
        warnings,
    })
}

/// Prepare a context and run an ensemble in one call.
pub fn run_ensemble(
    cfg: &LoopConfig,
    opts: &TrajectoryOptions,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleResult, TrajectoryError> {
    let ctx = LoopContext::new(cfg, opts, n_steps)?;
    run_ensemble_ctx(&ctx, n_traj, seed)
}

/// Quadrature statistics of the ensemble-mean state, with Monte Carlo
/// standard errors.
///
/// Means of the mean state are plain averages of per-trajectory means.
/// Variances of the mean state are `E[⟨q²⟩] − E[⟨q⟩]²`, whose standard
/// error follows from the delta method: the influence of trajectory i on
/// `var_q` is `⟨q²⟩_i − 2·E[⟨q⟩]·⟨q⟩_i`, and the SE is the sample standard
/// deviation of that influence over √n.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleMoments {
    pub n: usize,
    pub mean_x: f64,
    pub se_mean_x: f64,
    pub mean_p: f64,
    pub se_mean_p: f64,
    pub var_x: f64,
    pub se_var_x: f64,
    pub var_p: f64,
    pub se_var_p: f64,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

pub fn ensemble_moments(records: &[TrajectoryRecord]) -> EnsembleMoments {
    let n = records.len();
    assert!(n > 0, "ensemble_moments needs at least one record");
    let (mean_x, se_mean_x) = mean_and_se(records.iter().map(|r| r.mean_x), n);
    let (mean_p, se_mean_p) = mean_and_se(records.iter().map(|r| r.mean_p), n);
    let (msq_x, _) = mean_and_se(records.iter().map(|r| r.msq_x), n);
    let (msq_p, _) = mean_and_se(records.iter().map(|r| r.msq_p), n);
    let (_, se_var_x) = mean_and_se(
        records.iter().map(move |r| r.msq_x - 2.0 * mean_x * r.mean_x),
        n,
    );
    let (_, se_var_p) = mean_and_se(
        records.iter().map(move |r| r.msq_p - 2.0 * mean_p * r.mean_p),
        n,
    );
    EnsembleMoments {
        n,
        mean_x,
        se_mean_x,
        mean_p,
        se_mean_p,
        var_x: msq_x - mean_x * mean_x,
        se_var_x,
        var_p: msq_p - mean_p * mean_p,
        se_var_p,
    }
}
