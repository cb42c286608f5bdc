//! Wigner-function representation on a square phase-space grid, the action
//! of Gaussian channels on it, and conversions to and from Fock space.
//!
//! Conventions: ħ = 1, vacuum Wigner function W(x,p) = (1/π)·e^(−x²−p²)
//! with unit integral ∫W dx dp = 1 and vacuum variance 1/2. The overlap of
//! two states is 2π·∫W₁W₂ dx dp, which for pure states equals |⟨ψ₁|ψ₂⟩|².
//!
//! Fock ↔ Wigner conversions use the Laguerre kernel of the number basis,
//!
//! W_{mn}(x,p) = (1/π)(−1)ⁿ√(n!/m!)·(√2(x−ip))^{m−n}·e^(−u)·L_n^{m−n}(2u)
//!
//! for m ≥ n with u = x² + p², evaluated through stable factor chains
//! (no bare factorials).

use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::fockspace::{FockDensityMatrix, QuadMoments};
use crate::linalg;
use crate::Warning;

/// Wigner values with magnitude below this are treated as zero when
/// classifying negativity; grid-level noise sits well under it.
pub const W0_NOISE_FLOOR: f64 = -1e-6;

/// Maximum |W| allowed on the grid boundary before results are flagged as
/// leaking probability mass off the grid.
pub const GRID_BOUNDARY_BUDGET: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum PhaseSpaceError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids do not match in {0}")]
    GridMismatch(&'static str),
    #[error("channel scale matrix is singular: {0}")]
    SingularChannel(String),
}

/// Square, uniformly spaced grid covering [min, max] on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self, PhaseSpaceError> {
        if !(min < max) || n < 2 {
            return Err(PhaseSpaceError::InvalidGrid(format!(
                "need min < max and n ≥ 2, got [{min}, {max}] with {n} points"
            )));
        }
        Ok(Self { min, max, n })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|i| self.min + h * i as f64).collect()
    }
}

/// Wigner function sampled on a square grid: `w[[i, j]] = W(xs[i], ps[j])`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub w: Array2<f64>,
}

fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

fn nearest_index(axis: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &a) in axis.iter().enumerate() {
        let d = (a - value).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

impl WignerGrid {
    pub fn step(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    /// ∫W dx dp by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        let (nx, np) = (self.xs.len(), self.ps.len());
        let mut s = 0.0;
        for i in 0..nx {
            let wi = trapezoid_weight(i, nx);
            for j in 0..np {
                s += wi * trapezoid_weight(j, np) * self.w[[i, j]];
            }
        }
        s * self.step() * self.step()
    }

    /// Most negative value on the grid and where it occurs.
    pub fn minimum(&self) -> (f64, (f64, f64)) {
        let mut best = f64::INFINITY;
        let mut at = (self.xs[0], self.ps[0]);
        for i in 0..self.xs.len() {
            for j in 0..self.ps.len() {
                if self.w[[i, j]] < best {
                    best = self.w[[i, j]];
                    at = (self.xs[i], self.ps[j]);
                }
            }
        }
        (best, at)
    }

    /// Value at the grid point closest to the phase-space origin.
    pub fn value_at_origin(&self) -> f64 {
        let ix = nearest_index(&self.xs, 0.0);
        let jp = nearest_index(&self.ps, 0.0);
        self.w[[ix, jp]]
    }

    /// Negativity witness W₀: the minimum of the Wigner function while it
    /// attains genuinely negative values (below the noise floor), and the
    /// value at the origin once it does not. Returns the value and the
    /// location it was read from.
    pub fn w0_metric(&self) -> (f64, (f64, f64)) {
        self.w0_metric_with_floor(W0_NOISE_FLOOR)
    }

    /// W₀ with an explicit negativity floor. Exact engines use the default
    /// roundoff-scale floor; tomographic reconstructions carry statistical
    /// ripples far above roundoff, so their callers pass a floor matched to
    /// the sample size instead.
    pub fn w0_metric_with_floor(&self, floor: f64) -> (f64, (f64, f64)) {
        let (min, at) = self.minimum();
        if min < floor {
            (min, at)
        } else {
            let ix = nearest_index(&self.xs, 0.0);
            let jp = nearest_index(&self.ps, 0.0);
            (self.w[[ix, jp]], (self.xs[ix], self.ps[jp]))
        }
    }

    /// First and second moments of the quadratures under W.
    pub fn moments(&self) -> QuadMoments {
        let (nx, np) = (self.xs.len(), self.ps.len());
        let h2 = self.step() * self.step();
        let (mut m0, mut mx, mut mp) = (0.0, 0.0, 0.0);
        let (mut mxx, mut mpp, mut mxp) = (0.0, 0.0, 0.0);
        for i in 0..nx {
            let wx = trapezoid_weight(i, nx);
            let x = self.xs[i];
            for j in 0..np {
                let wt = wx * trapezoid_weight(j, np) * self.w[[i, j]] * h2;
                let p = self.ps[j];
                m0 += wt;
                mx += wt * x;
                mp += wt * p;
                mxx += wt * x * x;
                mpp += wt * p * p;
                mxp += wt * x * p;
            }
        }
        let (ex, ep) = (mx / m0, mp / m0);
        QuadMoments {
            mean_x: ex,
            mean_p: ep,
            var_x: mxx / m0 - ex * ex,
            var_p: mpp / m0 - ep * ep,
            cov_xp: mxp / m0 - ex * ep,
        }
    }

    /// Keep every `stride`-th point along both axes (index 0 always kept).
    /// Overlap integrals converge fast enough that coarse subsampling costs
    /// little accuracy while cutting quadratic work.
    pub fn subsample(&self, stride: usize) -> WignerGrid {
        assert!(stride >= 1);
        let xs: Vec<f64> = self.xs.iter().copied().step_by(stride).collect();
        let ps: Vec<f64> = self.ps.iter().copied().step_by(stride).collect();
        let mut w = Array2::zeros((xs.len(), ps.len()));
        for (ii, i) in (0..self.xs.len()).step_by(stride).enumerate() {
            for (jj, j) in (0..self.ps.len()).step_by(stride).enumerate() {
                w[[ii, jj]] = self.w[[i, j]];
            }
        }
        WignerGrid { xs, ps, w }
    }

    fn boundary_max(&self) -> f64 {
        let (nx, np) = (self.xs.len(), self.ps.len());
        let mut m: f64 = 0.0;
        for i in 0..nx {
            m = m.max(self.w[[i, 0]].abs()).max(self.w[[i, np - 1]].abs());
        }
        for j in 0..np {
            m = m.max(self.w[[0, j]].abs()).max(self.w[[nx - 1, j]].abs());
        }
        m
    }

    fn boundary_warning(&self) -> Option<Warning> {
        let b = self.boundary_max();
        (b > GRID_BOUNDARY_BUDGET).then_some(Warning::GridBoundary {
            boundary_max: b,
            budget: GRID_BOUNDARY_BUDGET,
        })
    }
}

/// Wigner values above this count as signal when classifying negativity.
pub fn effectively_nonnegative(w_min: f64) -> bool {
    w_min >= W0_NOISE_FLOOR
}

// ---------------------------------------------------------------------------
// Fock → Wigner
// ---------------------------------------------------------------------------

/// Off-diagonal coefficient chains |c_{n,d}| = √(n!/(n+d)!)·(no sign);
/// returns c[d][n] including the (√2)^d already folded into the z powers,
/// i.e. just √(n!/(n+d)!) with c[d][0] = 1/√(d!).
fn coefficient_chains(dim: usize) -> Vec<Vec<f64>> {
    let mut chains = Vec::with_capacity(dim);
    let mut c0d = 1.0;
    for d in 0..dim {
        if d > 0 {
            c0d /= (d as f64).sqrt();
        }
        let levels = dim - d;
        let mut chain = Vec::with_capacity(levels);
        let mut c = c0d;
        chain.push(c);
        for n in 1..levels {
            c *= ((n as f64) / ((n + d) as f64)).sqrt();
            chain.push(c);
        }
        chains.push(chain);
    }
    chains
}

/// Evaluate W(x,p) for a density matrix at one phase-space point, using
/// precomputed coefficient chains. `lag` is scratch space of length ≥ dim.
fn wigner_point(
    rho: &Array2<C64>,
    chains: &[Vec<f64>],
    x: f64,
    p: f64,
    lag: &mut [f64],
) -> f64 {
    let dim = rho.nrows();
    let u = x * x + p * p;
    let eu = (-u).exp();
    if eu == 0.0 {
        return 0.0;
    }
    let t = 2.0 * u;
    let zbar = C64::new(x, -p) * std::f64::consts::SQRT_2;
    let mut zpow = C64::new(1.0, 0.0);
    let mut total = 0.0;
    for d in 0..dim {
        let levels = dim - d;
        // generalized Laguerre ladder L_n^d(t)
        lag[0] = 1.0;
        if levels > 1 {
            lag[1] = 1.0 + d as f64 - t;
        }
        for n in 1..levels.saturating_sub(1) {
            let nf = n as f64;
            lag[n + 1] =
                ((2.0 * nf + 1.0 + d as f64 - t) * lag[n] - (nf + d as f64) * lag[n - 1])
                    / (nf + 1.0);
        }
        let chain = &chains[d];
        let mut s = C64::new(0.0, 0.0);
        let mut sign = 1.0;
        for n in 0..levels {
            let r = rho[[n + d, n]];
            if r.norm_sqr() > 1e-300 {
                s += r * (sign * chain[n] * lag[n]);
            }
            sign = -sign;
        }
        let contrib = zpow * s;
        total += if d == 0 { contrib.re } else { 2.0 * contrib.re };
        zpow *= zbar;
    }
    total * eu / std::f64::consts::PI
}

/// Render a Fock-space density matrix onto a Wigner grid. Warns when the
/// state's tails hit the grid boundary.
pub fn wigner_from_fock(rho: &FockDensityMatrix, grid: &GridSpec) -> (WignerGrid, Option<Warning>) {
    let xs = grid.points();
    let ps = xs.clone();
    let dim = rho.dim();
    let chains = coefficient_chains(dim);
    let mut w = Array2::zeros((xs.len(), ps.len()));
    let mut lag = vec![0.0; dim.max(1)];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            w[[i, j]] = wigner_point(rho.matrix(), &chains, x, p, &mut lag);
        }
    }
    let out = WignerGrid { xs, ps, w };
    let warning = out.boundary_warning();
    (out, warning)
}

// ---------------------------------------------------------------------------
// Wigner → Fock
// ---------------------------------------------------------------------------

/// Project a Wigner grid back onto number-basis matrix elements
/// ρ_{mn} = 2π·∫W·W_{mn}* dx dp, then repair numerical artifacts: the
/// result is hermitized, negative eigenvalues are clipped to zero, and the
/// trace renormalized. A clip beyond roundoff is reported as a warning.
pub fn fock_from_wigner(
    grid: &WignerGrid,
    dim: usize,
) -> Result<(FockDensityMatrix, Vec<Warning>), PhaseSpaceError> {
    if grid.xs.len() < 2 || grid.ps.len() < 2 {
        return Err(PhaseSpaceError::InvalidGrid("grid too small".into()));
    }
    let chains = coefficient_chains(dim);
    let (nx, np) = (grid.xs.len(), grid.ps.len());
    let h2 = grid.step() * grid.step();
    // acc[d][n] accumulates Σ W·conj(W_{n+d,n}) over grid points
    let mut acc: Vec<Vec<C64>> = (0..dim).map(|d| vec![C64::new(0.0, 0.0); dim - d]).collect();
    let mut lag = vec![0.0; dim.max(1)];
    for i in 0..nx {
        let x = grid.xs[i];
        let wx = trapezoid_weight(i, nx);
        for j in 0..np {
            let p = grid.ps[j];
            let wval = grid.w[[i, j]];
            if wval == 0.0 {
                continue;
            }
            let wt = wx * trapezoid_weight(j, np) * wval * h2;
            let u = x * x + p * p;
            let eu = (-u).exp();
            if eu == 0.0 {
                continue;
            }
            let t = 2.0 * u;
            // conj(W_mn) carries (√2(x+ip))^d
            let z = C64::new(x, p) * std::f64::consts::SQRT_2;
            let mut zpow = C64::new(1.0, 0.0);
            for d in 0..dim {
                let levels = dim - d;
                lag[0] = 1.0;
                if levels > 1 {
                    lag[1] = 1.0 + d as f64 - t;
                }
                for n in 1..levels.saturating_sub(1) {
                    let nf = n as f64;
                    lag[n + 1] = ((2.0 * nf + 1.0 + d as f64 - t) * lag[n]
                        - (nf + d as f64) * lag[n - 1])
                        / (nf + 1.0);
                }
                let chain = &chains[d];
                let base = zpow * (wt * eu);
                let mut sign = 1.0;
                for n in 0..levels {
                    acc[d][n] += base * (sign * chain[n] * lag[n]);
                    sign = -sign;
                }
                zpow *= z;
            }
        }
    }
    let scale = 2.0; // 2π/π from the kernel's own 1/π
    let mut m = Array2::<C64>::zeros((dim, dim));
    for d in 0..dim {
        for n in 0..dim - d {
            let v = acc[d][n] * scale;
            m[[n + d, n]] = v;
            m[[n, n + d]] = v.conj();
        }
    }
    // spectral cleanup: clip negative eigenvalues, renormalize
    let min_eig = linalg::min_eig_hermitian(&m);
    let clipped = linalg::funm_hermitian(&m, |l| l.max(0.0));
    let trace: f64 = (0..dim).map(|i| clipped[[i, i]].re).sum();
    if trace < 1e-12 {
        return Err(PhaseSpaceError::InvalidGrid(
            "reconstructed state has vanishing trace".into(),
        ));
    }
    let rho = FockDensityMatrix::new(clipped.mapv(|v| v / trace))
        .expect("square by construction");
    let mut warnings = Vec::new();
    if min_eig < -1e-6 {
        warnings.push(Warning::BridgeClip {
            min_eigenvalue: min_eig,
        });
    }
    let pop = rho.top_population();
    if pop > crate::fockspace::DEFAULT_TRUNCATION_BUDGET {
        warnings.push(Warning::Truncation {
            context: "fock_from_wigner",
            population: pop,
            budget: crate::fockspace::DEFAULT_TRUNCATION_BUDGET,
        });
    }
    Ok((rho, warnings))
}

// ---------------------------------------------------------------------------
// Gaussian channels on the grid
// ---------------------------------------------------------------------------

/// A Gaussian channel z → S·z + noise, with S diagonal: the Wigner function
/// maps as W'(z) = ∫N(z − S·z′ − shift; noise)·W(z′) dz′.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianChannelSpec {
    /// Diagonal of the scale matrix S = diag(s_x, s_p).
    pub scale: [f64; 2],
    /// Added noise covariance (v_xx, v_pp, v_xp).
    pub noise: [f64; 3],
    /// Mean displacement added to the output.
    pub shift: [f64; 2],
}

impl GaussianChannelSpec {
    pub fn identity() -> Self {
        Self {
            scale: [1.0, 1.0],
            noise: [0.0, 0.0, 0.0],
            shift: [0.0, 0.0],
        }
    }

    /// The channel applying `self` first, then `after`:
    /// S = S_a·S_s, V = S_a·V_s·S_aᵀ + V_a, shift = S_a·shift_s + shift_a.
    pub fn then(&self, after: &Self) -> Self {
        let [ax, ap] = after.scale;
        Self {
            scale: [ax * self.scale[0], ap * self.scale[1]],
            noise: [
                ax * ax * self.noise[0] + after.noise[0],
                ap * ap * self.noise[1] + after.noise[1],
                ax * ap * self.noise[2] + after.noise[2],
            ],
            shift: [
                ax * self.shift[0] + after.shift[0],
                ap * self.shift[1] + after.shift[1],
            ],
        }
    }
}

/// Discrete Gaussian kernel with variance v on a grid of step h, truncated
/// at ±6σ and normalized to unit sum.
fn gaussian_kernel(v: f64, h: f64) -> Vec<f64> {
    let sigma = v.sqrt();
    let half = ((6.0 * sigma / h).ceil() as usize).max(1);
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let z = (i as f64 - half as f64) * h;
            (-0.5 * z * z / v).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    for w in &mut k {
        *w /= total;
    }
    k
}

fn convolve_axis0(w: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (nx, np) = w.dim();
    let half = kernel.len() / 2;
    let mut out = Array2::zeros((nx, np));
    for i in 0..nx {
        for (k, &kv) in kernel.iter().enumerate() {
            let src = i as isize + half as isize - k as isize;
            if src < 0 || src >= nx as isize {
                continue;
            }
            let src = src as usize;
            for j in 0..np {
                out[[i, j]] += kv * w[[src, j]];
            }
        }
    }
    out
}

fn convolve_axis1(w: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (nx, np) = w.dim();
    let half = kernel.len() / 2;
    let mut out = Array2::zeros((nx, np));
    for i in 0..nx {
        for (k, &kv) in kernel.iter().enumerate() {
            let src_off = half as isize - k as isize;
            let (j_lo, j_hi) = if src_off >= 0 {
                (0usize, np - (src_off as usize).min(np))
            } else {
                ((-src_off) as usize, np)
            };
            for j in j_lo..j_hi {
                out[[i, j]] += kv * w[[i, (j as isize + src_off) as usize]];
            }
        }
    }
    out
}

/// Full 2-D correlated Gaussian kernel; only needed when v_xp ≠ 0.
fn convolve_2d(w: &Array2<f64>, noise: [f64; 3], h: f64) -> Array2<f64> {
    let [vxx, vpp, vxp] = noise;
    let det = vxx * vpp - vxp * vxp;
    let half_x = ((6.0 * vxx.sqrt() / h).ceil() as usize).max(1);
    let half_p = ((6.0 * vpp.sqrt() / h).ceil() as usize).max(1);
    let mut kernel = Array2::zeros((2 * half_x + 1, 2 * half_p + 1));
    let mut total = 0.0;
    for a in 0..=2 * half_x {
        let zx = (a as f64 - half_x as f64) * h;
        for b in 0..=2 * half_p {
            let zp = (b as f64 - half_p as f64) * h;
            let q = (vpp * zx * zx - 2.0 * vxp * zx * zp + vxx * zp * zp) / det;
            let v = (-0.5 * q).exp();
            kernel[[a, b]] = v;
            total += v;
        }
    }
    kernel.mapv_inplace(|v| v / total);
    let (nx, np) = w.dim();
    let mut out = Array2::zeros((nx, np));
    for i in 0..nx {
        for j in 0..np {
            let v = w[[i, j]];
            if v == 0.0 {
                continue;
            }
            for a in 0..=2 * half_x {
                let ti = i as isize + a as isize - half_x as isize;
                if ti < 0 || ti >= nx as isize {
                    continue;
                }
                for b in 0..=2 * half_p {
                    let tj = j as isize + b as isize - half_p as isize;
                    if tj < 0 || tj >= np as isize {
                        continue;
                    }
                    out[[ti as usize, tj as usize]] += v * kernel[[a, b]];
                }
            }
        }
    }
    out
}

fn check_channel(ch: &GaussianChannelSpec) -> Result<(), PhaseSpaceError> {
    let [sx, sp] = ch.scale;
    if sx.abs() < 1e-12 || sp.abs() < 1e-12 {
        return Err(PhaseSpaceError::SingularChannel(format!(
            "scale = diag({sx}, {sp})"
        )));
    }
    let [vxx, vpp, _] = ch.noise;
    if vxx < -1e-12 || vpp < -1e-12 {
        return Err(PhaseSpaceError::SingularChannel(format!(
            "negative noise variance ({vxx}, {vpp})"
        )));
    }
    Ok(())
}

/// Added-noise step shared by the channel maps: a normalized discrete
/// Gaussian convolution per axis, or the full 2-D kernel when the noise is
/// correlated. Noise below 1e-10 is skipped.
fn apply_noise(scaled: Array2<f64>, noise: [f64; 3], h: f64) -> Array2<f64> {
    let [vxx, vpp, vxp] = noise;
    if vxp.abs() > 1e-14 {
        return convolve_2d(&scaled, noise, h);
    }
    let mut cur = scaled;
    if vxx > 1e-10 {
        cur = convolve_axis0(&cur, &gaussian_kernel(vxx, h));
    }
    if vpp > 1e-10 {
        cur = convolve_axis1(&cur, &gaussian_kernel(vpp, h));
    }
    cur
}

/// Push a Wigner function through a Gaussian channel: first the scale map
/// W(z) → W(S⁻¹(z − shift))/|det S| by bilinear resampling, then the added
/// noise as a normalized discrete convolution. Warns when the output crowds
/// the grid boundary.
///
/// The resampling costs O(h²) accuracy; prefer [`channel_output_from_fock`]
/// whenever the source state is available in Fock form.
pub fn apply_gaussian_channel(
    win: &WignerGrid,
    ch: &GaussianChannelSpec,
) -> Result<(WignerGrid, Option<Warning>), PhaseSpaceError> {
    check_channel(ch)?;
    let [sx, sp] = ch.scale;
    let h = win.step();
    let (nx, np) = (win.xs.len(), win.ps.len());
    let (x0, p0) = (win.xs[0], win.ps[0]);
    let inv_det = 1.0 / (sx * sp).abs();
    let mut scaled = Array2::zeros((nx, np));
    for i in 0..nx {
        let xsrc = (win.xs[i] - ch.shift[0]) / sx;
        let fi = (xsrc - x0) / h;
        for j in 0..np {
            let psrc = (win.ps[j] - ch.shift[1]) / sp;
            let fj = (psrc - p0) / h;
            if fi < 0.0 || fj < 0.0 || fi > (nx - 1) as f64 || fj > (np - 1) as f64 {
                continue;
            }
            let (i0, j0) = (fi.floor() as usize, fj.floor() as usize);
            let (i1, j1) = ((i0 + 1).min(nx - 1), (j0 + 1).min(np - 1));
            let (tx, tp) = (fi - i0 as f64, fj - j0 as f64);
            let v = (1.0 - tx) * (1.0 - tp) * win.w[[i0, j0]]
                + tx * (1.0 - tp) * win.w[[i1, j0]]
                + (1.0 - tx) * tp * win.w[[i0, j1]]
                + tx * tp * win.w[[i1, j1]];
            scaled[[i, j]] = v * inv_det;
        }
    }
    let out = apply_noise(scaled, ch.noise, h);
    let grid = WignerGrid {
        xs: win.xs.clone(),
        ps: win.ps.clone(),
        w: out,
    };
    let warning = grid.boundary_warning();
    Ok((grid, warning))
}

/// Gaussian-channel output rendered straight from a Fock-space source: the
/// scale map is evaluated exactly at each pre-image point (no resampling),
/// then the added noise is convolved in. This keeps the only discretization
/// error in the noise kernel and any later grid projection.
pub fn channel_output_from_fock(
    rho: &FockDensityMatrix,
    ch: &GaussianChannelSpec,
    grid: &GridSpec,
) -> Result<(WignerGrid, Option<Warning>), PhaseSpaceError> {
    check_channel(ch)?;
    let [sx, sp] = ch.scale;
    let xs = grid.points();
    let ps = xs.clone();
    let dim = rho.dim();
    let chains = coefficient_chains(dim);
    let inv_det = 1.0 / (sx * sp).abs();
    let mut scaled = Array2::zeros((xs.len(), ps.len()));
    let mut lag = vec![0.0; dim.max(1)];
    for (i, &x) in xs.iter().enumerate() {
        let xsrc = (x - ch.shift[0]) / sx;
        for (j, &p) in ps.iter().enumerate() {
            let psrc = (p - ch.shift[1]) / sp;
            scaled[[i, j]] =
                wigner_point(rho.matrix(), &chains, xsrc, psrc, &mut lag) * inv_det;
        }
    }
    let out = apply_noise(scaled, ch.noise, grid.step());
    let grid = WignerGrid { xs, ps, w: out };
    let warning = grid.boundary_warning();
    Ok((grid, warning))
}

/// State overlap 2π·∫W_a·W_b dx dp (equals fidelity when either state is
/// pure). Panics if the grids differ.
pub fn overlap(a: &WignerGrid, b: &WignerGrid) -> f64 {
    assert_eq!(a.xs.len(), b.xs.len(), "overlap grids must match");
    assert_eq!(a.ps.len(), b.ps.len(), "overlap grids must match");
    assert!(
        (a.xs[0] - b.xs[0]).abs() < 1e-12 && (a.step() - b.step()).abs() < 1e-12,
        "overlap grids must match"
    );
    let (nx, np) = (a.xs.len(), a.ps.len());
    let mut s = 0.0;
    for i in 0..nx {
        let wi = trapezoid_weight(i, nx);
        for j in 0..np {
            s += wi * trapezoid_weight(j, np) * a.w[[i, j]] * b.w[[i, j]];
        }
    }
    2.0 * std::f64::consts::PI * s * a.step() * a.step()
}
