//! Small dense linear-algebra kernels: matrix exponentials by scaling and
//! squaring, and a cyclic Jacobi eigensolver used for Hermitian matrix
//! functions (square roots, positivity checks, Uhlmann fidelity).
//!
//! Everything here targets the modest dimensions of truncated Fock spaces
//! (tens of levels), where simplicity and determinism beat asymptotics.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Scale-and-square tolerance: after scaling the 1-norm below 1/2, a
/// 17-term Taylor series is converged to < 1e-19 relative.
const TAYLOR_TERMS: usize = 17;

fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = (0..a.nrows()).map(|i| a[[i, j]].norm()).sum();
        best = best.max(s);
    }
    best
}

/// exp(A) for a general complex square matrix.
pub(crate) fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = one_norm(a);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new(1.0 / f64::powi(2.0, s as i32), 0.0);
    let x = a.mapv(|v| v * scale);

    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..=TAYLOR_TERMS {
        term = term.dot(&x);
        term.mapv_inplace(|v| v / k as f64);
        result = &result + &term;
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// exp(A) for a real square matrix (used for beamsplitter sector blocks,
/// whose generators are real skew-symmetric).
pub(crate) fn expm_real(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm_real requires a square matrix");
    let mut norm = 0.0f64;
    for j in 0..n {
        let s: f64 = (0..n).map(|i| a[[i, j]].abs()).sum();
        norm = norm.max(s);
    }
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let x = a.mapv(|v| v / f64::powi(2.0, s as i32));

    let mut result = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=TAYLOR_TERMS {
        term = term.dot(&x);
        term.mapv_inplace(|v| v / k as f64);
        result = &result + &term;
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Eigendecomposition of a real symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns `(eigenvalues, v)` with `a = v · diag(eigenvalues) · vᵀ` and the
/// eigenvectors in the columns of `v`. Unsorted.
pub(crate) fn eigh_real(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigh_real requires a square matrix");
    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(n);
    let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * (1.0 + fro);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..n).map(|i| a[[i, i]]).collect();
    (eig, v)
}

/// Embed a Hermitian `H = A + iB` as the real symmetric `[[A, -B], [B, A]]`.
fn embed_hermitian(h: &Array2<C64>) -> Array2<f64> {
    let n = h.nrows();
    let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = 0.5 * (h[[i, j]] + h[[j, i]].conj());
            m[[i, j]] = z.re;
            m[[n + i, n + j]] = z.re;
            m[[n + i, j]] = z.im;
            m[[i, n + j]] = -z.im;
        }
    }
    m
}

/// Apply a real function to the spectrum of a Hermitian matrix:
/// `f(H) = V f(Λ) V†`. The input is hermitized first, so tiny asymmetries
/// from upstream arithmetic are tolerated.
pub(crate) fn funm_hermitian(h: &Array2<C64>, f: impl Fn(f64) -> f64) -> Array2<C64> {
    let n = h.nrows();
    let m = embed_hermitian(h);
    let (eig, v) = eigh_real(&m);
    // F = V f(Λ) Vᵀ, built column-scaled to avoid a second allocation pass.
    let mut scaled = v.clone();
    for (k, lam) in eig.iter().enumerate() {
        let flam = f(*lam);
        for i in 0..2 * n {
            scaled[[i, k]] *= flam;
        }
    }
    let fm = scaled.dot(&v.t());
    let mut out = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            // The two real copies of each complex eigenvector average here,
            // halving rounding noise.
            let re = 0.5 * (fm[[i, j]] + fm[[n + i, n + j]]);
            let im = 0.5 * (fm[[n + i, j]] - fm[[i, n + j]]);
            out[[i, j]] = C64::new(re, im);
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix (each true eigenvalue appears once).
pub(crate) fn eigvals_hermitian(h: &Array2<C64>) -> Vec<f64> {
    let m = embed_hermitian(h);
    let (mut eig, _) = eigh_real(&m);
    // The embedding doubles every eigenvalue; sort and take every other one.
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig.into_iter().step_by(2).collect()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub(crate) fn min_eig_hermitian(h: &Array2<C64>) -> f64 {
    eigvals_hermitian(h)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Eigenvalues below zero (numerical noise) are clipped.
pub(crate) fn sqrtm_psd(h: &Array2<C64>) -> Array2<C64> {
    funm_hermitian(h, |lam| lam.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expm_rotation_generator_gives_rotation_matrix() {
        let theta = 0.7f64;
        let mut g = Array2::<C64>::zeros((2, 2));
        g[[0, 1]] = c(-theta, 0.0);
        g[[1, 0]] = c(theta, 0.0);
        let u = expm(&g);
        assert_abs_diff_eq!(u[[0, 0]].re, theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[[0, 1]].re, -theta.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[[1, 0]].re, theta.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[[1, 1]].re, theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[[0, 0]].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expm_real_matches_complex_on_skew_block() {
        let mut g = Array2::<f64>::zeros((3, 3));
        g[[0, 1]] = 1.3;
        g[[1, 0]] = -1.3;
        g[[1, 2]] = -0.4;
        g[[2, 1]] = 0.4;
        let ur = expm_real(&g);
        let uc = expm(&g.mapv(|v| c(v, 0.0)));
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(ur[[i, j]], uc[[i, j]].re, epsilon = 1e-13);
                assert_abs_diff_eq!(uc[[i, j]].im, 0.0, epsilon = 1e-14);
            }
        }
        // Skew generator must exponentiate to an orthogonal matrix.
        let id = ur.dot(&ur.t());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[[i, j]], want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut m = Array2::<f64>::zeros((2, 2));
        m[[0, 0]] = 2.0;
        m[[1, 1]] = 2.0;
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 1.0;
        let (mut eig, v) = eigh_real(&m);
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(eig[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(eig[1], 3.0, epsilon = 1e-13);
        let vtv = v.t().dot(&v);
        assert_abs_diff_eq!(vtv[[0, 0]], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(vtv[[0, 1]], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn funm_identity_reconstructs_hermitian_input() {
        let mut h = Array2::<C64>::zeros((3, 3));
        h[[0, 0]] = c(1.0, 0.0);
        h[[1, 1]] = c(-0.5, 0.0);
        h[[2, 2]] = c(2.0, 0.0);
        h[[0, 1]] = c(0.3, 0.7);
        h[[1, 0]] = c(0.3, -0.7);
        h[[1, 2]] = c(-0.2, 0.1);
        h[[2, 1]] = c(-0.2, -0.1);
        let r = funm_hermitian(&h, |x| x);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(r[[i, j]].re, h[[i, j]].re, epsilon = 1e-12);
                assert_abs_diff_eq!(r[[i, j]].im, h[[i, j]].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn funm_exp_cross_checks_expm() {
        // Two independent code paths (Taylor series vs eigendecomposition)
        // must agree on a Hermitian input.
        let mut h = Array2::<C64>::zeros((2, 2));
        h[[0, 0]] = c(0.4, 0.0);
        h[[1, 1]] = c(-1.1, 0.0);
        h[[0, 1]] = c(0.25, -0.6);
        h[[1, 0]] = c(0.25, 0.6);
        let a = funm_hermitian(&h, f64::exp);
        let b = expm(&h);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(a[[i, j]].re, b[[i, j]].re, epsilon = 1e-11);
                assert_abs_diff_eq!(a[[i, j]].im, b[[i, j]].im, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut h = Array2::<C64>::zeros((2, 2));
        h[[0, 0]] = c(4.0, 0.0);
        h[[1, 1]] = c(9.0, 0.0);
        h[[0, 1]] = c(1.0, 0.5);
        h[[1, 0]] = c(1.0, -0.5);
        let s = sqrtm_psd(&h);
        let sq = s.dot(&s);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(sq[[i, j]].re, h[[i, j]].re, epsilon = 1e-11);
                assert_abs_diff_eq!(sq[[i, j]].im, h[[i, j]].im, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn min_eig_of_pauli_x_is_minus_one() {
        let mut h = Array2::<C64>::zeros((2, 2));
        h[[0, 1]] = c(1.0, 0.0);
        h[[1, 0]] = c(1.0, 0.0);
        assert_abs_diff_eq!(min_eig_hermitian(&h), -1.0, epsilon = 1e-13);
        let eig = eigvals_hermitian(&h);
        assert_eq!(eig.len(), 2);
        assert_abs_diff_eq!(eig[0], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(eig[1], 1.0, epsilon = 1e-13);
    }
}
