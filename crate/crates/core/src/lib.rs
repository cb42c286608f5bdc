//! Simulation engines for multi-step environment-assisted decoherence
//! suppression (EADS) of optical non-Gaussian states.
//!
//! The crate provides two independent, mutually verifying engines:
//!
//! * an **analytic engine** ([`eads`] + [`phasespace`]) that propagates
//!   Wigner functions through the closed-form Gaussian channel describing
//!   the N-step loop, and
//! * a **Monte Carlo engine** ([`trajectory`]) that simulates individual
//!   measurement trajectories: beamsplitter coupling to a squeezed ancilla,
//!   homodyne detection of the leak mode, and feedforward displacement,
//!   with the signal in a truncated Fock basis and the Gaussian ancilla
//!   handled in closed form.
//!
//! [`tomography`] closes the experimental loop: it draws phase-resolved
//! homodyne samples from any simulated state and reconstructs the density
//! matrix by iterative maximum-likelihood, with bootstrap error bars.
//!
//! Conventions used throughout: `ħ = 1`, vacuum quadrature variance `1/2`,
//! `x̂ = (â + â†)/√2`, `p̂ = -i(â - â†)/√2`, and squeezing levels quoted in
//! dB convert as `r = dB·ln(10)/20` (so 3.5 dB ≈ 0.403).

pub mod eads;
pub mod fockspace;
mod linalg;
pub mod phasespace;
pub mod tomography;
pub mod trajectory;

/// Non-fatal numerical diagnostics returned alongside results.
///
/// Operations never silently degrade: whenever a truncated-basis or
/// finite-grid approximation is detectably strained, the operation still
/// returns its best result but attaches one of these.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Population of the highest retained Fock level exceeds the
    /// truncation budget; amplitudes are being clipped at the cutoff.
    Truncation {
        context: &'static str,
        population: f64,
        budget: f64,
    },
    /// A phase-space grid carries non-negligible weight on its boundary,
    /// so integrals over it are missing tail mass.
    GridBoundary { boundary_max: f64, budget: f64 },
    /// A feedforward displacement was large enough that the embedding
    /// headroom may clip the displaced state.
    CorrectionMagnitude { value: f64, budget: f64 },
    /// The Fock-space reconstruction of a Wigner grid produced small
    /// negative eigenvalues that were clipped to restore positivity.
    BridgeClip { min_eigenvalue: f64 },
}

/// Fold a warning into a list, keeping one entry per kind (and per context,
/// for truncation warnings) with the worst observed value. Ensembles of
/// thousands of trajectories would otherwise drown the caller in duplicates.
pub fn merge_warning(list: &mut Vec<Warning>, w: Warning) {
    for existing in list.iter_mut() {
        match (existing, &w) {
            (
                Warning::Truncation {
                    context: c1,
                    population: p1,
                    ..
                },
                Warning::Truncation {
                    context: c2,
                    population: p2,
                    ..
                },
            ) if c1 == c2 => {
                if *p2 > *p1 {
                    *p1 = *p2;
                }
                return;
            }
            (
                Warning::GridBoundary {
                    boundary_max: b1, ..
                },
                Warning::GridBoundary {
                    boundary_max: b2, ..
                },
            ) => {
                if *b2 > *b1 {
                    *b1 = *b2;
                }
                return;
            }
            (
                Warning::CorrectionMagnitude { value: v1, .. },
                Warning::CorrectionMagnitude { value: v2, .. },
            ) => {
                if v2.abs() > v1.abs() {
                    *v1 = *v2;
                }
                return;
            }
            (
                Warning::BridgeClip { min_eigenvalue: e1 },
                Warning::BridgeClip { min_eigenvalue: e2 },
            ) => {
                if *e2 < *e1 {
                    *e1 = *e2;
                }
                return;
            }
            _ => {}
        }
    }
    list.push(w);
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::Truncation {
                context,
                population,
                budget,
            } => write!(
                f,
                "truncation budget exceeded in {context}: top-level population {population:.3e} > {budget:.1e}"
            ),
            Warning::GridBoundary {
                boundary_max,
                budget,
            } => write!(
                f,
                "grid boundary carries |W| = {boundary_max:.3e} > {budget:.1e}; enlarge the grid"
            ),
            Warning::CorrectionMagnitude { value, budget } => write!(
                f,
                "feedforward correction {value:.3} exceeds displacement headroom budget {budget:.3}"
            ),
            Warning::BridgeClip { min_eigenvalue } => write!(
                f,
                "Wigner-to-Fock bridge clipped negative eigenvalue {min_eigenvalue:.3e}"
            ),
        }
    }
}
