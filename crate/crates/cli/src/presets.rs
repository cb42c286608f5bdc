//! Named scenario presets. Each returns a ready-to-run [`Scenario`] with a
//! fixed seed and its own default output directory, so re-running a preset
//! reproduces its files byte for byte.

use std::path::PathBuf;

use eads_core::eads::{CurveVariant, InputKind, LoopConfig};
use eads_core::phasespace::GridSpec;

use crate::config::{Engine, Scenario, TomographySettings, DEFAULT_N_TRAJ};

/// Preset names in listing order.
pub const NAMES: [&str; 9] = [
    "fig2", "fig3a", "fig3b", "fig3c", "fig4", "figS1", "figS2", "figS3", "figS4",
];

fn grid(min: f64, max: f64, n: usize) -> GridSpec {
    GridSpec::new(min, max, n).expect("preset grids are valid")
}

const THREE_ARMS: [CurveVariant; 3] = [
    CurveVariant::Suppressed,
    CurveVariant::Unsuppressed,
    CurveVariant::SuppressedIdealAncilla,
];

const TWO_ARMS: [CurveVariant; 2] = [CurveVariant::Suppressed, CurveVariant::Unsuppressed];

fn scenario(
    name: &str,
    inputs: &[InputKind],
    base: LoopConfig,
    variants: &[CurveVariant],
    wigner_steps: Vec<usize>,
) -> Scenario {
    Scenario {
        inputs: inputs.to_vec(),
        base,
        n_max: 5,
        variants: variants.to_vec(),
        engine: Engine::Analytic,
        n_traj: DEFAULT_N_TRAJ,
        seed: 7,
        out_dir: PathBuf::from(format!("out/{name}")),
        gain_scale: 1.0,
        curve_grid: grid(-8.0, 8.0, 321),
        wigner_grid: grid(-5.0, 5.0, 161),
        wigner_steps,
        tomography: TomographySettings::default(),
    }
}

/// Fitted loop parameters: the tap transmission and the matching loop and
/// preparation efficiencies of the two calibrated operating points.
fn fitted(input: InputKind, eta_ng: f64, eta_bs: f64, eta_loop: f64) -> LoopConfig {
    LoopConfig {
        input,
        r_ng_db: 3.5,
        eta_ng,
        eta_bs,
        eta_loop,
        r_a_db: 9.7,
        eta_a: 0.73,
    }
}

/// Nominal bench parameters used by the three-input survey presets.
fn nominal(eta_bs: f64) -> LoopConfig {
    fitted(InputKind::PSqueezedPhoton, 0.62, eta_bs, 0.94)
}

const SURVEY_INPUTS: [InputKind; 3] = [
    InputKind::PSqueezedPhoton,
    InputKind::XSqueezedPhoton,
    InputKind::SinglePhoton,
];

pub fn preset(name: &str) -> Option<Scenario> {
    let s = match name {
        "fig2" => scenario(
            name,
            &[InputKind::PSqueezedPhoton],
            fitted(InputKind::PSqueezedPhoton, 0.64, 0.90, 0.95),
            &THREE_ARMS,
            vec![0, 1, 3, 5],
        ),
        "fig3a" => scenario(
            name,
            &[InputKind::PSqueezedPhoton],
            fitted(InputKind::PSqueezedPhoton, 0.60, 0.95, 0.97),
            &THREE_ARMS,
            vec![0, 1, 3, 5],
        ),
        "fig3b" => scenario(
            name,
            &[InputKind::SinglePhoton],
            fitted(InputKind::SinglePhoton, 0.60, 0.90, 0.97),
            &THREE_ARMS,
            vec![0, 1, 3, 5],
        ),
        "fig3c" => scenario(
            name,
            &[InputKind::XSqueezedPhoton],
            fitted(InputKind::XSqueezedPhoton, 0.64, 0.90, 0.95),
            &THREE_ARMS,
            vec![0, 1, 3, 5],
        ),
        "fig4" => scenario(
            name,
            &[InputKind::XSqueezedPhoton, InputKind::PSqueezedPhoton],
            fitted(InputKind::XSqueezedPhoton, 1.0, 0.90, 1.0),
            &TWO_ARMS,
            vec![0, 1, 3, 5],
        ),
        "figS1" => scenario(name, &SURVEY_INPUTS, nominal(0.95), &TWO_ARMS, vec![0, 5]),
        "figS2" => scenario(name, &SURVEY_INPUTS, nominal(0.90), &TWO_ARMS, vec![0, 5]),
        "figS3" => scenario(
            name,
            &SURVEY_INPUTS,
            nominal(0.95),
            &TWO_ARMS,
            vec![0, 1, 3, 5],
        ),
        "figS4" => scenario(
            name,
            &SURVEY_INPUTS,
            nominal(0.90),
            &TWO_ARMS,
            vec![0, 1, 3, 5],
        ),
        _ => return None,
    };
    Some(s)
}

pub fn description(name: &str) -> &'static str {
    match name {
        "fig2" => "p-squeezed photon, 10% tap: suppressed vs unsuppressed vs ideal-ancilla curves",
        "fig3a" => "p-squeezed photon, 5% tap: fitted-efficiency curves",
        "fig3b" => "approximate single photon, 10% tap: fitted-efficiency curves",
        "fig3c" => "x-squeezed photon, 10% tap: fitted-efficiency curves",
        "fig4" => "lossless bench, 10% tap: x- vs p-squeezed photon asymmetry",
        "figS1" => "three inputs, 5% tap, nominal efficiencies: curve survey",
        "figS2" => "three inputs, 10% tap, nominal efficiencies: curve survey",
        "figS3" => "three inputs, 5% tap, nominal efficiencies: Wigner panels",
        "figS4" => "three inputs, 10% tap, nominal efficiencies: Wigner panels",
        _ => "",
    }
}

/// The `presets list` text.
pub fn listing() -> String {
    let width = NAMES.iter().map(|n| n.len()).max().unwrap_or(0);
    let mut out = String::new();
    for name in NAMES {
        out.push_str(&format!("{name:width$}  {}\n", description(name)));
    }
    out
}
