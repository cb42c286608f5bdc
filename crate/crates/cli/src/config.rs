//! Scenario configuration: a flat TOML file (plus an optional `[tomography]`
//! table) resolved into validated simulator types. Unknown keys are rejected
//! so typos fail loudly instead of silently running the defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use eads_core::eads::{CurveVariant, InputKind, LoopConfig};
use eads_core::phasespace::GridSpec;

/// Configuration problem: bad file, bad key, bad value. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const DEFAULT_N_TRAJ: usize = 20_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CURVE_GRID: (f64, f64, usize) = (-8.0, 8.0, 321);
pub const DEFAULT_WIGNER_GRID: (f64, f64, usize) = (-5.0, 5.0, 161);

/// Which engine(s) a run may use. Curves and Wigner maps are analytic-engine
/// artifacts; the oracle requires `Both`; tomography samples exact states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Analytic,
    Trajectory,
    Both,
}

impl Engine {
    pub fn label(&self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Trajectory => "trajectory",
            Engine::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    min: f64,
    max: f64,
    points: usize,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTomography {
    phases: Option<usize>,
    samples_per_phase: Option<usize>,
    bootstrap: Option<usize>,
    mle_dim: Option<usize>,
    mle_iters: Option<usize>,
}

/// The file as written, before names are resolved and defaults filled in.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    inputs: Vec<String>,
    r_ng_db: f64,
    eta_ng: f64,
    eta_bs: f64,
    eta_loop: f64,
    r_a_db: f64,
    eta_a: f64,
    n_max: usize,
    variants: Vec<String>,
    engine: Option<String>,
    n_traj: Option<usize>,
    seed: Option<u64>,
    out_dir: Option<String>,
    gain_scale: Option<f64>,
    grid: Option<RawGrid>,
    wigner_grid: Option<RawGrid>,
    wigner_steps: Option<Vec<usize>>,
    tomography: Option<RawTomography>,
}

/// Tomography-run knobs with the protocol defaults.
#[derive(Debug, Clone, Copy)]
pub struct TomographySettings {
    /// Number of evenly spaced measurement phases over [0, π).
    pub phases: usize,
    pub samples_per_phase: usize,
    /// Bootstrap resamples behind each reported standard error.
    pub bootstrap: usize,
    pub mle_dim: usize,
    pub mle_iters: usize,
}

impl Default for TomographySettings {
    fn default() -> Self {
        Self {
            phases: 12,
            samples_per_phase: 1500,
            bootstrap: 50,
            mle_dim: 12,
            mle_iters: 500,
        }
    }
}

/// A fully resolved run description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub inputs: Vec<InputKind>,
    /// Loop parameters; `input` holds the first entry of `inputs` and is
    /// overridden per input via [`Scenario::config_for`].
    pub base: LoopConfig,
    pub n_max: usize,
    pub variants: Vec<CurveVariant>,
    pub engine: Engine,
    pub n_traj: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Feedforward attenuation knob for the trajectory engine: 1 is the
    /// protocol, 0 disables the correction entirely.
    pub gain_scale: f64,
    pub curve_grid: GridSpec,
    pub wigner_grid: GridSpec,
    /// Step counts rendered by the `wigner` command.
    pub wigner_steps: Vec<usize>,
    pub tomography: TomographySettings,
}

fn parse_input(name: &str) -> Result<InputKind, ConfigError> {
    const ALL: [InputKind; 5] = [
        InputKind::PSqueezedPhoton,
        InputKind::XSqueezedPhoton,
        InputKind::SinglePhoton,
        InputKind::IdealSinglePhoton,
        InputKind::Vacuum,
    ];
    ALL.into_iter().find(|k| k.label() == name).ok_or_else(|| {
        let names: Vec<&str> = ALL.iter().map(|k| k.label()).collect();
        ConfigError(format!(
            "unknown input \"{name}\"; expected one of {}",
            names.join(", ")
        ))
    })
}

fn parse_variant(name: &str) -> Result<CurveVariant, ConfigError> {
    const ALL: [CurveVariant; 3] = [
        CurveVariant::Suppressed,
        CurveVariant::Unsuppressed,
        CurveVariant::SuppressedIdealAncilla,
    ];
    ALL.into_iter().find(|v| v.label() == name).ok_or_else(|| {
        let names: Vec<&str> = ALL.iter().map(|v| v.label()).collect();
        ConfigError(format!(
            "unknown variant \"{name}\"; expected one of {}",
            names.join(", ")
        ))
    })
}

pub fn parse_engine(name: &str) -> Result<Engine, ConfigError> {
    match name {
        "analytic" => Ok(Engine::Analytic),
        "trajectory" => Ok(Engine::Trajectory),
        "both" => Ok(Engine::Both),
        other => Err(ConfigError(format!(
            "unknown engine \"{other}\"; expected analytic, trajectory or both"
        ))),
    }
}

fn grid_from(raw: Option<RawGrid>, default: (f64, f64, usize)) -> Result<GridSpec, ConfigError> {
    let (min, max, points) = match raw {
        Some(g) => (g.min, g.max, g.points),
        None => default,
    };
    GridSpec::new(min, max, points)
        .map_err(|e| ConfigError(format!("bad grid: {e}")))
}

impl Scenario {
    /// Loop parameters with the given input substituted in.
    pub fn config_for(&self, input: InputKind) -> LoopConfig {
        LoopConfig { input, ..self.base }
    }

    /// CSV row label for a (variant, input) pair: the variant label alone
    /// when the run has a single input, disambiguated otherwise.
    pub fn row_label(&self, variant: CurveVariant, input: InputKind) -> String {
        if self.inputs.len() == 1 {
            variant.label().to_string()
        } else {
            format!("{}_{}", variant.label(), input.short_label())
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ConfigError> {
        if raw.inputs.is_empty() {
            return Err(ConfigError("inputs must not be empty".into()));
        }
        let mut inputs = Vec::new();
        for name in &raw.inputs {
            let kind = parse_input(name)?;
            if inputs.contains(&kind) {
                return Err(ConfigError(format!("duplicate input \"{name}\"")));
            }
            inputs.push(kind);
        }

        if raw.variants.is_empty() {
            return Err(ConfigError("variants must not be empty".into()));
        }
        let mut variants = Vec::new();
        for name in &raw.variants {
            let v = parse_variant(name)?;
            if variants.contains(&v) {
                return Err(ConfigError(format!("duplicate variant \"{name}\"")));
            }
            variants.push(v);
        }

        let base = LoopConfig {
            input: inputs[0],
            r_ng_db: raw.r_ng_db,
            eta_ng: raw.eta_ng,
            eta_bs: raw.eta_bs,
            eta_loop: raw.eta_loop,
            r_a_db: raw.r_a_db,
            eta_a: raw.eta_a,
        };
        base.validate()
            .map_err(|e| ConfigError(format!("bad loop parameters: {e}")))?;

        let engine = match raw.engine.as_deref() {
            Some(name) => parse_engine(name)?,
            None => Engine::Analytic,
        };

        let gain_scale = raw.gain_scale.unwrap_or(1.0);
        if !gain_scale.is_finite() || gain_scale < 0.0 {
            return Err(ConfigError(format!(
                "gain_scale must be finite and non-negative, got {gain_scale}"
            )));
        }

        let wigner_steps = match raw.wigner_steps {
            Some(steps) => {
                if steps.is_empty() {
                    return Err(ConfigError("wigner_steps must not be empty".into()));
                }
                steps
            }
            None => {
                if raw.n_max == 0 {
                    vec![0]
                } else {
                    vec![0, raw.n_max]
                }
            }
        };

        let t = raw.tomography.unwrap_or_default();
        let defaults = TomographySettings::default();
        let tomography = TomographySettings {
            phases: t.phases.unwrap_or(defaults.phases),
            samples_per_phase: t.samples_per_phase.unwrap_or(defaults.samples_per_phase),
            bootstrap: t.bootstrap.unwrap_or(defaults.bootstrap),
            mle_dim: t.mle_dim.unwrap_or(defaults.mle_dim),
            mle_iters: t.mle_iters.unwrap_or(defaults.mle_iters),
        };
        if tomography.phases == 0 {
            return Err(ConfigError("tomography.phases must be at least 1".into()));
        }

        Ok(Scenario {
            inputs,
            base,
            n_max: raw.n_max,
            variants,
            engine,
            n_traj: raw.n_traj.unwrap_or(DEFAULT_N_TRAJ),
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            out_dir: PathBuf::from(raw.out_dir.unwrap_or_else(|| "out".into())),
            gain_scale,
            curve_grid: grid_from(raw.grid, DEFAULT_CURVE_GRID)?,
            wigner_grid: grid_from(raw.wigner_grid, DEFAULT_WIGNER_GRID)?,
            wigner_steps,
            tomography,
        })
    }

    /// Apply command-line overrides on top of the file or preset.
    pub fn apply_overrides(
        &mut self,
        out: Option<PathBuf>,
        seed: Option<u64>,
        n_traj: Option<usize>,
        engine: Option<&str>,
    ) -> Result<(), ConfigError> {
        if let Some(dir) = out {
            self.out_dir = dir;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(n) = n_traj {
            self.n_traj = n;
        }
        if let Some(name) = engine {
            self.engine = parse_engine(name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
inputs = ["p_squeezed_photon"]
r_ng_db = 3.5
eta_ng = 0.64
eta_bs = 0.90
eta_loop = 0.95
r_a_db = 9.7
eta_a = 0.73
n_max = 5
variants = ["suppressed", "unsuppressed"]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.inputs, vec![InputKind::PSqueezedPhoton]);
        assert_eq!(s.engine, Engine::Analytic);
        assert_eq!(s.n_traj, DEFAULT_N_TRAJ);
        assert_eq!(s.seed, DEFAULT_SEED);
        assert_eq!(s.wigner_steps, vec![0, 5]);
        assert_eq!(s.tomography.phases, 12);
        assert_eq!(s.tomography.samples_per_phase, 1500);
        assert_eq!(s.curve_grid.n, DEFAULT_CURVE_GRID.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nmystery_knob = 3\n");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(err.0.contains("mystery_knob"), "{err}");

        let nested = format!("{MINIMAL}\n[tomography]\nphasez = 12\n");
        assert!(Scenario::from_toml_str(&nested).is_err());
    }

    #[test]
    fn bad_names_and_values_are_rejected() {
        let bad_input = MINIMAL.replace("p_squeezed_photon", "q_squeezed_photon");
        assert!(Scenario::from_toml_str(&bad_input).is_err());

        let bad_variant = MINIMAL.replace("unsuppressed", "enhanced");
        assert!(Scenario::from_toml_str(&bad_variant).is_err());

        let bad_eta = MINIMAL.replace("eta_bs = 0.90", "eta_bs = 1.4");
        assert!(Scenario::from_toml_str(&bad_eta).is_err());

        let text = format!("{MINIMAL}\nengine = \"quantum\"\n");
        assert!(Scenario::from_toml_str(&text).is_err());

        let dup = MINIMAL.replace(
            "[\"suppressed\", \"unsuppressed\"]",
            "[\"suppressed\", \"suppressed\"]",
        );
        assert!(Scenario::from_toml_str(&dup).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut s = Scenario::from_toml_str(MINIMAL).unwrap();
        s.apply_overrides(
            Some(PathBuf::from("elsewhere")),
            Some(99),
            Some(123),
            Some("both"),
        )
        .unwrap();
        assert_eq!(s.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(s.seed, 99);
        assert_eq!(s.n_traj, 123);
        assert_eq!(s.engine, Engine::Both);
        assert!(s.apply_overrides(None, None, None, Some("nope")).is_err());
    }

    #[test]
    fn row_labels_disambiguate_multiple_inputs() {
        let mut s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(
            s.row_label(CurveVariant::Suppressed, InputKind::PSqueezedPhoton),
            "suppressed"
        );
        s.inputs.push(InputKind::XSqueezedPhoton);
        assert_eq!(
            s.row_label(CurveVariant::Suppressed, InputKind::XSqueezedPhoton),
            "suppressed_x"
        );
    }
}
