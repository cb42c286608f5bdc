//! Black-box checks of the `eads` binary: exit codes, file contracts, and
//! the documented behavior of each subcommand on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn eads() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eads"))
}

fn run(args: &[&str]) -> Output {
    eads().args(args).output().expect("binary runs")
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).expect("config written");
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn metric(rows: &[Vec<String>], name: &str) -> (f64, Option<f64>) {
    let row = rows
        .iter()
        .find(|r| r[1] == name)
        .unwrap_or_else(|| panic!("metric {name} present"));
    let value = row[2].parse().expect("numeric metric");
    let se = if row[3].is_empty() {
        None
    } else {
        Some(row[3].parse().expect("numeric se"))
    };
    (value, se)
}

#[test]
fn presets_list_names_every_figure() {
    let out = run(&["presets", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "fig2", "fig3a", "fig3b", "fig3c", "fig4", "figS1", "figS2", "figS3", "figS4",
    ] {
        assert!(text.contains(name), "listing mentions {name}:\n{text}");
    }
}

#[test]
fn bad_invocations_exit_with_the_config_code() {
    // no preset and no config file
    assert_eq!(run(&["curves"]).status.code(), Some(2));
    // unknown preset
    assert_eq!(run(&["curves", "fig99"]).status.code(), Some(2));
    // unknown flag (clap's own error path)
    assert_eq!(run(&["curves", "fig2", "--bogus"]).status.code(), Some(2));
    // missing config file
    assert_eq!(
        run(&["curves", "--config", "/nonexistent/x.toml"]).status.code(),
        Some(2)
    );

    // unknown key inside the config file
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["vacuum"]
r_ng_db = 0.0
eta_ng = 1.0
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 1
variants = ["suppressed"]
nonsense_knob = 3
"#,
    );
    let out = run(&["curves", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("nonsense_knob"), "names the bad key: {err}");

    // malformed worker override
    let status = eads()
        .args(["curves", "fig2"])
        .env("EADS_WORKERS", "many")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn zero_steps_reports_input_metrics_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["vacuum"]
r_ng_db = 0.0
eta_ng = 1.0
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 0
variants = ["suppressed", "unsuppressed"]
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "curves",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let rows = read_csv(&out_dir.join("curves.csv"));
    assert_eq!(rows[0], ["variant", "N", "F", "W0"]);
    assert_eq!(rows.len(), 2, "header plus exactly one row: {rows:?}");
    assert_eq!(rows[1][0], "input");
    assert_eq!(rows[1][1], "0");
    let f: f64 = rows[1][2].parse().unwrap();
    let w0: f64 = rows[1][3].parse().unwrap();
    assert!((f - 1.0).abs() < 1e-6, "vacuum matches itself, F = {f}");
    let inv_pi = 1.0 / std::f64::consts::PI;
    assert!((w0 - inv_pi).abs() < 1e-9, "vacuum peak, W0 = {w0}");
    assert!(out_dir.join("curves.svg").exists());
}

/// With a unit-transmissivity tap the ancilla decouples, every feedforward
/// gain vanishes, and both engines describe the same pure-loss channel, so
/// the cross-check must read back as fidelity 1.
#[test]
fn decoupled_loop_oracle_reads_fidelity_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["p_squeezed_photon"]
r_ng_db = 3.5
eta_ng = 0.64
eta_bs = 1.0
eta_loop = 0.95
r_a_db = 9.7
eta_a = 0.73
n_max = 2
variants = ["suppressed"]
engine = "both"
n_traj = 200
seed = 11
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_csv(&out_dir.join("oracle.csv"));
    assert_eq!(rows.len(), 3, "header plus N = 1, 2");
    for row in &rows[1..] {
        let f: f64 = row[2].parse().unwrap();
        assert!(
            (1.0 - f).abs() <= 1e-6,
            "decoupled loop at N = {}: fidelity {f}",
            row[1]
        );
        assert_eq!(row.last().unwrap(), "1", "row passes");
    }
}

/// Gains forced to zero with a vacuum ancilla turn the loop into plain
/// beamsplitter loss, which must agree with the unsuppressed channel.
#[test]
fn zero_gain_vacuum_ancilla_matches_unsuppressed_channel() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["p_squeezed_photon"]
r_ng_db = 3.5
eta_ng = 0.64
eta_bs = 0.9
eta_loop = 0.94
r_a_db = 0.0
eta_a = 1.0
n_max = 1
variants = ["unsuppressed"]
engine = "both"
n_traj = 4000
seed = 5
gain_scale = 0.0
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_csv(&out_dir.join("oracle.csv"));
    assert_eq!(rows[1][0], "unsuppressed");
    let f: f64 = rows[1][2].parse().unwrap();
    assert!(f >= 0.99, "reduction holds, fidelity {f}");
    assert_eq!(rows[1].last().unwrap(), "1");
}

#[test]
fn tomography_recovers_a_lossy_photon() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["ideal_single_photon"]
r_ng_db = 0.0
eta_ng = 0.85
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 1
variants = ["suppressed"]
seed = 3
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "tomography",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    for name in [
        "dataset_ideal.csv",
        "rho_ideal.csv",
        "wigner_ideal.csv",
        "wigner_ideal.svg",
        "metrics.csv",
    ] {
        assert!(out_dir.join(name).exists(), "{name} written");
    }
    let dataset = read_csv(&out_dir.join("dataset_ideal.csv"));
    assert_eq!(dataset[0], ["theta", "x"]);
    assert_eq!(dataset.len(), 1 + 12 * 1500);
    let rho = read_csv(&out_dir.join("rho_ideal.csv"));
    assert_eq!(rho[0], ["row", "col", "re", "im"]);

    let rows = read_csv(&out_dir.join("metrics.csv"));
    let (f, _) = metric(&rows, "fidelity_truth");
    assert!(f >= 0.97, "reconstruction closure, fidelity {f}");
    let (w0, _) = metric(&rows, "w0");
    assert!(w0 < -0.1, "loss at 0.85 keeps genuine negativity, W0 = {w0}");
}

#[test]
fn tomography_vacuum_w0_matches_the_known_peak() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["vacuum"]
r_ng_db = 0.0
eta_ng = 1.0
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 1
variants = ["suppressed"]
seed = 9
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "tomography",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let rows = read_csv(&out_dir.join("metrics.csv"));
    let (w0, se) = metric(&rows, "w0");
    let se = se.expect("bootstrap error present");
    let inv_pi = 1.0 / std::f64::consts::PI;
    assert!(
        (w0 - inv_pi).abs() <= 3.0 * se,
        "W0 = {w0} within 3 x {se} of {inv_pi}"
    );
}

#[test]
fn tomography_with_zero_samples_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["vacuum"]
r_ng_db = 0.0
eta_ng = 1.0
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 1
variants = ["suppressed"]
[tomography]
samples_per_phase = 0
"#,
    );
    let out = run(&["tomography", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_produce_byte_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["single_photon"]
r_ng_db = 1.0
eta_ng = 0.8
eta_bs = 0.92
eta_loop = 0.96
r_a_db = 6.0
eta_a = 0.8
n_max = 2
variants = ["suppressed", "unsuppressed"]
engine = "both"
n_traj = 100
seed = 21
grid = { min = -6.0, max = 6.0, points = 121 }
wigner_grid = { min = -4.0, max = 4.0, points = 81 }
[tomography]
samples_per_phase = 300
bootstrap = 50
"#,
    );
    let run_all = |dir: &Path| {
        for sub in ["curves", "oracle", "tomography"] {
            let out = run(&[
                sub,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ]);
            assert!(
                out.status.success(),
                "{sub} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all(&a);
    run_all(&b);

    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 7, "outputs present: {names:?}");
    for name in names {
        let bytes_a = fs::read(a.join(&name)).unwrap();
        let bytes_b = fs::read(b.join(&name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} identical across reruns");
    }
}

#[test]
fn unwritable_output_path_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("occupied");
    fs::write(&blocker, "not a directory").unwrap();
    let cfg = write_cfg(
        tmp.path(),
        r#"
inputs = ["vacuum"]
r_ng_db = 0.0
eta_ng = 1.0
eta_bs = 0.9
eta_loop = 1.0
r_a_db = 0.0
eta_a = 1.0
n_max = 0
variants = ["suppressed"]
"#,
    );
    let out = run(&[
        "curves",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

/// The `fig2` Wigner maps assert the suppression ordering as part of the
/// run itself; the summary table records both arms per step.
#[test]
fn fig2_wigner_maps_keep_suppressed_negativity_below_unsuppressed() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&["wigner", "fig2", "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&out_dir.join("wigner_summary.csv"));
    assert_eq!(rows[0], ["variant", "N", "W0", "W0_x", "W0_p"]);
    let w0 = |label: &str, n: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == label && r[1] == n)
            .unwrap_or_else(|| panic!("{label} N={n} in summary"))[2]
            .parse()
            .unwrap()
    };
    assert!(w0("suppressed", "5") <= w0("unsuppressed", "5") + 1e-9);
}
