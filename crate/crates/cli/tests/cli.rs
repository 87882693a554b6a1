use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BUMP_PAIR: &str = r#"
[pair]
a = [
  { preset = "rotation_bump", center = [0.2, -0.1, 0.1], width = 0.7, amplitude = 1.0, axis = [0.3, 0.5, 0.8] },
]
v = [
  { preset = "bump", center = [0.1, 0.3, -0.2], width = 0.7, amplitude = 1.2 },
]
"#;

fn biharm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biharm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with(
    dir: &TempDir,
    name: &str,
    config: &str,
    command: &str,
    extra: &[&str],
) -> (Output, PathBuf) {
    let cfg = dir.path().join(format!("{name}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join(name);
    let mut args = vec![
        command,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (biharm(&args), out)
}

fn read_table(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_pair_forward_table_is_zero() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_with(&dir, "zero", "[pair]\n", "forward", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_table(&out.join("amplitudes.csv"));
    // Two default direction pairs at four frequencies.
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[7] == 0.0 && r[8] == 0.0));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "forward");
    assert!(m["settings"]["transport"]["rel_tol"].is_number());
}

#[test]
fn forward_row_count_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{BUMP_PAIR}\n[oracle]\nkind = \"born\"\nnoise_level = 0.01\n\n[forward]\n\
         directions = [{{ omega = [0, 1, 1], theta = [0, 0, 1] }}, {{ omega = [1, 0, 0], theta = [0, 1, 0] }}, {{ omega = [0, 0, 1], theta = [0, 0, 1] }}]\n\
         lambdas = [8, 16, 32, 64]\n"
    );
    let (o1, out1) = run_with(&dir, "a", &cfg, "forward", &["--seed", "11"]);
    let (o2, out2) = run_with(
        &dir,
        "b",
        &cfg,
        "forward",
        &["--seed", "11", "--threads", "2"],
    );
    assert!(
        o1.status.success() && o2.status.success(),
        "{}",
        stderr(&o1)
    );
    let t1 = fs::read(out1.join("amplitudes.csv")).unwrap();
    assert_eq!(t1, fs::read(out2.join("amplitudes.csv")).unwrap());
    assert_eq!(read_table(&out1.join("amplitudes.csv")).len(), 12);

    let (o3, out3) = run_with(&dir, "c", &cfg, "forward", &["--seed", "12"]);
    assert!(o3.status.success());
    assert_ne!(t1, fs::read(out3.join("amplitudes.csv")).unwrap());

    // The resolved config in the output reproduces the run on its own.
    let replay = dir.path().join("replay");
    let o4 = biharm(&[
        "forward",
        "--config",
        out1.join("config.toml").to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert!(o4.status.success(), "{}", stderr(&o4));
    assert_eq!(t1, fs::read(replay.join("amplitudes.csv")).unwrap());
}

#[test]
fn config_errors_name_field_and_line() {
    let dir = TempDir::new().unwrap();
    let missing =
        "seed = 1\n\n[pair]\nv = [\n  { center = [0, 0, 0], width = 0.5, amplitude = 1.0 },\n]\n";
    let (o, _) = run_with(&dir, "missing", missing, "forward", &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("preset") && e.contains("line 5"), "{e}");

    let unknown = "[pair]\n\n[invert]\nk = 8.0\nnn = 33\n";
    let (o, _) = run_with(&dir, "unknown", unknown, "invert", &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("nn") && e.contains("line 5"), "{e}");

    let bad_width = "[pair]\nv = [\n  { preset = \"bump\", center = [0, 0, 0], width = 0.5, amplitude = 1.0 },\n  { preset = \"bump\", center = [0, 0, 0], width = -0.5, amplitude = 1.0 },\n]\n";
    let (o, _) = run_with(&dir, "width", bad_width, "forward", &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("pair.v[1]") && e.contains("line 4"), "{e}");

    let even = "[pair]\n\n[invert]\nn = 32\n";
    let (o, _) = run_with(&dir, "even", even, "invert", &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("invert.n") && e.contains("line 4"), "{e}");

    let (o, _) = run_with(&dir, "nogen", "[pair]\n", "gauge-test", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gauge.generators"));

    let o = biharm(&["forward"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

const SMALL_LATTICE: &str = "\n[invert]\nk = 4.0\nn = 9\ngrid_half_extent = 2.0\ngrid_points = 9\n";

#[test]
fn gauge_pairs_reconstruct_identically() {
    let dir = TempDir::new().unwrap();
    // Only curl A is compared: presets cannot express the shift V + ½Δφ.
    let gauged = format!("{BUMP_PAIR}{SMALL_LATTICE}").replace(
        "a = [\n",
        "a = [\n  { preset = \"gradient\", potential = { preset = \"bump\", center = [0.1, 0.0, -0.1], width = 0.5, amplitude = 1.3 } },\n",
    );
    let (o1, out1) = run_with(
        &dir,
        "plain",
        &format!("{BUMP_PAIR}{SMALL_LATTICE}"),
        "invert",
        &[],
    );
    let (o2, out2) = run_with(&dir, "gauged", &gauged, "invert", &[]);
    assert!(
        o1.status.success() && o2.status.success(),
        "{}",
        stderr(&o2)
    );
    let c1 = read_table(&out1.join("curl.csv"));
    let c2 = read_table(&out2.join("curl.csv"));
    let scale = c1
        .iter()
        .flat_map(|r| r[3..].to_vec())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in c1.iter().zip(&c2) {
        for j in 3..6 {
            assert!((a[j] - b[j]).abs() <= 1e-12 * scale, "{} vs {}", a[j], b[j]);
        }
    }
}

#[test]
fn zero_pair_reconstructs_zero_fields() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_with(
        &dir,
        "zero",
        &format!("[pair]\n{SMALL_LATTICE}"),
        "invert",
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_table(&out.join("curl.csv"))
        .iter()
        .all(|r| r[3..].iter().all(|v| *v == 0.0)));
    assert!(read_table(&out.join("combo.csv"))
        .iter()
        .all(|r| r[3] == 0.0));
    assert!(!out.join("verdict.json").exists());
}

#[test]
fn bump_pair_reconstruction_meets_threshold() {
    let dir = TempDir::new().unwrap();
    let truth = BUMP_PAIR.replace("[pair]", "[truth]");
    let cfg = format!("{BUMP_PAIR}{truth}\n[tolerances]\nreconstruction_l2 = 0.05\n");
    let (o, out) = run_with(&dir, "bump", &cfg, "invert", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&out.join("verdict.json"));
    assert_eq!(v["verdict"], "pass");
    assert!(v["report"]["curl_relative_l2"].as_f64().unwrap() < 0.05);
    assert!(v["report"]["combo_relative_l2"].as_f64().unwrap() < 0.05);
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml")
}

#[test]
fn reference_config_verdicts_pass() {
    let dir = TempDir::new().unwrap();
    for command in ["gauge-test", "stability", "scaling"] {
        let out = dir.path().join(command);
        let o = biharm(&[
            command,
            "--config",
            reference().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{command}: {}", stderr(&o));
        let v = json(&out.join("verdict.json"));
        assert_eq!(v["verdict"], "pass", "{command}: {v}");
        assert_eq!(json(&out.join("manifest.json"))["verdict"], "pass");
    }
    let s = json(&dir.path().join("scaling/verdict.json"));
    let entries = s["report"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e["exponent"].is_number()));
    let st = json(&dir.path().join("stability/verdict.json"));
    assert!(st["report"]["sqrt_law_exponent"].is_number());
    assert_eq!(st["report"]["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn failing_verdict_sets_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{BUMP_PAIR}\n[tolerances]\nscaling_slope = [-0.5, 0.0]\n");
    let (o, out) = run_with(&dir, "strict", &cfg, "scaling", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&out.join("verdict.json"))["verdict"], "fail");
    assert!(out.join("scaling.csv").exists());
}
