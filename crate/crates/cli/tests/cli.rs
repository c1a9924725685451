//! End-to-end tests of the `copscan` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn copscan(args: &[&str]) -> Output {
    copscan_env(args, &[])
}

fn copscan_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_copscan"));
    cmd.args(args).env_remove("COPSCAN_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stderr(o)))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Generates a spec into `dir` and returns its path.
fn spec(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.path().join(format!("{name}.json"));
    let mut all = vec!["generate"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path.to_str().unwrap()]);
    let o = copscan(&all);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: [&str; 4] = ["--L", "16", "--grid", "17"];

#[test]
fn generate_writes_family_parameters() {
    let dir = TempDir::new().unwrap();
    let e = read_json(&spec(&dir, "e", &["ellipsoid", "--lambda", "1,2,3,1"]));
    assert_eq!(e["family"], "ellipsoid");
    assert_eq!(e["dim"], 2);
    assert_eq!(
        e["params"]["lambda"],
        serde_json::json!([1.0, 2.0, 3.0, 1.0])
    );
    let t = read_json(&spec(&dir, "t", &["twisted", "--omega", "0.5"]));
    assert_eq!(t["family"], "twisted");
    assert_eq!(t["params"]["omega"], 0.5);
}

#[test]
fn generate_checks_the_cone_apex() {
    let o = copscan(&["generate", "cone", "--window", "-0.9,-0.1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["z_range"], serde_json::json!([-0.9, -0.1]));
    let o = copscan(&["generate", "cone", "--window", "-0.5,0.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("apex"), "{}", stderr(&o));
}

#[test]
fn generate_rejects_bad_parameters() {
    for args in [
        &["generate", "cone", "--omega", "1"][..],
        &["generate", "helicoid"],
        &["generate", "ellipsoid", "--lambda", "1,2,3,4,5"],
        &["generate", "twisted", "--window", "1"],
        &["generate", "ellipsoid", "--dim", "1", "--window", "-2,2"],
    ] {
        let o = copscan(args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn classify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cyl = spec(&dir, "cyl", &["cylinder", "--semi-axes", "2,3"]);
    let out = dir.path().join("report.json");
    let mut args = vec!["classify", "--spec", s(&cyl), "--out", s(&out)];
    args.extend(FAST);
    let o = copscan(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&out);
    assert_eq!(r["verdict"]["kind"], "CylinderOverCentralOvaloid");
    assert!(r["witness"].is_null());

    let tw = spec(&dir, "tw", &["twisted", "--omega", "0.5", "--dim", "1"]);
    let mut args = vec!["classify", "--spec", s(&tw)];
    args.extend(FAST);
    let o = copscan(&args);
    assert_eq!(code(&o), 2);
    let r = json(&o);
    assert_eq!(r["verdict"]["kind"], "NotCop");
    assert_eq!(r["witness"]["kind"], "Obstruction");
    assert!(r["witness"]["value"].as_f64().unwrap() > 1e-2);
}

#[test]
fn malformed_specs_exit_with_schema_errors() {
    let dir = TempDir::new().unwrap();
    let good = std::fs::read_to_string(spec(&dir, "t", &["twisted"])).unwrap();
    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, &good[..good.len() / 2]).unwrap();
    let o = copscan(&["classify", "--spec", s(&truncated)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("schema error"), "{}", stderr(&o));

    let wrong = dir.path().join("wrong.json");
    std::fs::write(
        &wrong,
        r#"{"dim": 2, "family": "twisted", "params": {"semi_axes": [1, 2, "x"], "omega": 0.5}, "z_range": [-1, 1]}"#,
    )
    .unwrap();
    let o = copscan(&["classify", "--spec", s(&wrong)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("params.semi_axes[2]"), "{}", stderr(&o));

    let missing = dir.path().join("missing.json");
    let o = copscan(&["classify", "--spec", s(&missing)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&copscan(&["classify"])), 1);
    assert_eq!(code(&copscan(&["frobnicate"])), 1);
    assert_eq!(code(&copscan(&["--help"])), 0);
    let o = copscan_env(&["generate", "cylinder"], &[("COPSCAN_THREADS", "0")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn thresholds_file_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let odd = spec(
        &dir,
        "odd",
        &["odd_perturbed", "--dim", "1", "--amplitude", "1e-4"],
    );
    let mut args = vec!["classify", "--spec", s(&odd)];
    args.extend(FAST);
    assert_eq!(code(&copscan(&args)), 2);
    let th = dir.path().join("th.json");
    std::fs::write(
        &th,
        r#"{"centrality": 1e-2, "pde": 1e-2, "axis": 1e-2, "split": 1e-2, "cylinder": 1e-2}"#,
    )
    .unwrap();
    args.extend(["--thresholds", s(&th)]);
    let o = copscan(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["config"]["thresholds"]["centrality"], 1e-2);

    std::fs::write(&th, r#"{"centrality": -1}"#).unwrap();
    assert_eq!(code(&copscan(&args)), 1);
    std::fs::write(&th, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(code(&copscan(&args)), 1);
}

#[test]
fn obstruction_summaries() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, args: &[&str]| -> Value {
        let p = spec(&dir, name, args);
        let o = copscan(&["obstruction", "--spec", s(&p), "--L", "24", "--grid", "17"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&o)
    };
    let e = run("e", &["ellipsoid", "--dim", "1"]);
    assert!(e["max_abs_f"].as_f64().unwrap() < 1e-5);
    let c = run("c", &["cylinder", "--dim", "2"]);
    assert!(c["max_abs_f"].as_f64().unwrap() < 1e-8);
    for n in ["v_sup", "s_sup"] {
        assert!(c["norms"][n].as_f64().unwrap() < 1e-8);
    }

    // The rotating section deforms most along its major semi-axis (y).
    let t = run("t", &["twisted", "--dim", "1"]);
    let max = t["max_abs_f"].as_f64().unwrap();
    assert!(max > 1e-2);
    let per_tau = t["sweep"]["per_tau"].as_array().unwrap();
    let best = per_tau
        .iter()
        .map(|p| p["value"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(best, max);
    let tau = &t["sweep"]["max"]["tau"];
    assert!(
        (tau[1].as_f64().unwrap().abs() - 1.0).abs() < 1e-12,
        "{tau}"
    );
}

#[test]
fn obstruction_writes_csv_and_json() {
    let dir = TempDir::new().unwrap();
    let p = spec(&dir, "t", &["twisted", "--dim", "1"]);
    let out = dir.path().join("obs");
    let o = copscan(&[
        "obstruction",
        "--spec",
        s(&p),
        "--out",
        s(&out),
        "--L",
        "8",
        "--grid",
        "9",
        "--sweep",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("obstruction.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "z,node,V_x,V_y,V_z,S,f_0,f_1,f_2,f_3"
    );
    // 9 heights times 2L+2 = 18 circle nodes.
    assert_eq!(lines.count(), 9 * 18);
    let summary = read_json(&out.join("obstruction.json"));
    assert_eq!(summary["taus"].as_array().unwrap().len(), 4);
}

#[test]
fn slice_centrality() {
    let dir = TempDir::new().unwrap();
    let e = spec(&dir, "e", &["ellipsoid", "--dim", "1"]);
    let t = spec(&dir, "t", &["twisted", "--dim", "1"]);
    let out = dir.path().join("slices");
    let o = copscan(&[
        "slice",
        "--spec",
        s(&e),
        "--tau",
        "1,1",
        "--z0",
        "0.1",
        "--eps",
        "0,0.05",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&out.join("slice.json"));
    let sections = r["sections"].as_array().unwrap();
    assert_eq!(sections.len(), 2);
    let flat = &sections[0];
    assert!(flat["heights"]
        .as_array()
        .unwrap()
        .iter()
        .all(|z| z.as_f64() == Some(0.1)));
    assert!(flat["central"].as_bool().unwrap());
    assert!(sections[1]["central"].as_bool().unwrap());
    let tau = &sections[1]["plane"]["tau"];
    assert!((tau[0].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    assert!(out.join("slice_0.csv").exists() && out.join("slice_1.csv").exists());

    let o = copscan(&[
        "slice",
        "--spec",
        s(&t),
        "--tau",
        "1,0",
        "--z0",
        "0",
        "--eps",
        "0.05",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!json(&o)["sections"][0]["central"].as_bool().unwrap());
}

#[test]
fn slice_rejects_large_tilts_and_bad_directions() {
    let dir = TempDir::new().unwrap();
    let t = spec(&dir, "t", &["twisted", "--dim", "1"]);
    let o = copscan(&[
        "slice",
        "--spec",
        s(&t),
        "--tau",
        "1,0",
        "--z0",
        "0",
        "--eps",
        "0.6",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("contraction factor"), "{}", stderr(&o));
    let o = copscan(&["slice", "--spec", s(&t), "--tau", "1,0,0", "--z0", "0"]);
    assert_eq!(code(&o), 1);
    let o = copscan(&["slice", "--spec", s(&t), "--tau", "0,0", "--z0", "0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn ellipsoid_command() {
    let dir = TempDir::new().unwrap();
    let e = spec(&dir, "e", &["ellipsoid", "--lambda", "1,2,3,1"]);
    let o = copscan(&["ellipsoid", "--spec", s(&e), "--L", "96"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert!((r["constant_value"].as_f64().unwrap() - 28.0).abs() < 1e-6);
    let axes: Vec<f64> = r["semi_axes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (a, b) in axes.iter().zip([1.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-7);
    }
    let c = spec(
        &dir,
        "c",
        &["cylinder", "--dim", "1", "--even-bump", "0.05"],
    );
    assert_eq!(code(&copscan(&["ellipsoid", "--spec", s(&c)])), 2);
}

#[test]
fn under_resolved_sections_are_flagged() {
    let dir = TempDir::new().unwrap();
    let e = spec(&dir, "e", &["ellipsoid", "--lambda", "1,2,3,1"]);
    let o = copscan(&["classify", "--spec", s(&e), "--grid", "17"]);
    assert!(stderr(&o).contains("under-resolved"), "{}", stderr(&o));
    let o = copscan(&["classify", "--spec", s(&e), "--grid", "17", "--L", "64"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!stderr(&o).contains("under-resolved"));
    assert_eq!(json(&o)["verdict"]["family"], "ellipsoid");
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let t = spec(&dir, "t", &["twisted", "--dim", "2"]);
    let mut outputs = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = dir.path().join(format!("obs{}", outputs.len()));
        let env = [("COPSCAN_THREADS", threads)];
        let c = copscan_env(
            &[
                "classify",
                "--spec",
                s(&t),
                "--L",
                "12",
                "--grid",
                "9",
                "--seed",
                "42",
            ],
            &env,
        );
        assert_eq!(code(&c), 2);
        let o = copscan_env(
            &[
                "obstruction",
                "--spec",
                s(&t),
                "--out",
                s(&out),
                "--L",
                "12",
                "--grid",
                "9",
                "--seed",
                "42",
            ],
            &env,
        );
        assert_eq!(code(&o), 0);
        let csv = std::fs::read(out.join("obstruction.csv")).unwrap();
        let summary = std::fs::read(out.join("obstruction.json")).unwrap();
        outputs.push((c.stdout, csv, summary));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let other = copscan(&[
        "classify",
        "--spec",
        s(&t),
        "--L",
        "12",
        "--grid",
        "9",
        "--seed",
        "43",
    ]);
    assert_ne!(other.stdout, outputs[0].0);
    assert_eq!(json(&other)["verdict"]["kind"], "NotCop");
}
