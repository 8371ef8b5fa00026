use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tllreach::{io, one_step_exact_bbox, select_method, BoundingBox, Context};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tll-reach"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1, "expected one JSON line, got {text}");
    serde_json::from_str(&text).expect("stdout is JSON")
}

fn generate(dir: &Path, big_n: usize, count: usize, seed: u64) -> Vec<PathBuf> {
    let out = run(&[
        "generate",
        "--N",
        &big_n.to_string(),
        "--M",
        &big_n.to_string(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    stdout_json(&out)["generated"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| PathBuf::from(g["file"].as_str().unwrap()))
        .collect()
}

fn without_timing(mut v: Value) -> String {
    v["stats"].as_object_mut().unwrap().remove("wall_ms");
    v.to_string()
}

#[test]
fn generate_is_deterministic_and_valid() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = generate(a.path(), 8, 10, 3);
    let fb = generate(b.path(), 8, 10, 3);
    assert_eq!(fa.len(), 10);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        let out = run(&["validate", x.to_str().unwrap()]);
        assert!(out.status.success());
        assert_eq!(stdout_json(&out)["kind"], "problem");
    }
    let p = io::load_problem(&fa[0]).unwrap();
    assert_eq!((p.controller.input_dim(), p.controller.output_dim()), (2, 1));
    assert_eq!((p.controller.num_functions(), p.controller.num_groups()), (8, 8));
    assert_eq!((p.epsilon, p.steps), (0.1, 3));
}

#[test]
fn exact_box_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 8, 1, 0)[0];
    let out = run(&["reach", "--problem", f.to_str().unwrap(), "--method", "exact-box", "--steps", "1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let got: BoundingBox = serde_json::from_value(v["boxes"][0].clone()).unwrap();
    let p = io::load_problem(f).unwrap();
    let expect = one_step_exact_bbox(&p.system, &p.controller, &p.x0, &Context::default()).unwrap();
    assert_eq!(got, expect);
    assert_eq!(v["method_per_step"], serde_json::json!(["exact_box"]));
}

#[test]
fn three_steps_give_three_boxes_and_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 8, 1, 1)[0];
    let r = dir.path().join("r.json");
    let out = run(&[
        "reach",
        "--problem",
        f.to_str().unwrap(),
        "--method",
        "ltllbox",
        "--out",
        r.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["boxes"].as_array().unwrap().len(), 3);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&r).unwrap()).unwrap();
    assert_eq!(file, v);
    assert!(v["stats"]["nodes"].as_u64().unwrap() > 0);
}

#[test]
fn auto_logs_both_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 8, 1, 2)[0];
    let out = bin()
        .args(["reach", "--problem", f.to_str().unwrap(), "--method", "auto", "--steps", "1"])
        .env("RUST_LOG", "info")
        .env("NO_COLOR", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let p = io::load_problem(f).unwrap();
    let sel = select_method(&p.system, &p.controller, &p.x0, p.epsilon, &Context::default()).unwrap();
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("method selection"), "{log}");
    assert!(log.contains(&format!("exact_box_ops={:?}", sel.exact_box.predicted_ops)), "{log}");
    assert!(log.contains(&format!("grid_ops={:?}", sel.grid.predicted_ops)), "{log}");
    let v = stdout_json(&out);
    let chosen = &v["selections"][0]["chosen"]["method"];
    assert_eq!(chosen, &v["method_per_step"][0]);
}

#[test]
fn results_identical_across_runs_threads_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 16, 1, 4)[0];
    let svg = dir.path().join("r.svg");
    for method in ["ltllbox", "auto", "exact"] {
        let base = ["reach", "--problem", f.to_str().unwrap(), "--method", method];
        let a = run(&base);
        let b = bin().args(base).env("TLLREACH_THREADS", "1").output().unwrap();
        let mut with_svg = base.to_vec();
        with_svg.extend(["--svg", svg.to_str().unwrap()]);
        let c = run(&with_svg);
        let ra = without_timing(stdout_json(&a));
        assert_eq!(ra, without_timing(stdout_json(&b)), "{method}");
        assert_eq!(ra, without_timing(stdout_json(&c)), "{method}");
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn exact_method_writes_pieces() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 4, 1, 5)[0];
    let out = run(&["reach", "--problem", f.to_str().unwrap(), "--method", "exact", "--steps", "2"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(!v["pieces"].as_array().unwrap().is_empty());
    assert_eq!(v["boxes"].as_array().unwrap().len(), 2);
}

#[test]
fn cost_guard_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = &generate(dir.path(), 8, 1, 6)[0];
    let out = run(&["reach", "--problem", f.to_str().unwrap(), "--method", "grid", "--eps", "1e-6"]);
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&out);
    assert_eq!(v["failed_step"], 1);
    assert!(v["error"].as_str().unwrap().contains("exceeds cap"));
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["reach", "--problem", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"].is_string());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 1,\n \"m\": }").unwrap();
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["valid"], false);
    assert!(v["error"].as_str().unwrap().contains("line 2"));
    let f = &generate(dir.path(), 4, 1, 0)[0];
    let out = bin()
        .args(["reach", "--problem", f.to_str().unwrap()])
        .env("TLLREACH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn lipschitz_of_identity_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(
        dir.path(),
        "id.json",
        r#"{"n":1,"m":1,"N":1,"M":1,"components":[{"W":[[1]],"b":[0],"selectors":[[1]]}]}"#,
    );
    let out = run(&["lipschitz", "--controller", c.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["lipschitz"], 1.0);
}

#[test]
fn verify_absolute_value() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(
        dir.path(),
        "abs.json",
        r#"{"n":1,"m":1,"N":2,"M":2,"components":[{"W":[[1],[-1]],"b":[0,0],"selectors":[[1],[2]]}]}"#,
    );
    let p = write(dir.path(), "p.json", r#"{"C":[[1],[-1]],"d":[1,1]}"#);
    let (c, p) = (c.to_str().unwrap(), p.to_str().unwrap());
    let out = run(&["verify", "--controller", c, "--input-set", p, "--lb", "-0.5"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["holds"], true);
    let out = run(&["verify", "--controller", c, "--input-set", p, "--lb", "0.5"]);
    let v = stdout_json(&out);
    assert_eq!(v["holds"], false);
    let x = v["outputs"][0]["counterexample"][0].as_f64().unwrap();
    assert!(x.abs() < 0.5);
    let out = run(&["verify", "--controller", c, "--input-set", p, "--outbox", "--tol", "1e-6"]);
    let v = stdout_json(&out);
    assert!((v["hi"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let lo = v["lo"][0].as_f64().unwrap();
    assert!((-1e-6 - 1e-9..=1e-9).contains(&lo));
    let out = run(&["verify", "--controller", c, "--input-set", p]);
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit with 2");
}

#[test]
fn bench_reports_per_size_medians() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    generate(&suite, 8, 2, 0);
    generate(&suite, 16, 1, 0);
    let report = dir.path().join("report.json");
    let out = run(&[
        "bench",
        "--suite",
        suite.to_str().unwrap(),
        "--methods",
        "ltllbox,exact-box",
        "--timeout",
        "120",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["runs"].as_array().unwrap().len(), 6);
    let summary = v["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 4);
    assert_eq!(summary[0]["size"], "N8_M8");
    for s in summary {
        assert_eq!(s["completed"], s["runs"]);
        assert!(s["median_final_area"].as_f64().unwrap() > 0.0);
    }
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(file, v);
}

#[test]
fn bench_timeout_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    generate(&suite, 32, 1, 0);
    let out = run(&["bench", "--suite", suite.to_str().unwrap(), "--methods", "ltllbox", "--timeout", "0.001"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["runs"][0]["status"], "timeout");
}
