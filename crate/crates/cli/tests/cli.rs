use std::path::{Path, PathBuf};
use std::process::Command;

use omega_pension_cli::pipeline::{compare_modes, run_scenario, run_sweep, RunOptions, Status};
use omega_pension_cli::ScenarioConfig;

fn cfg(text: &str) -> ScenarioConfig {
    let c = ScenarioConfig::parse(text, Path::new("inline.json")).unwrap();
    c.validate().unwrap();
    c
}

fn opts() -> RunOptions {
    RunOptions { diagnostic: false, command: "solve".into() }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn assert_same_tree(a: &Path, b: &Path) {
    let fa = files(a);
    let fb = files(b);
    let rel = |v: &[PathBuf], root: &Path| v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect::<Vec<_>>();
    assert_eq!(rel(&fa, a), rel(&fb, b));
    for (x, y) in fa.iter().zip(&fb) {
        assert!(read(x) == read(y), "{} differs", x.display());
    }
}

const RESCALED: &str = r#"{ "theta": 6.0, "floor": 6.5, "epsilon": 0.01, "rescale": 0.5, "seed": 3 }"#;

#[test]
fn vacuous_var_matches_absent_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let a = cfg(r#"{ "theta": 6.0, "floor": 6.5, "epsilon": 1.0, "rescale": 0.5 }"#);
    let b = cfg(r#"{ "theta": 6.0, "floor": 0.0, "epsilon": 0.01, "rescale": 0.5 }"#);
    let ra = run_scenario(&a, &dir.path().join("a"), &opts()).unwrap();
    let rb = run_scenario(&b, &dir.path().join("b"), &opts()).unwrap();
    assert_eq!(ra.status, Status::Solved);
    assert_eq!(rb.status, Status::Solved);
    let (ra, rb) = (ra.result.unwrap(), rb.result.unwrap());
    assert_eq!(ra.lambda, 0.0);
    assert_eq!(rb.lambda, 0.0);
    assert_eq!(read(dir.path().join("a/curve.csv")), read(dir.path().join("b/curve.csv")));
}

#[test]
fn reruns_are_byte_identical_and_manifest_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(RESCALED);
    run_scenario(&c, &dir.path().join("one"), &opts()).unwrap();
    run_scenario(&c, &dir.path().join("two"), &opts()).unwrap();
    assert_same_tree(&dir.path().join("one"), &dir.path().join("two"));

    let again = ScenarioConfig::load(&dir.path().join("one/manifest.json")).unwrap();
    assert_eq!(again, c);
    run_scenario(&again, &dir.path().join("three"), &opts()).unwrap();
    assert_same_tree(&dir.path().join("one"), &dir.path().join("three"));
}

#[test]
fn curve_rows_are_monotone_and_regions_match_label() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&cfg(RESCALED), dir.path(), &opts()).unwrap();
    let r = out.result.unwrap();
    let text = String::from_utf8(read(dir.path().join("curve.csv"))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("H,Z"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (h, z) = l.split_once(',').unwrap();
            (h.parse().unwrap(), z.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 1000);
    for w in rows.windows(2) {
        assert!(w[1].0 > w[0].0);
        assert!(w[1].1 <= w[0].1);
    }
    let regions: serde_json::Value = serde_json::from_slice(&read(dir.path().join("curve_regions.json"))).unwrap();
    assert_eq!(regions["regions"].as_array().unwrap().len(), r.branch_table.kinds.len());
    assert_eq!(regions["label"], serde_json::json!(r.label.to_string()));
}

#[test]
fn sweep_points_share_the_rescaled_market() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"{ "theta": 6.0, "floor": 5.0, "epsilon": 0.01, "rescale": 0.8,
        "sweep": { "parameter": "floor", "values": [5.0, 5.5] } }"#);
    let s = run_sweep(&c, dir.path(), &opts()).unwrap();
    assert_eq!(s.status, Status::Solved);
    assert!(s.points.iter().all(|p| p.lambda == Some(0.0)));
    let d0 = dir.path().join(&s.points[0].dir);
    let d1 = dir.path().join(&s.points[1].dir);
    assert_eq!(read(d0.join("curve.csv")), read(d1.join("curve.csv")));
    // a point's manifest reproduces that point on its own
    let point = ScenarioConfig::load(&d1.join("manifest.json")).unwrap();
    let rerun = run_scenario(&point, &dir.path().join("rerun"), &opts()).unwrap();
    assert_eq!(rerun.status, Status::Solved);
    assert_eq!(read(d1.join("curve.csv")), read(dir.path().join("rerun/curve.csv")));
}

#[test]
fn compare_first_mode_is_the_epsilon_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(RESCALED);
    let cmp = compare_modes(&c, &dir.path().join("cmp"), &opts()).unwrap();
    assert_eq!(cmp.status, Status::Solved);
    assert_eq!(cmp.fixed_nu.as_ref().unwrap().nu, 1.0);
    assert_eq!(cmp.floor_interval_weakly_larger, Some(true));

    let free = ScenarioConfig::load(&dir.path().join("cmp/no_var/manifest.json")).unwrap();
    assert_eq!(free.epsilon, 1.0);
    run_scenario(&free, &dir.path().join("free"), &opts()).unwrap();
    assert_eq!(read(dir.path().join("cmp/no_var/curve.csv")), read(dir.path().join("free/curve.csv")));
}

#[test]
fn infeasible_baseline_gets_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"{ "theta": 6.0, "floor": 6.5, "epsilon": 0.01,
        "probes": [ { "nu": 1.0, "lambda": 0.5, "beta": 0.2 } ] }"#);
    let out = run_scenario(&c, dir.path(), &opts()).unwrap();
    assert_eq!(out.status, Status::Infeasible);
    assert!(out.result.is_none());
    let d: serde_json::Value = serde_json::from_slice(&read(dir.path().join("diagnostic.json"))).unwrap();
    assert_eq!(d["optimality_claimed"], false);
    assert_eq!(d["feasibility"]["verdict"], "ViolatesUpper");
    assert_eq!(d["points"].as_array().unwrap().len(), 1);
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_omega-pension")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let out = |n: &str| dir.path().join(n).to_str().unwrap().to_string();

    let ok = write("ok.json", RESCALED);
    let (code, stdout) = binary(&["solve", &ok, "--out", &out("ok"), "--quadrature-nodes", "320", "--seed", "9"]);
    assert_eq!(code, 0, "{stdout}");
    let summary: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary["status"], "solved");
    let m = ScenarioConfig::load(&dir.path().join("ok/manifest.json")).unwrap();
    assert_eq!((m.quadrature.nodes, m.seed), (320, 9));

    let bad = write("bad.json", RESCALED);
    let (code, _) = binary(&["solve", &bad, "--out", &out("diag"), "--diagnostic"]);
    assert_eq!(code, 0);
    assert!(dir.path().join("diag/diagnostic.json").exists());

    let infeasible = write("inf.json", r#"{ "theta": 6.0, "floor": 6.5, "epsilon": 0.01 }"#);
    assert_eq!(binary(&["solve", &infeasible, "--out", &out("inf")]).0, 2);

    let broken = write("broken.json", r#"{ "theta": 6.0, "flor": 6.5, "epsilon": 0.01 }"#);
    assert_eq!(binary(&["solve", &broken, "--out", &out("broken")]).0, 1);

    assert_eq!(binary(&["sweep", &ok, "--out", &out("nosweep")]).0, 1);
}
