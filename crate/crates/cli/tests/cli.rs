use std::process::{Command, Output};

use serde_json::Value;

fn qtreeff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtreeff"))
        .args(args)
        .env_remove("QTREEFF_BUDGET_MB")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> (Value, i32) {
    let out = qtreeff(args);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    });
    (v, out.status.code().unwrap())
}

fn strip(mut v: Value) -> Value {
    qtreeff_cli::report::strip_timing(&mut v);
    v
}

#[test]
fn predict_examples() {
    let (v, code) = json(&["predict", "--d", "4", "--r", "2", "--k", "2", "--n", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["verdict"], "Unfrustrated");
    assert_eq!(
        v["result"]["dimensions"]["values"],
        serde_json::json!(["1", "4", "48", "6144"])
    );
    let (v, _) = json(&["predict", "--d", "2", "--r", "2", "--k", "1"]);
    assert_eq!(v["verdict"], "FrustratedAt(3)");
    assert_eq!(
        v["result"]["phase"]["tag"],
        serde_json::json!({"tag": "FrustratedAt", "n": 3})
    );
    let (v, _) = json(&["predict", "--d", "4", "--r", "4", "--k", "1"]);
    assert_eq!(v["verdict"], "Unfrustrated");
    assert_eq!(v["result"]["x_minus"], 2.0);
    assert_eq!(v["result"]["x_plus"], 2.0);
}

#[test]
fn reports_are_self_describing() {
    let (v, _) = json(&["predict", "--d", "3", "--r", "2"]);
    assert_eq!(v["tool"], "qtreeff");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["depth"], 10);
    assert_eq!(v["config"]["seeds"], serde_json::json!([0, 1, 2, 3, 4]));
    assert_eq!(v["config"]["budget_bytes"], 2048u64 << 20);
    assert!(v["tolerances"]["oracle_nullity_tol"].as_f64().unwrap() > 0.0);
    assert!(v["wall_ms"].is_number());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qtreeff(&["predict", "--d", "2", "--r", "5"]).status.code(), Some(2));
    assert_eq!(qtreeff(&["predict", "--d", "2"]).status.code(), Some(2));
    assert_eq!(qtreeff(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        qtreeff(&["simulate", "--d", "2", "--r", "1", "--mode", "fuzzy"])
            .status
            .code(),
        Some(2)
    );
    let out = qtreeff(&["frustration", "--d", "5", "--r", "2", "--fullrank", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "usage");
}

#[test]
fn simulate_with_oracle() {
    let (v, code) = json(&[
        "simulate", "--d", "2", "--r", "1", "--k", "1", "--depth", "5", "--seeds", "5", "--oracle",
    ]);
    assert_eq!(code, 0, "{v}");
    for s in v["result"]["seeds"].as_array().unwrap() {
        assert_eq!(s["oracle"]["nullity"], 6);
        assert_eq!(s["oracle"]["E"], 6);
    }
    let (v, code) = json(&[
        "simulate", "--d", "4", "--r", "2", "--k", "2", "--depth", "2", "--seeds", "5", "--oracle",
    ]);
    assert_eq!(code, 0);
    assert!(v["result"]["seeds"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["oracle"]["nullity"] == 48));
}

#[test]
fn oracle_skips_over_budget_and_keeps_recursive_result() {
    let (v, code) = json(&[
        "simulate",
        "--d",
        "3",
        "--r",
        "1",
        "--k",
        "2",
        "--depth",
        "3",
        "--seeds",
        "1",
        "--oracle",
        "--budget-dense",
        "2000",
    ]);
    assert_eq!(code, 0, "{v}");
    let s = &v["result"]["seeds"][0];
    assert_eq!(s["grow"]["observed"][3], 945);
    assert!(s["oracle"]["nullity"].is_null());
    assert!(s["notes"][0].as_str().unwrap().starts_with("oracle skipped"));
}

#[test]
fn memory_cap_gives_resource_exit() {
    let out = Command::new(env!("CARGO_BIN_EXE_qtreeff"))
        .args([
            "simulate", "--d", "4", "--r", "2", "--k", "2", "--depth", "3", "--seeds", "1",
        ])
        .env("QTREEFF_BUDGET_MB", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "resource");
    assert_eq!(v["config"]["budget_bytes"], 1u64 << 20);
    assert_eq!(
        v["result"]["seeds"][0]["grow"]["observed"],
        serde_json::json!([1, 4, 48])
    );
}

#[test]
fn frustration_examples() {
    let (v, code) = json(&["frustration", "--d", "3", "--r", "3", "--seeds", "10"]);
    assert_eq!(code, 0);
    let t = &v["result"]["theorem"];
    assert_eq!(t["hypothesis_status"], "empirical");
    for s in t["per_seed"].as_array().unwrap() {
        assert_eq!(s["onset"], 5);
        assert_eq!(s["bound_ok"], true);
    }
    let (v, code) = json(&["frustration", "--d", "4", "--r", "2"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["theorem"]["verdict"], "not applicable: unfrustrated regime");
    let (v, code) = json(&["frustration", "--d", "2", "--r", "2", "--lemma", "--seeds", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["lemma"]["n0"], 2);
    let out = qtreeff(&["frustration", "--d", "4", "--r", "2", "--lemma-n0", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let (v, code) = json(&[
        "frustration",
        "--d",
        "4",
        "--r",
        "2",
        "--k",
        "2",
        "--fullrank",
        "--level",
        "2",
        "--mode",
        "rational",
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["fullrank"]["witness"]["rank"], 16);
}

#[test]
fn asserted_theorem_violation_exits_nonzero() {
    // A one-megabyte cap stops growth before the onset is reached.
    let out = Command::new(env!("CARGO_BIN_EXE_qtreeff"))
        .args([
            "frustration",
            "--d",
            "6",
            "--r",
            "13",
            "--seeds",
            "1",
            "--assert-theorem",
        ])
        .env("QTREEFF_BUDGET_MB", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let out = qtreeff(&[
        "frustration",
        "--d",
        "3",
        "--r",
        "3",
        "--seeds",
        "2",
        "--n-max",
        "5",
        "--assert-theorem",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn phase_scan_grid_and_series() {
    let out = qtreeff(&[
        "phase-scan",
        "--d-range",
        "2..6",
        "--k-range",
        "1..2",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,r,k,rk,threshold,verdict,frustration_index,x_plus,log2_D_at_nmax"
    );
    let mut count = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (d, rk): (usize, usize) = (f[0].parse().unwrap(), f[3].parse().unwrap());
        let unfrustrated = 4 * rk <= d * d;
        assert_eq!(f[5] == "Unfrustrated", unfrustrated, "{line}");
        count += 1;
    }
    assert_eq!(count, 2 * (4 + 9 + 16 + 25 + 36));

    let (v, _) = json(&["phase-scan", "--d", "4", "--r", "3", "--gamma-series", "--n", "40"]);
    let series: Vec<f64> = v["result"]["points"][0]["gamma_series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(series.windows(2).all(|w| w[1] <= w[0]));
    assert!((series.last().unwrap() - 3.0).abs() < 1e-12);

    let out = qtreeff(&["phase-scan", "--d-range", "3..2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "d,r,k,rk,threshold,verdict,frustration_index,x_plus,log2_D_at_nmax\n"
    );
}

#[test]
fn validate_frames_grid_is_clean() {
    let (v, code) = json(&["validate-frames", "--d-range", "2..6", "--k-range", "1..3"]);
    assert_eq!(code, 0, "{}", v["verdict"]);
    let pts = v["result"]["points"].as_array().unwrap();
    let p = pts.iter().find(|p| p["d"] == 4 && p["r"] == 4 && p["k"] == 2).unwrap();
    assert_eq!(p["tree_feasible"], false);
    let p = pts.iter().find(|p| p["d"] == 4 && p["r"] == 2 && p["k"] == 2).unwrap();
    assert_eq!(p["tree_feasible"], true);
}

#[test]
fn determinism_across_jobs() {
    let text = |v: &Value| serde_json::to_string_pretty(v).unwrap();
    for (depth, seeds) in [("2", "4"), ("3", "2")] {
        let args = |jobs: &'static str| {
            vec![
                "simulate", "--d", "4", "--r", "2", "--k", "2", "--depth", depth, "--seeds", seeds, "--oracle",
                "--jobs", jobs,
            ]
        };
        let a = strip(json(&args("1")).0);
        let b = strip(json(&args("2")).0);
        assert_eq!(text(&a), text(&b));
    }
    let scan = |jobs| strip(json(&["phase-scan", "--d-range", "2..5", "--k-range", "1..3", "--jobs", jobs]).0);
    assert_eq!(text(&scan("1")), text(&scan("4")));
}

#[test]
fn output_file_and_gamma_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let dump = dir.path().join("gammas");
    let out = qtreeff(&[
        "simulate",
        "--d",
        "2",
        "--r",
        "1",
        "--k",
        "2",
        "--depth",
        "2",
        "--seed-list",
        "7",
        "--out",
        out_path.to_str().unwrap(),
        "--dump-gamma",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["result"]["seeds"][0]["seed"], 7);
    let root = std::fs::read_to_string(dump.join("seed7_level2_node0.mtx")).unwrap();
    let m = qtreeff::mmio::read_array(&root).unwrap();
    assert_eq!(m.nrows(), 8);
    assert_eq!(m.ncols(), 4);
    assert!(dump.join("seed7_level1_node1.mtx").exists());
}

#[test]
fn csv_projection_of_simulate() {
    let out = qtreeff(&[
        "simulate", "--d", "3", "--r", "2", "--depth", "3", "--seeds", "2", "--format", "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed,E,D,nullity,residual,ok,notes");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,15,15,"));
}
