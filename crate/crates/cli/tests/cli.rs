//! End-to-end tests of the command-line surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bclab"))
        .args(args)
        .output()
        .expect("spawning bclab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

#[test]
fn thin_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write(&input, "p,a\n0.5,0.6\n0.5,0.6\n0.5,0.6\n0.5,0.6\n");
    let out = bclab(&["thin", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "n,p,a,level_k,a_prime,p_prime,q");
    assert_eq!(data.len(), 5);
    for row in &data[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "1");
        assert_eq!(cols[5].parse::<f64>().unwrap(), 0.25);
    }
    // the achieved bound goes to the log
    assert!(stderr(&out).contains("sum p'_n a'_n"));
    assert!(text.contains("# sum_p_thinned_a_prime: 5.0000000000000000e-1"));
}

#[test]
fn thin_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    write(&input, "");
    let out = bclab(&["thin", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    // column header only, no data rows
    assert_eq!(data.len(), 1);
    assert!(text.contains("sum_p_thinned_a_prime: 0"));
}

#[test]
fn thin_rejects_bad_weight_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "p,a\n0.5,0.6\n1.5,0.6\n");
    let out = bclab(&["thin", "--input", input.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 3"), "stderr: {err}");
    assert!(err.contains("1.5"));
}

#[test]
fn thin_rejects_malformed_row_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "p,a\n0.5,0.6\n0.4,oops\n");
    let out = bclab(&["thin", "--input", input.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 3"));
}

#[test]
fn schedule_rejects_small_n_min_with_suggestion() {
    let out = bclab(&["schedule", "--n-min", "2", "--n-max", "10"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("16"), "stderr: {err}");
}

#[test]
fn schedule_row_100_values_through_csv() {
    let out = bclab(&[
        "schedule", "--theta", "0.5", "--n-min", "16", "--n-max", "100",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text
        .lines()
        .find(|l| l.starts_with("100,"))
        .expect("row 100 present");
    let cols: Vec<f64> = row
        .split(',')
        .map(|c| {
            if c.is_empty() {
                f64::NAN
            } else {
                c.parse().unwrap()
            }
        })
        .collect();
    // n,s,sigma,log_mprime,t,t_prime,pi,log_pb,pe_bound,a_mn,x_n
    assert!((cols[1] - 166.806).abs() <= 0.01);
    assert!((cols[2] - 2.098).abs() <= 0.01);
    assert!((cols[6] - 2.855).abs() <= 0.01);
    assert!((cols[8] - 0.3502).abs() <= 0.001);
    // scale columns are representable here: x_n = e^{t'}
    assert!((cols[10].ln() - cols[5]).abs() < 1e-12);
}

#[test]
fn schedule_single_row() {
    let out = bclab(&["schedule", "--n-min", "16", "--n-max", "16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2); // header + one row
    assert!(data[1].starts_with("16,"));
}

#[test]
fn simulate_bc_reports_schema_errors_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen.json");
    write(
        &scen,
        r#"{"variant":"independent_contamination","p":{"kind":"constant","c":"half"},"e":{"kind":"constant","c":0.1}}"#,
    );
    let out = bclab(&[
        "simulate-bc",
        "--scenario",
        scen.to_str().unwrap(),
        "--trials",
        "10",
        "--horizon",
        "10",
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("p.c"), "stderr: {err}");
}

#[test]
fn simulate_bc_rejects_invalid_margin() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen.json");
    write(
        &scen,
        r#"{"variant":"independent_contamination","p":{"kind":"constant","c":1.5},"e":{"kind":"constant","c":0.1}}"#,
    );
    let out = bclab(&[
        "simulate-bc",
        "--scenario",
        scen.to_str().unwrap(),
        "--trials",
        "10",
        "--horizon",
        "10",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("1.5"));
}

#[test]
fn simulate_bc_absorbing_conditional_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen.json");
    write(
        &scen,
        r#"{"variant":"absorbing","p":{"kind":"harmonic","c":1.0}}"#,
    );
    let out = bclab(&[
        "simulate-bc",
        "--scenario",
        scen.to_str().unwrap(),
        "--trials",
        "1000",
        "--horizon",
        "100",
        "--seed",
        "3",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let cond = &doc["results"]["conditional"];
    assert_eq!(cond["max_b_given_e"], 0);
    assert!(cond["trials_with_e"].as_u64().unwrap() > 300);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(
        &cfg,
        r#"{
          "scenario": {"variant":"independent_contamination",
                       "p":{"kind":"constant","c":0.5},
                       "e":{"kind":"constant","c":0.1}},
          "horizon": 50, "trials": 40, "seed": 12, "format": "json"
        }"#,
    );
    let from_file = bclab(&["simulate-bc", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&from_file)).unwrap();
    assert_eq!(doc["config"]["horizon"], 50);
    assert_eq!(doc["config"]["seed"], 12);

    let overridden = bclab(&[
        "simulate-bc",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&overridden)).unwrap();
    assert_eq!(doc["config"]["seed"], 99);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen.json");
    write(
        &scen,
        r#"{"variant":"bounded_dependence","p":{"kind":"harmonic","c":1.0},"e":{"kind":"reciprocal_log","c":1.0},"C":2.0}"#,
    );
    let run = |workers: &str, out: &Path| {
        let res = bclab(&[
            "simulate-bc",
            "--scenario",
            scen.to_str().unwrap(),
            "--trials",
            "200",
            "--horizon",
            "150",
            "--seed",
            "21",
            "--couple",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    };
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    run("1", &out1);
    run("4", &out2);
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn divergent_scenario_mean_count_grows_with_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen.json");
    write(
        &scen,
        r#"{"variant":"independent_contamination","p":{"kind":"harmonic","c":1.0},"e":{"kind":"reciprocal_log","c":1.0}}"#,
    );
    let mean_at = |horizon: &str| -> f64 {
        let out = bclab(&[
            "simulate-bc",
            "--scenario",
            scen.to_str().unwrap(),
            "--horizon",
            horizon,
            "--trials",
            "400",
            "--seed",
            "6",
            "--format",
            "json",
        ]);
        assert!(out.status.success());
        let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        doc["results"]["cumulative"]["mean"].as_f64().unwrap()
    };
    let short = mean_at("200");
    let long = mean_at("2000");
    assert!(long > short, "mean count must grow: {short} -> {long}");
}

#[test]
fn smallmax_json_carries_the_e1_statistic() {
    let out = bclab(&[
        "simulate-smallmax",
        "--n-min",
        "16",
        "--n-max",
        "40",
        "--trials",
        "500",
        "--seed",
        "11",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let e1 = doc["results"]["e1_reference"].as_f64().unwrap();
    assert!((e1 - 0.36787944117144233).abs() < 1e-15);
    let rows = doc["results"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 25);
    for row in rows {
        let f = row["freq_below_scale"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn smallmax_trials_of_one_are_well_formed() {
    let out = bclab(&[
        "simulate-smallmax",
        "--n-min",
        "16",
        "--n-max",
        "20",
        "--trials",
        "1",
        "--seed",
        "8",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 6); // header + 5 checkpoints
    for row in &data[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        // all empirical frequencies are 0 or 1 with a single trial
        for &c in &cols[8..12] {
            let v: f64 = c.parse().unwrap();
            assert!(v == 0.0 || v == 1.0, "{row}");
        }
    }
}
