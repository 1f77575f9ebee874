//! End-to-end runs of the compiled binary: argument handling, report
//! formats, exit codes, and seeding.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ddm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut command = Command::new(env!("CARGO_BIN_EXE_ddm"));
    // The ambient seed must not leak into tests that rely on the default.
    command.env_remove("DDM_SEED");
    for (key, value) in envs {
        command.env(key, value);
    }
    command.args(args);
    command.output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn json_report(output: &Output) -> Value {
    serde_json::from_str(&stdout(output)).expect("stdout is a JSON report")
}

fn write_csv(name: &str, content: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join(name);
    std::fs::write(&path, content).expect("writable temp dir");
    (dir, path)
}

// Four slow years, then a persistent high-growth regime.
const STEADY_CSV: &str = "date,dividend\n\
    2015-06-30,1.00\n2016-06-30,1.02\n2017-06-30,1.04\n2018-06-30,1.06\n\
    2019-06-30,1.08\n2020-06-30,1.17\n2021-06-30,1.26\n2022-06-30,1.36\n\
    2023-06-30,1.47\n2024-06-30,1.59\n";

#[test]
fn gordon_value_renders_json_with_the_stable_field_set() {
    let output = ddm(&[
        "value", "--model", "gordon", "--dividend", "2.0", "--growth", "0.04", "--rate",
        "0.09", "--output", "json",
    ], &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let report = json_report(&output);
    for field in [
        "model", "price", "psi1", "psi2", "variance", "covariance", "g_bar", "g_bar2",
        "conditions", "seed", "details",
    ] {
        assert!(report.get(field).is_some(), "missing field {field}");
    }
    assert_eq!(report["model"], "gordon");
    let price = report["price"].as_f64().expect("price is a number");
    assert!((price - 41.6).abs() < 1e-9, "got {price}");
    assert!(report["psi1"].is_null());
}

#[test]
fn table_output_skips_fields_the_command_does_not_produce() {
    let output = ddm(&[
        "value", "--model", "gordon", "--dividend", "2.0", "--growth", "0.04", "--rate",
        "0.09",
    ], &[]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("model"), "got: {text}");
    assert!(text.contains("gordon"), "got: {text}");
    assert!(text.contains("price"), "got: {text}");
    assert!(!text.contains("psi1"), "null fields must not render: {text}");
}

#[test]
fn domain_errors_exit_one_and_name_the_error() {
    // Growth at the discount rate: the perpetuity diverges.
    let output = ddm(&[
        "value", "--model", "gordon", "--dividend", "2.0", "--growth", "0.09", "--rate",
        "0.09",
    ], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("NonConvergent"),
        "stderr must carry the library error name verbatim: {}",
        stderr(&output)
    );

    let divergent = "date,dividend\n2020-06-30,1.0\n2021-06-30,2.0\n2022-06-30,3.9\n\
        2023-06-30,8.0\n2024-06-30,15.5\n";
    let (_dir, csv) = write_csv("doubler.csv", divergent);
    let output = ddm(&[
        "risk", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.10",
    ], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("TransversalityViolated"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn io_errors_exit_two() {
    let output = ddm(&[
        "risk", "--dividends", "/nonexistent/dividends.csv", "--rate", "0.10",
    ], &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_csv_exits_one_with_the_offending_line() {
    let (_dir, csv) = write_csv(
        "broken.csv",
        "date,dividend\n2020-06-30,1.00\n2021-06-30,-0.50\n",
    );
    let output = ddm(&[
        "risk", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.10",
    ], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("line 3"), "stderr: {}", stderr(&output));

    let (_dir, csv) = write_csv(
        "duplicated.csv",
        "date,dividend\n2020-06-30,1.00\n2020-06-30,1.05\n2021-06-30,1.10\n",
    );
    let output = ddm(&[
        "risk", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.10",
    ], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("duplicate date"),
        "stderr: {}",
        stderr(&output)
    );

    let (_dir, csv) = write_csv("badheader.csv", "date,amount\n2020-06-30,1.00\n");
    let output = ddm(&[
        "estimate", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.10",
    ], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("date,dividend"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn out_of_order_rows_sort_with_a_warning() {
    let (_dir, csv) = write_csv(
        "shuffled.csv",
        "date,dividend\n2021-06-30,1.33\n2015-06-30,1.00\n2016-06-30,1.08\n\
         2017-06-30,1.10\n2018-06-30,1.19\n2019-06-30,1.21\n2020-06-30,1.31\n",
    );
    let output = ddm(&[
        "risk", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.12",
    ], &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(
        stderr(&output).contains("out of order"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn estimate_reports_the_fitted_chain() {
    let (_dir, csv) = write_csv("acme.csv", STEADY_CSV);
    let output = ddm(&[
        "estimate", "--dividends", csv.to_str().expect("utf-8 path"), "--states", "2",
        "--rate", "0.10", "--output", "json",
    ], &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let report = json_report(&output);
    assert_eq!(report["model"], "estimate");
    assert_eq!(report["details"]["ticker"], "acme");
    assert_eq!(report["details"]["observations"], 10);
    assert_eq!(report["details"]["state_factors"].as_array().expect("array").len(), 2);
    assert_eq!(report["details"]["transition"].as_array().expect("array").len(), 2);
    assert!(report["g_bar"].is_number());
    assert!(report["conditions"]["a1"].is_boolean());
    assert!(report["conditions"]["a2"].is_boolean());
}

#[test]
fn risk_prices_the_latest_state_by_default() {
    let (_dir, csv) = write_csv("acme.csv", STEADY_CSV);
    let base = &[
        "risk", "--dividends", csv.to_str().expect("utf-8 path"), "--rate", "0.12",
        "--output", "json",
    ];
    let output = ddm(base, &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let report = json_report(&output);
    assert_eq!(report["model"], "markov-risk");
    let price = report["price"].as_f64().expect("price is a number");
    assert!(price > 0.0);
    assert_eq!(report["psi1"].as_array().expect("array").len(), 2);
    assert!(report["variance"].as_f64().expect("variance is a number") >= 0.0);
    // 1.59 grew by ~8% into the sample's last observation: state 1.
    assert_eq!(report["details"]["state"], 1);

    let mut with_state: Vec<&str> = base.to_vec();
    with_state.extend(["--state", "0"]);
    let pinned = json_report(&ddm(&with_state, &[]));
    assert_eq!(pinned["details"]["state"], 0);
    let pinned_price = pinned["price"].as_f64().expect("price is a number");
    assert!(pinned_price < price, "slump state must price lower");
}

#[test]
fn simulate_honours_the_seed_env_and_flag() {
    let base = [
        "simulate", "--process", "binomial-geometric", "--dividend", "2.0", "--growth",
        "0.05", "--up-probability", "0.7", "--rate", "0.09", "--paths", "2000",
        "--output", "json",
    ];
    let seeded_env = ddm(&base, &[("DDM_SEED", "99")]);
    assert!(seeded_env.status.success(), "stderr: {}", stderr(&seeded_env));
    let again = ddm(&base, &[("DDM_SEED", "99")]);
    assert_eq!(stdout(&seeded_env), stdout(&again), "same seed, same report");
    assert_eq!(json_report(&seeded_env)["seed"], 99);

    let mut flagged: Vec<&str> = base.to_vec();
    flagged.extend(["--seed", "7"]);
    let seeded_flag = ddm(&flagged, &[("DDM_SEED", "99")]);
    assert_eq!(
        json_report(&seeded_flag)["seed"], 7,
        "the flag must override the environment"
    );
    assert_ne!(stdout(&seeded_env), stdout(&seeded_flag));

    let default = ddm(&base, &[]);
    assert_eq!(json_report(&default)["seed"], 0);
}

#[test]
fn simulate_tracks_its_closed_form() {
    let output = ddm(&[
        "simulate", "--process", "binomial-geometric", "--dividend", "2.0", "--growth",
        "0.05", "--up-probability", "0.7", "--rate", "0.09", "--paths", "60000",
        "--output", "json",
    ], &[]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let report = json_report(&output);
    let mean = report["price"].as_f64().expect("number");
    let closed = report["details"]["closed_form"].as_f64().expect("number");
    let std_error = report["details"]["std_error"].as_f64().expect("number");
    assert!(
        (mean - closed).abs() <= 4.0 * std_error,
        "sample mean {mean} vs closed form {closed} (se {std_error})"
    );
}

#[test]
fn help_and_version_exit_zero() {
    let help = ddm(&["--help"], &[]);
    assert_eq!(help.status.code(), Some(0));
    for subcommand in ["value", "estimate", "risk", "simulate"] {
        assert!(stdout(&help).contains(subcommand), "help lists {subcommand}");
    }
    let version = ddm(&["--version"], &[]);
    assert_eq!(version.status.code(), Some(0));
    assert!(stdout(&version).contains("ddm"));

    let unknown = ddm(&["appraise"], &[]);
    assert_eq!(unknown.status.code(), Some(1));
}
