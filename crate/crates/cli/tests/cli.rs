//! End-to-end tests of the `qjump` binary: argument handling, config-file
//! layering, output format, exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn qjump(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjump"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Parse an emitted table: header columns, numeric rows, trailing comments.
fn parse_table(text: &str) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if header.is_empty() {
                header = rest.split(',').map(|s| s.trim().to_string()).collect();
            } else {
                comments.push(rest.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            rows.push(
                line.split(',')
                    .map(|v| v.trim().parse().expect("numeric cell"))
                    .collect(),
            );
        }
    }
    (header, rows, comments)
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
    parse_table(&std::fs::read_to_string(path).expect("table file"))
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(qjump(&["--help"]).status.code(), Some(0));
    assert_eq!(qjump(&["--version"]).status.code(), Some(0));
    assert_eq!(qjump(&["rates", "--help"]).status.code(), Some(0));
}

#[test]
fn bad_usage_exits_one() {
    // No subcommand.
    assert_eq!(qjump(&[]).status.code(), Some(1));
    // Unknown flag.
    assert_eq!(qjump(&["rates", "--bogus"]).status.code(), Some(1));
    // Bad enum value.
    assert_eq!(qjump(&["rates", "--order", "tcl6"]).status.code(), Some(1));
    // Bad numeric range.
    let out = qjump(&["rates", "--points", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("points"));
}

#[test]
fn rates_preset_emits_scaled_resonant_table() {
    let out = qjump(&["rates", "--preset", "fig1"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows, comments) = parse_table(&stdout_of(&out));
    assert_eq!(
        header,
        ["t", "gamma2", "gamma4", "gamma_exact", "s2", "s4", "s_exact"]
    );
    assert_eq!(rows.len(), 301);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[300][0] - 3.0).abs() < 1e-12);
    // Resonant rates stay non-negative: no flag comment.
    assert!(comments.is_empty());
    // Large-t values sit near the asymptotes (γ₀ = 1, so scaling is a no-op).
    let last = &rows[300];
    assert!((last[1] - 1.0).abs() < 1e-6);
    assert!((last[2] - 1.1).abs() < 1e-3);
}

#[test]
fn rates_detuned_preset_flags_negative_gamma4() {
    let out = qjump(&["rates", "--preset", "fig3"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows, comments) = parse_table(&stdout_of(&out));
    assert_eq!(rows.len(), 251);
    assert!(rows.iter().any(|r| r[2] < 0.0), "expected negative gamma4 entries");
    assert!(comments.iter().any(|c| c.contains("gamma4 < 0")));
}

#[test]
fn out_flag_writes_the_table_to_a_file_and_keeps_stdout_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rates.csv");
    let out = qjump(&[
        "rates",
        "--preset",
        "fig1",
        "--points",
        "11",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).is_empty());
    let (_, rows, _) = read_table(&path);
    assert_eq!(rows.len(), 11);
}

#[test]
fn config_file_layers_between_preset_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = fig3\npoints = 11 # small grid\ntmax = 0.4\n")
        .unwrap();
    let out = qjump(&[
        "rates",
        "--config",
        cfg.to_str().unwrap(),
        "--points",
        "6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows, _) = parse_table(&stdout_of(&out));
    // Flag beat the file's points; the file's tmax beat the preset's 0.5.
    assert_eq!(rows.len(), 6);
    assert!((rows[5][0] - 0.4).abs() < 1e-12);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "gamma_zero = 1\n").unwrap();
    let out = qjump(&["rates", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("unknown key"), "stderr: {err}");
    assert!(err.contains("line 1"), "stderr: {err}");
}

#[test]
fn decay_exact_density_matches_the_markov_law_shape() {
    let out = qjump(&[
        "decay",
        "--mode",
        "exact-density",
        "--points",
        "7",
        "--tmax",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows, _) = parse_table(&stdout_of(&out));
    assert_eq!(header, ["t", "rho11", "rho11_markov", "deviation"]);
    assert_eq!(rows[0][1], 1.0);
    assert_eq!(rows[0][3], 0.0);
    // Monotone decay of the Markov column.
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
}

#[test]
fn simulate_standard_refuses_negative_rate_grids_naming_doubled_mode() {
    let out = qjump(&[
        "simulate",
        "--preset",
        "fig3",
        "--mode",
        "standard",
        "--ntraj",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("--mode doubled"), "stderr: {err}");
    assert!(err.contains("negative"), "stderr: {err}");
}

#[test]
fn simulate_small_run_reports_jump_summary() {
    let out = qjump(&[
        "simulate",
        "--mode",
        "standard",
        "--ntraj",
        "200",
        "--points",
        "5",
        "--seed",
        "31",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows, comments) = parse_table(&stdout_of(&out));
    assert_eq!(header, ["t", "rho11_mean", "rho11_stderr", "deviation_mean"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1], 1.0);
    assert_eq!(rows[0][2], 0.0);
    assert!(comments.iter().any(|c| c.starts_with("trajectories: 200")));
}

#[test]
fn validate_passes_clean_and_fails_under_fault_injection() {
    let out = qjump(&["validate"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    assert!(text.contains("15 of 15 checks passed"), "stdout: {text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 15);
    assert!(text.contains("markov-asymptote"));

    let out = qjump(&["validate", "--inject-gamma4-offset", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout_of(&out);
    assert!(text.contains("FAIL  gamma4-quadrature-resonant"), "stdout: {text}");
    assert!(text.contains("FAIL  gamma4-quadrature-detuned"), "stdout: {text}");
}
