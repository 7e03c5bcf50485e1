//! End-to-end checks of the command-line binary: exit codes, flag and
//! configuration precedence, output formats, and numeric round trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gridlrv"));
    // Keep spawned runs off any ambient configuration.
    c.env_remove("GRIDLRV_SEED");
    c.env_remove("GRIDLRV_FORMAT");
    c.env_remove("GRIDLRV_THREADS");
    c
}

static DIR_SEQ: AtomicU32 = AtomicU32::new(0);

fn workdir(tag: &str) -> PathBuf {
    let seq = DIR_SEQ.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "gridlrv-cli-{}-{tag}-{seq}",
        std::process::id()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn simulate_m1(dir: &Path) -> PathBuf {
    let field = dir.join("f.csv");
    let out = bin()
        .args(["simulate", "--model", "m1", "--shape", "20,24", "--seed", "17"])
        .arg("--out")
        .arg(&field)
        .output()
        .unwrap();
    assert!(out.status.success(), "simulate failed: {}", stderr_str(&out));
    field
}

/// Data rows of a CSV result: everything after the header line,
/// skipping `#` metadata.
fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn estimate_happy_path_and_seed_env() {
    let dir = workdir("happy");
    let field = simulate_m1(&dir);

    let out = bin()
        .args(["estimate", "--m", "2,2", "--kernel", "constant", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.contains("# kernel: constant"));
    assert!(text.contains("# m: 2x2"));
    assert!(text.contains("# kept_lags: 25"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 1);
    let sigma2: f64 = rows[0][0].parse().unwrap();
    assert!(sigma2.is_finite() && sigma2 > 0.0);

    // The env override stands in for the flag: same seed, same field.
    let env_field = dir.join("g.csv");
    let out = bin()
        .args(["simulate", "--model", "m1", "--shape", "20,24"])
        .arg("--out")
        .arg(&env_field)
        .env("GRIDLRV_SEED", "17")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&field).unwrap(), fs::read(&env_field).unwrap());
}

#[test]
fn oversized_m_exits_2_naming_the_violation() {
    let dir = workdir("m-violation");
    let field = simulate_m1(&dir);
    let out = bin()
        .args(["estimate", "--m", "99,99", "--kernel", "constant", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_str(&out);
    assert!(err.contains("m"), "diagnostic should name m: {err}");
    assert!(err.contains("99"), "diagnostic should show the value: {err}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["estimate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computation_failure_exits_1_with_typed_name() {
    // Alternating columns make gamma(0,1) = -1 while gamma(0,0) = 1, so
    // the constant-kernel estimate at m=(0,1) is exactly -1.
    let dir = workdir("neg-var");
    let field = dir.join("stripes.csv");
    let mut text = String::from("2,4,4,1\n");
    for _ in 0..4 {
        for col in 0..4 {
            text.push_str(if col % 2 == 0 { "1.0\n" } else { "-1.0\n" });
        }
    }
    fs::write(&field, text).unwrap();
    let out = bin()
        .args(["image-test", "--m", "0,1", "--cut", "none", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_str(&out).contains("NegativeVarianceEstimate"));
}

#[test]
fn config_file_fills_defaults_and_flags_win() {
    let dir = workdir("config");
    let field = simulate_m1(&dir);
    let cfg = dir.join("cfg.txt");
    fs::write(&cfg, "# defaults\nkernel = qs\nbandwidth = 2.5\nm = 1,1\n").unwrap();

    let from_file = bin()
        .args(["estimate", "--input"])
        .arg(&field)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(from_file.status.success());
    let text = stdout_str(&from_file);
    assert!(text.contains("# kernel: qs(bw=2.5)"));
    assert!(text.contains("# m: 1x1"));

    let overridden = bin()
        .args(["estimate", "--kernel", "constant", "--input"])
        .arg(&field)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(overridden.status.success());
    assert!(stdout_str(&overridden).contains("# kernel: constant"));

    let empty = dir.join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = bin()
        .args(["estimate", "--m", "1,1", "--input"])
        .arg(&field)
        .arg("--config")
        .arg(&empty)
        .output()
        .unwrap();
    assert!(out.status.success(), "empty config means plain defaults");
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = workdir("bad-config");
    let field = simulate_m1(&dir);

    let unknown = dir.join("unknown.txt");
    fs::write(&unknown, "kernell = qs\n").unwrap();
    let out = bin()
        .args(["estimate", "--m", "1,1", "--input"])
        .arg(&field)
        .arg("--config")
        .arg(&unknown)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("kernell"));

    let broken = dir.join("broken.txt");
    fs::write(&broken, "kernel = qs\nbandwidth 2.5\n").unwrap();
    let out = bin()
        .args(["estimate", "--m", "1,1", "--input"])
        .arg(&field)
        .arg("--config")
        .arg(&broken)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("line 2"));
}

#[test]
fn reproduce_smoke_run_is_deterministic_and_round_trips() {
    let run = || {
        let out = bin()
            .args(["reproduce", "--table", "1", "--reps", "50", "--seed", "7"])
            .output()
            .unwrap();
        assert!(out.status.success());
        stdout_str(&out)
    };
    let text = run();
    assert_eq!(text, run(), "same seed, same bytes");

    let rows = data_rows(&text);
    assert_eq!(rows.len(), 10, "one row per truncation box");
    assert!(text.contains("# master_seed: 7"));
    assert!(text.contains("m,mean,rmse,bias,variance"));
    // Every numeric cell re-parses to exactly the printed value.
    for row in &rows {
        for cell in &row[1..] {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(&format!("{v:.16e}"), cell);
        }
    }
}

#[test]
fn unknown_preset_exits_2() {
    let out = bin()
        .args(["reproduce", "--table", "4", "--reps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("table"));
}

#[test]
fn json_format_is_valid_and_matches_csv_values() {
    let dir = workdir("json");
    let field = simulate_m1(&dir);
    let args = ["threshold-estimate", "--m", "2,2", "--alpha", "5.8"];

    let csv = bin().args(args).arg("--input").arg(&field).output().unwrap();
    assert!(csv.status.success());
    let csv_value: f64 = data_rows(&stdout_str(&csv))[0][0].parse().unwrap();

    let json = bin()
        .args(args)
        .arg("--input")
        .arg(&field)
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert!(json.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout_str(&json)).unwrap();
    assert_eq!(v["columns"][0], "sigma2_0");
    assert_eq!(v["meta"]["cut"], "power_l2(alpha=5.8,delta=0.0001)");
    assert_eq!(v["rows"][0][0].as_f64().unwrap(), csv_value);
}

#[test]
fn binary_and_csv_fields_give_identical_estimates() {
    let dir = workdir("binary");
    let csv_field = simulate_m1(&dir);
    let bin_field = dir.join("f.bin");
    let out = bin()
        .args(["simulate", "--model", "m1", "--shape", "20,24", "--seed", "17", "--binary"])
        .arg("--out")
        .arg(&bin_field)
        .output()
        .unwrap();
    assert!(out.status.success());

    let from_csv = bin()
        .args(["estimate", "--m", "2,2", "--input"])
        .arg(&csv_field)
        .output()
        .unwrap();
    let from_bin = bin()
        .args(["estimate", "--m", "2,2", "--binary-input", "--input"])
        .arg(&bin_field)
        .output()
        .unwrap();
    assert!(from_bin.status.success());
    assert_eq!(
        data_rows(&stdout_str(&from_csv)),
        data_rows(&stdout_str(&from_bin))
    );
}

#[test]
fn subsample_and_selection_commands_run() {
    let dir = workdir("subsample");
    let field = simulate_m1(&dir);

    let mean = bin()
        .args(["subsample", "--gamma", "0.8", "--m", "1,1", "--stat", "mean", "--input"])
        .arg(&field)
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert!(mean.status.success());
    let rows = data_rows(&stdout_str(&mean));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][0].parse::<f64>().unwrap() > 0.0);

    let values = bin()
        .args(["subsample", "--block", "8,8", "--stride", "4,4", "--m", "1,1", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert!(values.status.success());
    // 20x24 grid, 8x8 blocks on a 4-stride lattice: 4 x 5 placements.
    assert_eq!(data_rows(&stdout_str(&values)).len(), 20);

    let select = bin()
        .args(["select-m", "--gamma", "0.9", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert!(select.status.success());
    let text = stdout_str(&select);
    let rows = data_rows(&text);
    assert_eq!(rows[0].len(), 2, "one column per axis");

    let tune = bin()
        .args(["tune", "--gamma", "0.9", "--alpha-grid", "0,2,4,6", "--input"])
        .arg(&field)
        .output()
        .unwrap();
    assert!(tune.status.success());
    let text = stdout_str(&tune);
    assert!(text.contains("# chosen_alpha:"));
    assert_eq!(data_rows(&text).len(), 4, "one row per grid point");
}
