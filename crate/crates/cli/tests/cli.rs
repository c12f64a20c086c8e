use std::fs;
use std::path::PathBuf;
use std::process::Command;

use clap::Parser;
use fdisac::config::Profile;
use fdisac_cli::{parse_values, resolve_config, Cli, Common, Format};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdisac"))
}

fn common(config: Option<PathBuf>) -> Common {
    Common {
        config,
        seed: None,
        trials: None,
        profile: None,
        out: PathBuf::from("."),
        format: Format::Csv,
    }
}

#[test]
fn value_lists_and_ranges() {
    assert_eq!(parse_values("0:5:30").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    assert_eq!(parse_values("0, 32,64").unwrap(), vec![0.0, 32.0, 64.0]);
    assert_eq!(parse_values("-10:0.1:-9.8").unwrap().len(), 3);
    assert!(parse_values("1:0:5").is_err());
    assert!(parse_values("5:1:1").is_err());
    assert!(parse_values("1:2").is_err());
    assert!(parse_values("a,b").is_err());
}

#[test]
fn flags_override_file_which_overrides_profile() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"seed": 5, "trials": 9, "p_b_dbm": 20.0}"#).unwrap();

    let mut c = common(Some(path.clone()));
    c.profile = Some(Profile::Fast);
    let cfg = resolve_config(&c, Profile::Table1, Some(100)).unwrap();
    assert_eq!((cfg.seed, cfg.trials, cfg.p_b_dbm, cfg.n_b_a), (5, 9, 20.0, 4));

    c.seed = Some(11);
    c.trials = Some(3);
    let cfg = resolve_config(&c, Profile::Table1, Some(100)).unwrap();
    assert_eq!((cfg.seed, cfg.trials), (11, 3));

    let cfg = resolve_config(&common(None), Profile::Table1, Some(100)).unwrap();
    assert_eq!((cfg.trials, cfg.n_b_a), (100, 16));
}

#[test]
fn bad_config_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("unknown.json", r#"{"n_antennas": 3}"#),
        ("array.json", "[1, 2]"),
        ("broken.json", "{"),
        ("invalid.json", r#"{"n_taps": 7}"#),
    ] {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        assert!(resolve_config(&common(Some(path)), Profile::Fast, None).is_err(), "{name}");
    }
    let missing = dir.path().join("missing.json");
    assert!(resolve_config(&common(Some(missing)), Profile::Fast, None).is_err());
}

#[test]
fn parser_accepts_documented_flags() {
    let cli = Cli::try_parse_from([
        "fdisac", "rates", "--sweep", "p_u_dbm", "--values", "0:5:30", "--profile", "fast",
        "--seed", "3", "--trials", "2", "--format", "json", "--out", "x",
    ])
    .unwrap();
    assert_eq!(cli.common.seed, Some(3));
    assert_eq!(cli.common.format, Format::Json);
    assert!(Cli::try_parse_from(["fdisac", "rates", "--sweep", "n_rx"]).is_err());
    assert!(Cli::try_parse_from(["fdisac", "sense", "--profile", "huge"]).is_err());
    assert!(Cli::try_parse_from(["fdisac", "rates", "--values", "1"]).is_err());
}

#[test]
fn sense_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["sense", "--profile", "fast", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let ra = fs::read_to_string(dir.path().join("range_angle.csv")).unwrap();
    let rv = fs::read_to_string(dir.path().join("range_velocity.csv")).unwrap();
    assert!(ra.starts_with("angle_deg,range_m,magnitude\n"));
    assert!(rv.starts_with("range_m,velocity_mps,magnitude\n"));
    // 181 angles × 64 range bins, 64 range bins × 14 Doppler bins.
    assert_eq!(ra.lines().count(), 1 + 181 * 64);
    assert_eq!(rv.lines().count(), 1 + 64 * 14);
    for line in ra.lines().skip(1).chain(rv.lines().skip(1)) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
        assert!(fields.iter().all(|v| v.is_finite()) && fields[2] >= 0.0);
    }
    assert!(!ra.contains('\r'));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["range_angle"].is_object());
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn rates_json_format_skips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["rates", "--profile", "fast", "--trials", "2", "--format", "json"])
        .args(["--sweep", "n_taps", "--values", "0,32"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("rates.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["sweep_variable"], "n_taps");
    assert!(report.get("wall_clock_s").is_none());
}

#[test]
fn rates_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["rates", "--profile", "fast", "--trials", "2", "--sweep", "p_b_dbm", "--values", "10,20"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sweep_value,rate_dl,rate_ideal,rate_ul_nsp,rate_ul_mss,gamma_rad");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,") && lines[2].starts_with("20,"));
}

#[test]
fn invalid_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["rates", "--profile", "fast", "--sweep", "n_taps", "--values", "7"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn validate_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["validate", "--trials", "2", "--instances", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), stdout.lines().count());
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn show_config_round_trips() {
    let out = bin().args(["show-config", "--profile", "fast", "--seed", "9"]).output().unwrap();
    assert!(out.status.success());
    let cfg = fdisac::config::ScenarioConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.n_subcarriers, 64);
}
