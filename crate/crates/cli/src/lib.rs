//! Argument parsing, config resolution and file output for the `fdisac`
//! binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fdisac::config::{Profile, ScenarioConfig};
use fdisac::runner::{run_scenario, sweep, GridMap, RunOptions, RunReport, SweepVariable};
use fdisac::validate::{validate_suite, ValidationReport};

#[derive(Debug, Parser)]
#[command(name = "fdisac", version, about = "Full-duplex MIMO ISAC base station simulator")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON scenario file; keys override the profile defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Base parameter set [default: table1, or fast for validate]
    #[arg(long, global = true, value_parser = parse_profile)]
    pub profile: Option<Profile>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// CSV tables plus report.json
    Csv,
    /// report.json only
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit range-angle and range-velocity maps from the sensing slot
    Sense,
    /// Run Monte Carlo trials, optionally over a sweep, and emit rate tables
    Rates {
        /// One of p_b_dbm, p_u_dbm, n_taps
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<SweepVariable>,
        /// Comma-separated list or start:step:stop range
        #[arg(long, requires = "sweep", allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Run the invariant, KKT and nulling suite; exit nonzero on violation
    Validate {
        /// Random solver instances per check family
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
    /// Print the resolved configuration
    ShowConfig,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: fdisac::Error| e.to_string())
}

fn parse_sweep(s: &str) -> Result<SweepVariable, String> {
    s.parse().map_err(|e: fdisac::Error| e.to_string())
}

/// Parses `a,b,c` or `start:step:stop` (inclusive, tolerant to rounding).
pub fn parse_values(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let [start, step, stop] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (start, step, stop) = (start?, step?, stop?);
        if !(step > 0.0) || stop < start {
            bail!("range '{s}' needs a positive step and start <= stop");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    if parts.len() != 1 {
        bail!("values '{s}' must be a list or start:step:stop");
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value '{v}'")))
        .collect()
}

/// Trials run by `validate` unless the config file or `--trials` says
/// otherwise.
pub const VALIDATE_TRIALS: usize = 100;

/// Profile defaults, then keys from the config file, then `--seed` and
/// `--trials`.
pub fn resolve_config(
    common: &Common,
    default_profile: Profile,
    default_trials: Option<usize>,
) -> anyhow::Result<ScenarioConfig> {
    let mut base = ScenarioConfig::profile(common.profile.unwrap_or(default_profile));
    if let Some(n) = default_trials {
        base.trials = n;
    }
    let mut doc = serde_json::to_value(&base)?;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Value::Object(keys) = file else {
            bail!("{} must hold a JSON object", path.display());
        };
        let target = doc.as_object_mut().expect("config serializes to an object");
        for (k, v) in keys {
            target.insert(k, v);
        }
    }
    if let Some(seed) = common.seed {
        doc["seed"] = json!(seed);
    }
    if let Some(trials) = common.trials {
        doc["trials"] = json!(trials);
    }
    Ok(ScenarioConfig::from_json(&doc.to_string())?)
}

/// Long-format CSV: one row per grid cell, x varying slowest.
pub fn grid_csv(map: &GridMap, header: [&str; 3]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (ix, x) in map.x.iter().enumerate() {
        for (iy, y) in map.y.iter().enumerate() {
            let _ = writeln!(out, "{x},{y},{}", map.values[ix][iy]);
        }
    }
    out
}

pub fn rates_csv(report: &RunReport) -> String {
    let mut out = String::from("sweep_value,rate_dl,rate_ideal,rate_ul_nsp,rate_ul_mss,gamma_rad\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.sweep_value, r.rate_dl, r.rate_ideal, r.rate_ul_nsp, r.rate_ul_mss, r.gamma_rad
        );
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_timing(dir: &Path, command: &str, wall_clock_s: f64) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(&json!({ "command": command, "wall_clock_s": wall_clock_s }))?;
    write(dir, "timing.json", &(body + "\n"))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    let c = &cli.common;
    let start = Instant::now();
    let needs_out = !matches!(cli.command, Command::ShowConfig);
    if needs_out {
        fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    }
    match &cli.command {
        Command::ShowConfig => {
            let text = resolve_config(c, Profile::Table1, None)?.to_json();
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{text}");
            return Ok(0);
        }
        Command::Sense => {
            let cfg = resolve_config(c, Profile::Table1, None)?;
            let report = run_scenario(&cfg, RunOptions { maps: true })?;
            if c.format == Format::Csv {
                let (ra, rv) = (report.range_angle.as_ref(), report.range_velocity.as_ref());
                let (ra, rv) = ra.zip(rv).context("sensing maps missing")?;
                write(&c.out, "range_angle.csv", &grid_csv(ra, ["angle_deg", "range_m", "magnitude"]))?;
                write(&c.out, "range_velocity.csv", &grid_csv(rv, ["range_m", "velocity_mps", "magnitude"]))?;
            }
            write(&c.out, "report.json", &report.to_json())?;
            summarize(&report);
            write_timing(&c.out, "sense", start.elapsed().as_secs_f64())?;
        }
        Command::Rates { sweep: var, values } => {
            let cfg = resolve_config(c, Profile::Table1, None)?;
            let report = match (var, values) {
                (Some(v), Some(vals)) => sweep(&cfg, *v, &parse_values(vals)?)?,
                (Some(_), None) => bail!("--sweep needs --values"),
                _ => run_scenario(&cfg, RunOptions::default())?,
            };
            if c.format == Format::Csv {
                write(&c.out, "rates.csv", &rates_csv(&report))?;
            }
            write(&c.out, "report.json", &report.to_json())?;
            summarize(&report);
            write_timing(&c.out, "rates", start.elapsed().as_secs_f64())?;
        }
        Command::Validate { instances } => {
            let cfg = resolve_config(c, Profile::Fast, Some(VALIDATE_TRIALS))?;
            let report = validate_suite(&cfg, *instances)?;
            write(&c.out, "report.json", &validation_json(&report))?;
            for check in &report.checks {
                println!(
                    "{} {:<52} worst {:>12.4e}  bound {:.1e}  n={}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.worst,
                    check.bound,
                    check.samples
                );
            }
            write_timing(&c.out, "validate", start.elapsed().as_secs_f64())?;
            if !report.passed() {
                eprintln!("validation failed");
                return Ok(1);
            }
        }
    }
    Ok(0)
}

pub fn validation_json(report: &ValidationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

fn summarize(report: &RunReport) {
    println!("sweep_value  rate_dl  rate_ideal  rate_ul_nsp  rate_ul_mss  ok/failed");
    for r in &report.rows {
        println!(
            "{:>11}  {:>7.3}  {:>10.3}  {:>11.4}  {:>11.4}  {}/{}",
            r.sweep_value, r.rate_dl, r.rate_ideal, r.rate_ul_nsp, r.rate_ul_mss, r.trials_ok, r.trials_failed
        );
    }
}
