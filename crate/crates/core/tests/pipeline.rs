use fdisac::config::ScenarioConfig;
use fdisac::optimize::RxCombiner;
use fdisac::runner::{run_scenario, run_trial, sweep, RunOptions, RunReport, SweepVariable};

fn cfg(trials: usize) -> ScenarioConfig {
    ScenarioConfig {
        trials,
        ..ScenarioConfig::fast()
    }
}

fn finite_json(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        serde_json::Value::Array(a) => a.iter().all(finite_json),
        serde_json::Value::Object(o) => o.values().all(finite_json),
        _ => true,
    }
}

#[test]
fn repeated_runs_serialize_identically() {
    let a = run_scenario(&cfg(4), RunOptions { maps: true }).unwrap();
    let b = run_scenario(&cfg(4), RunOptions { maps: true }).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(!a.to_json().contains("wall_clock"));
}

#[test]
fn seed_changes_outcomes() {
    let a = run_scenario(&cfg(2), RunOptions::default()).unwrap();
    let b = run_scenario(&ScenarioConfig { seed: 43, ..cfg(2) }, RunOptions::default()).unwrap();
    assert_ne!(a.rows[0].rate_ul_nsp, b.rows[0].rate_ul_nsp);
}

#[test]
fn trial_outcome_does_not_depend_on_trial_count() {
    let few = run_scenario(&cfg(2), RunOptions::default()).unwrap();
    let many = run_scenario(&cfg(5), RunOptions::default()).unwrap();
    assert_eq!(few.trials[0][..], many.trials[0][..2]);
}

#[test]
fn single_point_sweep_matches_plain_run() {
    let c = cfg(3);
    let plain = run_scenario(&c, RunOptions::default()).unwrap();
    let swept = sweep(&c, SweepVariable::PBDbm, &[c.p_b_dbm]).unwrap();
    assert_eq!(plain.trials, swept.trials);
    assert_eq!(swept.rows[0].sweep_value, c.p_b_dbm);
    assert_eq!(plain.rows[0].rate_dl, swept.rows[0].rate_dl);
}

#[test]
fn report_round_trips_and_is_finite() {
    let report = run_scenario(&cfg(3), RunOptions { maps: true }).unwrap();
    let text = report.to_json();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(finite_json(&value));
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.config, cfg(3));
}

#[test]
fn maps_have_declared_axes() {
    let c = cfg(1);
    let report = run_scenario(&c, RunOptions { maps: true }).unwrap();
    let ra = report.range_angle.unwrap();
    assert_eq!(ra.x.len(), 181);
    assert_eq!(ra.y.len(), c.n_subcarriers);
    assert_eq!(ra.values.len(), ra.x.len());
    assert!(ra.values.iter().all(|r| r.len() == ra.y.len()));
    let rv = report.range_velocity.unwrap();
    assert_eq!((rv.x.len(), rv.y.len()), (c.n_subcarriers, c.n_symbols));
    assert!(rv.y.windows(2).all(|w| w[1] > w[0]));
    // The strongest range-angle cell sits at one of the configured angles.
    let (mut best, mut at) = (f64::MIN, 0);
    for (i, row) in ra.values.iter().enumerate() {
        let m = row.iter().copied().fold(f64::MIN, f64::max);
        if m > best {
            (best, at) = (m, i);
        }
    }
    let angle = ra.x[at];
    assert!(c.scatterers().any(|s| (s.angle_deg - angle).abs() <= 2.0), "peak at {angle}");
}

#[test]
fn pipeline_respects_budgets() {
    let c = cfg(1);
    let art = run_trial(&c, 0).unwrap();
    let r = &art.result;
    let p_b = fdisac::runner::dbm_to_watt(c.p_b_dbm);
    let lambda = fdisac::runner::dbm_to_watt(c.lambda_b_dbm);
    assert!(r.tx_power_w <= p_b * (1.0 + 1e-9));
    assert!(r.si_residual_w.iter().all(|&p| p <= lambda * (1.0 + 1e-9)));
    assert!(r.metrics.rate_dl <= r.rate_ideal);
    assert_eq!(art.beamformers.rx_combiner, RxCombiner::Nsp);
    assert!(r.doa_error_deg.iter().all(|&e| e <= c.music_grid_step_deg));
}

#[test]
fn table_profile_runs_end_to_end() {
    let c = ScenarioConfig::table1();
    let art = run_trial(&c, 0).unwrap();
    assert_eq!(art.result.targets.len(), 5);
    assert!(art.result.doa_error_deg.iter().all(|&e| e <= c.music_grid_step_deg));
}

#[test]
fn sweep_rejects_bad_points() {
    assert!(sweep(&cfg(1), SweepVariable::NTaps, &[]).is_err());
    assert!(sweep(&cfg(1), SweepVariable::NTaps, &[1.5]).is_err());
    assert!(sweep(&cfg(1), SweepVariable::PBDbm, &[f64::NAN]).is_err());
}
