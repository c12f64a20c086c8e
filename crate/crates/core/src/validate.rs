//! Invariant suite: runs the scenario and a batch of randomized solver
//! instances, and reports every property check with its worst-case value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::array::ula;
use crate::cancel::analog_residual_power_per_chain;
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::linalg::{complex_normal_matrix, complex_normal_vector, frob2, norm2_sq, outer, CMat};
use crate::optimize::{
    lagrangian_tx_precoder, nsp_rx_combiner, numeric_tx_precoder, run_algorithm1, target_precoder,
    DEFAULT_RIDGE, DEFAULT_SOLVER_MAX_ITER, DEFAULT_SOLVER_TOL,
};
use crate::runner::{
    dbm_to_watt, run_scenario, trial_rng, RunOptions, RunReport, Scene, TrialRecord,
};

/// One property, its worst observed value and the bound it must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub bound: f64,
    pub samples: usize,
}

impl Check {
    fn at_most(name: &str, values: impl IntoIterator<Item = f64>, bound: f64) -> Self {
        let mut worst = f64::NEG_INFINITY;
        let mut samples = 0;
        let mut finite = true;
        for v in values {
            finite &= v.is_finite();
            worst = worst.max(v);
            samples += 1;
        }
        Self {
            name: name.into(),
            passed: finite && samples > 0 && worst <= bound,
            worst: if samples == 0 { 0.0 } else { worst },
            bound,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub scenario: RunReport,
    /// Same scenario with 0 dB SI path loss and no analog taps, so the SI
    /// constraint binds and the numeric precoder is exercised.
    pub stressed: RunReport,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Stream offsets keep the random-instance batches disjoint from the
/// scenario trials.
const NSP_STREAM: usize = 1 << 32;
const PRECODER_STREAM: usize = 1 << 33;

pub fn validate_suite(cfg: &ScenarioConfig, instances: usize) -> Result<ValidationReport> {
    let scenario = run_scenario(cfg, RunOptions::default())?;
    let stressed_cfg = ScenarioConfig {
        si_pathloss_db: 0.0,
        n_taps: 0,
        ..cfg.clone()
    };
    let stressed = run_scenario(&stressed_cfg, RunOptions::default())?;

    let mut checks = Vec::new();
    for (label, report, c) in [("", &scenario, cfg), ("stressed ", &stressed, &stressed_cfg)] {
        checks.extend(scenario_checks(label, report, c));
    }
    for c in [cfg, &stressed_cfg] {
        let label = if c.si_pathloss_db == cfg.si_pathloss_db && c.n_taps == cfg.n_taps {
            "perfect-CSI"
        } else {
            "stressed perfect-CSI"
        };
        checks.push(Check::at_most(
            &format!("{label} per-chain SI residual / lambda_b"),
            perfect_csi_residuals(c)?.into_iter().flatten(),
            1.0 + 1e-9,
        ));
    }
    checks.extend(nsp_checks(cfg.seed, instances));
    checks.extend(precoder_checks(cfg.seed, instances));
    Ok(ValidationReport {
        checks,
        scenario,
        stressed,
    })
}

fn scenario_checks(label: &str, report: &RunReport, cfg: &ScenarioConfig) -> Vec<Check> {
    let trials: Vec<&TrialRecord> = report.trials.iter().flatten().collect();
    let ok: Vec<_> = trials.iter().filter_map(|t| t.result()).collect();
    let p_b = dbm_to_watt(cfg.p_b_dbm);
    let p_u = dbm_to_watt(cfg.p_u_dbm);
    let lambda = dbm_to_watt(cfg.lambda_b_dbm);
    let name = |s: &str| format!("{label}{s}");
    vec![
        Check::at_most(&name("failed trials"), [(trials.len() - ok.len()) as f64], 0.0),
        Check::at_most(
            &name("per-chain SI residual / lambda_b"),
            ok.iter().flat_map(|r| r.si_residual_w.iter().map(|p| p / lambda)),
            1.0 + 1e-9,
        ),
        Check::at_most(&name("TX power - P_b (W)"), ok.iter().map(|r| r.tx_power_w - p_b), 1e-9),
        Check::at_most(&name("UL power - P_u (W)"), ok.iter().map(|r| r.ul_power_w - p_u), 1e-12),
        Check::at_most(
            &name("DL rate - ideal rate (bps/Hz)"),
            ok.iter().map(|r| r.metrics.rate_dl - r.rate_ideal),
            0.0,
        ),
        Check::at_most(
            &name("DoA error (deg)"),
            ok.iter().flat_map(|r| r.doa_error_deg.iter().copied()),
            cfg.music_grid_step_deg + 1e-9,
        ),
        Check::at_most(
            &name("negative or non-finite SINR"),
            ok.iter().map(|r| {
                let m = &r.metrics;
                let all = [m.gamma_rad, m.gamma_dl, m.gamma_ul, r.gamma_ul_mss];
                if all.iter().all(|g| g.is_finite() && *g >= 0.0) {
                    0.0
                } else {
                    1.0
                }
            }),
            0.0,
        ),
    ]
}

/// Designs from the true channels of every trial's scene and returns the
/// per-chain analog residuals normalized by `lambda_b`.
pub fn perfect_csi_residuals(cfg: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
    let lambda = dbm_to_watt(cfg.lambda_b_dbm);
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let scene = Scene::draw(cfg, &mut trial_rng(cfg.seed, i))?;
            let bf = run_algorithm1(&scene.true_channels(), cfg)?;
            let h_tilde = bf.w_b_rf.matrix().adjoint() * &scene.h_bb * bf.v_b_rf.matrix();
            let r = analog_residual_power_per_chain(&h_tilde, &bf.cancellers.analog, &bf.v_b_bb, 1.0)?;
            Ok(r.into_iter().map(|p| p / lambda).collect())
        })
        .collect()
}

fn nsp_checks(seed: u64, instances: usize) -> Vec<Check> {
    let mut nulling = Vec::with_capacity(instances);
    let mut degenerate_flagged = Vec::with_capacity(instances);
    for i in 0..instances {
        let mut rng = trial_rng(seed, NSP_STREAM + i);
        let m_rf = rng.random_range(3..=8);
        let k = rng.random_range(1..m_rf);
        let interference = complex_normal_matrix(&mut rng, m_rf, k, 1.0);
        let h_ul = CMat::from_column_slice(m_rf, 1, complex_normal_vector(&mut rng, m_rf, 1.0).as_slice());
        match nsp_rx_combiner(&h_ul, &interference, 1) {
            Ok(w) => nulling.push((w.adjoint() * &interference).norm() / interference.norm()),
            Err(_) => nulling.push(f64::INFINITY),
        }
        let inside = &interference * complex_normal_matrix(&mut rng, k, 1, 1.0);
        degenerate_flagged.push(match nsp_rx_combiner(&inside, &interference, 1) {
            Err(crate::Error::DegenerateCombiner(_)) => 0.0,
            _ => 1.0,
        });
    }
    vec![
        Check::at_most("NSP nulling ||W^H A|| / ||A||", nulling, 1e-9),
        Check::at_most("NSP degenerate case not flagged", degenerate_flagged, 0.0),
    ]
}

fn precoder_checks(seed: u64, instances: usize) -> Vec<Check> {
    let mut gaps = Vec::new();
    let mut feasibility = Vec::new();
    let mut slackness = Vec::new();
    let mut stationarity = Vec::new();
    for i in 0..instances {
        let mut rng = trial_rng(seed, PRECODER_STREAM + i);
        let (rows, n, st) = (5, 4, 3);
        let theta = rng.random_range(-60.0..60.0);
        let h = complex_normal_matrix(&mut rng, rows, n, 1.0) + outer(&ula(rows, theta), &ula(n, theta));
        let p_b = dbm_to_watt(rng.random_range(0.0..40.0));
        let g = target_precoder(&h, st, p_b);
        let t1 = complex_normal_vector(&mut rng, n, 1e-2);
        let lambda = 1e-6;
        let Ok(cf) = lagrangian_tx_precoder(&h, &t1, lambda, &g, DEFAULT_RIDGE) else {
            gaps.push(f64::INFINITY);
            continue;
        };
        let v = &cf.precoder.matrix;
        let cons = norm2_sq(&(v.adjoint() * &t1));
        feasibility.push(cons / lambda - 1.0);
        slackness.push((cf.zeta * (cons - lambda)).abs() / lambda);
        let grad = h.adjoint() * (&h * v - &g) + outer(&t1, &t1) * v * crate::linalg::c(cf.zeta, 0.0);
        stationarity.push(grad.norm() / (h.adjoint() * &g).norm());
        match numeric_tx_precoder(&h, &[t1], lambda, &g, DEFAULT_SOLVER_TOL, DEFAULT_SOLVER_MAX_ITER) {
            Ok(nu) => {
                let f_cf = frob2(&(&h * v - &g));
                gaps.push((f_cf - nu.objective).abs() / f_cf.max(f64::MIN_POSITIVE));
            }
            Err(_) => gaps.push(f64::INFINITY),
        }
    }
    vec![
        Check::at_most("closed form vs numeric relative objective gap", gaps, 1e-3),
        Check::at_most("closed form ||V^H t1||^2 / lambda_b - 1", feasibility, 1e-6),
        Check::at_most("closed form complementary slackness / lambda_b", slackness, 1e-8),
        Check::at_most("closed form stationarity / ||H^H G||", stationarity, 1e-6),
    ]
}
