//! End-to-end experiments: scene synthesis, the sensing slot, beamformer
//! design, metric evaluation against the true channels, Monte Carlo
//! aggregation and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ula;
use crate::beamform::{assemble_analog, tx_power, AnalogBeamformer};
use crate::cancel::{analog_residual_power_per_chain, build_cancellers};
use crate::channel::{
    flat_radar_channel, gen_dl_channel, gen_si_channel, gen_ul_channel, perturb_estimate,
    PathParams, TargetParams,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{c, cis, complex_normal_vector, right_singular_vectors, CMat, CVec};
use crate::metrics::{ideal_dl_rate, link_metrics, rate, ul_sinr, LinkMetrics};
use crate::optimize::{mss_rx_combiner, run_algorithm1, EstimatedChannels, HybridBeamformers, TxSolver};
use crate::sensing::{combined_range_velocity, SensingCapture, SensingEstimate, TargetEstimate};

/// `10^((x − 30)/10)`.
pub fn dbm_to_watt(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Ground truth for one trial.
#[derive(Debug, Clone)]
pub struct Scene {
    /// DL scatterers, the UL user, then passive targets.
    pub targets: Vec<TargetParams>,
    pub h_dl: CMat,
    pub h_ul: CMat,
    /// Frequency-flat radar channel over all targets.
    pub h_rad: CMat,
    /// Radar channel without the UL user.
    pub h_rad_int: CMat,
    pub h_bb: CMat,
    pub h_bb_hat: CMat,
}

impl Scene {
    pub fn draw<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Self> {
        let (m_b, n_b) = (cfg.m_b(), cfg.n_b());
        let radar_amp = db_to_linear(cfg.radar_gain_db).sqrt();
        let targets: Vec<TargetParams> = cfg
            .scatterers()
            .map(|s| TargetParams {
                gain: cis(rng.random::<f64>() * std::f64::consts::TAU) * radar_amp,
                angle_deg: s.angle_deg,
                range_m: s.range_m,
                velocity_mps: s.velocity_mps,
            })
            .collect();
        let dl_amp = db_to_linear(cfg.dl_gain_db).sqrt();
        let dl_paths: Vec<PathParams> = cfg
            .dl_scatterers
            .iter()
            .map(|s| PathParams {
                gain: cis(rng.random::<f64>() * std::f64::consts::TAU) * dl_amp,
                angle_deg: s.angle_deg,
            })
            .collect();
        let ul_path = PathParams {
            gain: cis(rng.random::<f64>() * std::f64::consts::TAU)
                * db_to_linear(cfg.ul_gain_db).sqrt(),
            angle_deg: cfg.ul_user.angle_deg,
        };
        let h_bb = gen_si_channel(m_b, n_b, cfg.si_kappa_db, cfg.si_pathloss_db, rng)?;
        let h_bb_hat = match cfg.csi_nmse_db {
            Some(nmse) => perturb_estimate(&h_bb, nmse, rng)?,
            None => h_bb.clone(),
        };
        let ul_index = cfg.dl_scatterers.len();
        let interferers: Vec<TargetParams> = targets
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ul_index)
            .map(|(_, t)| *t)
            .collect();
        Ok(Self {
            h_dl: gen_dl_channel(&dl_paths, cfg.m_u, n_b)?,
            h_ul: gen_ul_channel(&ul_path, m_b, cfg.n_u)?,
            h_rad: flat_radar_channel(&targets, m_b, n_b)?,
            h_rad_int: if interferers.is_empty() {
                CMat::zeros(m_b, n_b)
            } else {
                flat_radar_channel(&interferers, m_b, n_b)?
            },
            targets,
            h_bb,
            h_bb_hat,
        })
    }

    /// The true channels in the layout the optimizer and metrics expect.
    pub fn true_channels(&self) -> EstimatedChannels {
        EstimatedChannels {
            h_rad_hat: self.h_rad.clone(),
            h_rad_int_hat: self.h_rad_int.clone(),
            h_dl_hat: self.h_dl.clone(),
            h_ul_hat: self.h_ul.clone(),
            h_bb_hat: self.h_bb.clone(),
        }
    }
}

/// Constant-modulus beams with i.i.d. uniform phases, one per chain. Their
/// patterns are broad and differ from chain to chain, so every direction is
/// illuminated and the RF-domain manifold has no grating ambiguity.
pub fn random_phase_beams<R: Rng + ?Sized>(
    n_rf: usize,
    n_a: usize,
    rng: &mut R,
) -> Result<AnalogBeamformer> {
    let scale = 1.0 / (n_a as f64).sqrt();
    assemble_analog(
        (0..n_rf)
            .map(|_| {
                CVec::from_iterator(
                    n_a,
                    (0..n_a).map(|_| cis(rng.random::<f64>() * std::f64::consts::TAU) * scale),
                )
            })
            .collect(),
    )
}

fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.random::<bool>() { r } else { -r };
    let im = if rng.random::<bool>() { r } else { -r };
    c(re, im)
}

/// Simulates one sensing slot. Each TX chain sends independent QPSK at
/// `P_b/N_b^RF` through a random-phase beam, the UL user transmits along
/// its channel's right singular vector, the echoes carry their delay and
/// Doppler phases, and the receiver applies random-phase RX beams followed by
/// analog and digital SI cancellation built from the SI estimate.
/// `noise_w` is the per-antenna noise power.
pub fn sensing_capture<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    scene: &Scene,
    noise_w: f64,
    rng: &mut R,
) -> Result<SensingCapture> {
    let wf = cfg.waveform()?;
    let v_rf = random_phase_beams(cfg.n_b_rf, cfg.n_b_a, rng)?;
    let w_rf = random_phase_beams(cfg.m_b_rf, cfg.m_b_a, rng)?;
    let amp = (dbm_to_watt(cfg.p_b_dbm) / cfg.n_b_rf as f64).sqrt();

    let compress = |h: &CMat| w_rf.matrix().adjoint() * h * v_rf.matrix();
    let cancellers = build_cancellers(&compress(&scene.h_bb_hat), cfg.n_taps)?;
    let si_leak = (compress(&scene.h_bb) + &cancellers.analog + &cancellers.digital) * c(amp, 0.0);

    let v_u = right_singular_vectors(&scene.h_ul, 1)
        .column(0)
        .scale(dbm_to_watt(cfg.p_u_dbm).sqrt());
    let ul_rx = &scene.h_ul * v_u;

    let (m_b, n_b) = (cfg.m_b(), cfg.n_b());
    let steering: Vec<(CVec, CVec)> = scene
        .targets
        .iter()
        .map(|t| (ula(m_b, t.angle_deg), ula(n_b, t.angle_deg)))
        .collect();

    let cells = wf.n_subcarriers * wf.n_symbols;
    let mut tx = Vec::with_capacity(cells);
    let mut rx = Vec::with_capacity(cells);
    for p in 0..wf.n_subcarriers {
        for q in 0..wf.n_symbols {
            let s = CVec::from_iterator(cfg.n_b_rf, (0..cfg.n_b_rf).map(|_| qpsk(rng)));
            let x = v_rf.apply(&(&s * c(amp, 0.0)));
            let mut y = &ul_rx * qpsk(rng);
            for (t, (a_rx, a_tx)) in scene.targets.iter().zip(&steering) {
                y.axpy(t.gain * wf.echo_phase(t, p, q) * a_tx.dotc(&x), a_rx, c(1.0, 0.0));
            }
            if noise_w > 0.0 {
                y += complex_normal_vector(rng, m_b, noise_w);
            }
            rx.push(w_rf.apply_adjoint(&y) + &si_leak * &s);
            tx.push(x);
        }
    }
    Ok(SensingCapture {
        waveform: wf,
        w_rf,
        tx,
        rx,
    })
}

/// Pairs estimated DoAs with configured directions by sorting both lists;
/// returns, for each configured scatterer in `cfg.scatterers()` order, the
/// index of its estimate.
pub fn associate_doas(estimated: &[f64], configured: &[f64]) -> Vec<usize> {
    let mut est: Vec<usize> = (0..estimated.len()).collect();
    est.sort_by(|&a, &b| estimated[a].total_cmp(&estimated[b]));
    let mut cfg_order: Vec<usize> = (0..configured.len()).collect();
    cfg_order.sort_by(|&a, &b| configured[a].total_cmp(&configured[b]));
    let mut out = vec![0; configured.len()];
    for (rank, &ci) in cfg_order.iter().enumerate() {
        out[ci] = est[rank.min(est.len().saturating_sub(1))];
    }
    out
}

/// Channel estimates for the next slot from this slot's sensing output.
pub fn estimated_channels(
    cfg: &ScenarioConfig,
    sensed: &SensingEstimate,
    h_bb_hat: CMat,
) -> Result<EstimatedChannels> {
    let configured: Vec<f64> = cfg.scatterers().map(|s| s.angle_deg).collect();
    let doas = &sensed.music.doas_deg;
    if doas.len() != configured.len() {
        return Err(Error::Precondition(format!(
            "sensed {} directions for {} scatterers",
            doas.len(),
            configured.len()
        )));
    }
    let matched = associate_doas(doas, &configured);
    let n_dl = cfg.dl_scatterers.len();
    let ul = doas[matched[n_dl]];
    let dl: Vec<f64> = matched[..n_dl].iter().map(|&i| doas[i]).collect();
    let interferers: Vec<f64> = matched
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != n_dl)
        .map(|(_, &i)| doas[i])
        .collect();
    EstimatedChannels::from_doas(&interferers, ul, &dl, h_bb_hat, cfg)
}

/// Everything recorded about one successful trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Estimates matched to the configured scatterers, in config order.
    pub targets: Vec<TargetEstimate>,
    pub doa_error_deg: Vec<f64>,
    pub metrics: LinkMetrics,
    pub gamma_ul_mss: f64,
    pub rate_ul_mss: f64,
    pub rate_ideal: f64,
    /// Analog-stage SI power per RX chain, true channel.
    pub si_residual_w: Vec<f64>,
    pub tx_power_w: f64,
    pub ul_power_w: f64,
    pub tx_solver: TxSolver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialRecord {
    Ok(TrialResult),
    Failed { trial: usize, error: String },
}

impl TrialRecord {
    pub fn result(&self) -> Option<&TrialResult> {
        match self {
            TrialRecord::Ok(r) => Some(r),
            TrialRecord::Failed { .. } => None,
        }
    }
}

/// A 2-D map with labelled axes; `values[i][j]` sits at `(x[i], y[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub x_name: String,
    pub x_unit: String,
    pub x: Vec<f64>,
    pub y_name: String,
    pub y_unit: String,
    pub y: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PBDbm,
    PUDbm,
    NTaps,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PBDbm => "p_b_dbm",
            SweepVariable::PUDbm => "p_u_dbm",
            SweepVariable::NTaps => "n_taps",
        }
    }

    /// Copy of `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut out = cfg.clone();
        match self {
            SweepVariable::PBDbm => out.p_b_dbm = value,
            SweepVariable::PUDbm => out.p_u_dbm = value,
            SweepVariable::NTaps => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("tap count {value} is not a whole number")));
                }
                out.n_taps = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_b_dbm" => Ok(SweepVariable::PBDbm),
            "p_u_dbm" => Ok(SweepVariable::PUDbm),
            "n_taps" => Ok(SweepVariable::NTaps),
            other => Err(Error::invalid(format!("unknown sweep variable '{other}'"))),
        }
    }
}

/// Trial means over the successful trials at one operating point. A plain
/// run has a single row with `sweep_value = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sweep_value: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub rate_dl: f64,
    pub rate_ideal: f64,
    pub rate_ul_nsp: f64,
    pub rate_ul_mss: f64,
    pub gamma_rad: f64,
    pub max_doa_error_deg: f64,
    pub max_si_residual_w: f64,
}

impl Summary {
    pub fn from_trials(sweep_value: f64, trials: &[TrialRecord]) -> Self {
        let ok: Vec<&TrialResult> = trials.iter().filter_map(TrialRecord::result).collect();
        let n = ok.len();
        let mean = |f: &dyn Fn(&TrialResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        let max = |f: &dyn Fn(&TrialResult) -> f64| ok.iter().map(|r| f(r)).fold(0.0, f64::max);
        Self {
            sweep_value,
            trials_ok: n,
            trials_failed: trials.len() - n,
            rate_dl: mean(&|r| r.metrics.rate_dl),
            rate_ideal: mean(&|r| r.rate_ideal),
            rate_ul_nsp: mean(&|r| r.metrics.rate_ul),
            rate_ul_mss: mean(&|r| r.rate_ul_mss),
            gamma_rad: mean(&|r| r.metrics.gamma_rad),
            max_doa_error_deg: max(&|r| r.doa_error_deg.iter().fold(0.0, |a, &b| a.max(b))),
            max_si_residual_w: max(&|r| r.si_residual_w.iter().fold(0.0, |a, &b| a.max(b))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub sweep_variable: Option<SweepVariable>,
    /// One row per operating point.
    pub rows: Vec<Summary>,
    /// Per-trial records of every operating point, in row order.
    pub trials: Vec<Vec<TrialRecord>>,
    pub range_angle: Option<GridMap>,
    pub range_velocity: Option<GridMap>,
    /// Excluded from serialization so reports are byte-reproducible.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Options that do not change trial outcomes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Compute range–angle and range–velocity maps from trial 0.
    pub maps: bool,
}

/// RNG for trial `index`: the run seed selects the key, the trial index
/// selects the stream.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Outputs of one full pipeline pass, kept for callers that need more
/// than the summary numbers.
pub struct TrialArtifacts {
    pub scene: Scene,
    pub capture: SensingCapture,
    pub sensed: SensingEstimate,
    pub estimated: EstimatedChannels,
    pub beamformers: HybridBeamformers,
    pub result: TrialResult,
}

/// Runs one trial: scene, sensing slot, estimation, design, evaluation.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<TrialArtifacts> {
    let mut rng = trial_rng(cfg.seed, trial);
    let scene = Scene::draw(cfg, &mut rng)?;
    let noise_b = dbm_to_watt(cfg.noise_b_dbm);
    let noise_u = dbm_to_watt(cfg.noise_u_dbm);
    let capture = sensing_capture(cfg, &scene, noise_b, &mut rng)?;
    let sensed = capture.estimate(cfg.n_targets(), cfg.music_grid_step_deg)?;
    let estimated = estimated_channels(cfg, &sensed, scene.h_bb_hat.clone())?;
    let bf = run_algorithm1(&estimated, cfg)?;

    let truth = scene.true_channels();
    let true_h_tilde = bf.w_b_rf.matrix().adjoint() * &scene.h_bb * bf.v_b_rf.matrix();
    let metrics = link_metrics(&bf, &truth, &true_h_tilde, noise_b, noise_u)?;
    let mss = HybridBeamformers {
        w_b_bb: mss_rx_combiner(&(bf.w_b_rf.matrix().adjoint() * &estimated.h_ul_hat), 1),
        ..bf.clone()
    };
    let gamma_ul_mss = ul_sinr(&mss, &truth, &true_h_tilde, noise_b)?;
    let p_b = dbm_to_watt(cfg.p_b_dbm);
    let rate_ideal = ideal_dl_rate(&scene.h_dl, p_b, noise_u, cfg.streams())?;

    let configured: Vec<f64> = cfg.scatterers().map(|s| s.angle_deg).collect();
    let matched = associate_doas(&sensed.music.doas_deg, &configured);
    let targets: Vec<TargetEstimate> = matched.iter().map(|&i| sensed.targets[i]).collect();
    let doa_error_deg = targets
        .iter()
        .zip(&configured)
        .map(|(t, &d)| (t.doa_deg - d).abs())
        .collect();

    let result = TrialResult {
        trial,
        targets,
        doa_error_deg,
        metrics,
        gamma_ul_mss,
        rate_ul_mss: rate(gamma_ul_mss),
        rate_ideal,
        si_residual_w: analog_residual_power_per_chain(
            &true_h_tilde,
            &bf.cancellers.analog,
            &bf.v_b_bb,
            1.0,
        )?,
        tx_power_w: tx_power(&bf.v_b_rf, &bf.v_b_bb)?,
        ul_power_w: bf.v_u_bb.norm_squared(),
        tx_solver: bf.tx_solver,
    };
    Ok(TrialArtifacts {
        scene,
        capture,
        sensed,
        estimated,
        beamformers: bf,
        result,
    })
}

fn run_trials(cfg: &ScenarioConfig) -> Vec<TrialRecord> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| match run_trial(cfg, i) {
            Ok(a) => TrialRecord::Ok(a.result),
            Err(e) => TrialRecord::Failed {
                trial: i,
                error: e.to_string(),
            },
        })
        .collect()
}

fn all_failed(cfg: &ScenarioConfig, trials: &[TrialRecord]) -> Result<()> {
    if let Some(TrialRecord::Failed { error, .. }) = trials.first() {
        if trials.iter().all(|t| t.result().is_none()) {
            return Err(Error::Precondition(format!(
                "all {} trials failed; first error: {error}",
                cfg.trials
            )));
        }
    }
    Ok(())
}

/// Range–angle and range–velocity maps from trial 0's sensing slot.
pub fn sensing_maps(cfg: &ScenarioConfig) -> Result<(GridMap, GridMap)> {
    let art = run_sensing_only(cfg, 0)?;
    let wf = art.0.waveform;
    let step = cfg.range_angle_step_deg;
    let n_angles = (180.0 / step).round() as usize + 1;
    let angles: Vec<f64> = (0..n_angles).map(|i| -90.0 + i as f64 * step).collect();
    let ra = art.0.range_angle_map(&angles)?;
    let ranges: Vec<f64> = (0..wf.n_subcarriers).map(|n| n as f64 * wf.range_bin_m()).collect();
    let range_angle = GridMap {
        x_name: "angle".into(),
        x_unit: "deg".into(),
        x: angles,
        y_name: "range".into(),
        y_unit: "m".into(),
        y: ranges.clone(),
        values: ra.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    let rv = combined_range_velocity(&art.1.maps)
        .ok_or_else(|| Error::Precondition("no targets sensed".into()))?;
    let m_min = art.1.maps[0].m_min();
    let range_velocity = GridMap {
        x_name: "range".into(),
        x_unit: "m".into(),
        x: ranges,
        y_name: "velocity".into(),
        y_unit: "m/s".into(),
        y: (0..wf.n_symbols)
            .map(|j| (m_min + j as i64) as f64 * wf.velocity_bin_mps())
            .collect(),
        values: rv.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    Ok((range_angle, range_velocity))
}

fn run_sensing_only(cfg: &ScenarioConfig, trial: usize) -> Result<(SensingCapture, SensingEstimate)> {
    let mut rng = trial_rng(cfg.seed, trial);
    let scene = Scene::draw(cfg, &mut rng)?;
    let capture = sensing_capture(cfg, &scene, dbm_to_watt(cfg.noise_b_dbm), &mut rng)?;
    let sensed = capture.estimate(cfg.n_targets(), cfg.music_grid_step_deg)?;
    Ok((capture, sensed))
}

/// Runs `cfg.trials` independent trials. Failed trials are recorded; the
/// run fails only when every trial does.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let trials = run_trials(cfg);
    all_failed(cfg, &trials)?;
    let (range_angle, range_velocity) = if opts.maps {
        let (a, b) = sensing_maps(cfg)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    Ok(RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        sweep_variable: None,
        rows: vec![Summary::from_trials(0.0, &trials)],
        trials: vec![trials],
        range_angle,
        range_velocity,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// One aggregated row per value of `variable`. Every point reuses the same
/// trial seeds.
pub fn sweep(cfg: &ScenarioConfig, variable: SweepVariable, values: &[f64]) -> Result<RunReport> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut rows = Vec::with_capacity(values.len());
    let mut trials = Vec::with_capacity(values.len());
    for &v in values {
        let point = variable.apply(cfg, v)?;
        let recs = run_trials(&point);
        all_failed(&point, &recs)?;
        rows.push(Summary::from_trials(v, &recs));
        trials.push(recs);
    }
    Ok(RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        sweep_variable: Some(variable),
        rows,
        trials,
        range_angle: None,
        range_velocity: None,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob2;

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_watt(30.0), 1.0);
        assert!((dbm_to_watt(-90.0) - 1e-12).abs() < 1e-27);
        assert!((dbm_to_watt(10.0) - 0.01).abs() < 1e-17);
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn association_pairs_sorted_lists() {
        let est = [40.1, -29.9, 20.0, -10.2, -20.0];
        let cfg = [-30.0, -20.0, -10.0, 20.0, 40.0];
        assert_eq!(associate_doas(&est, &cfg), vec![1, 4, 3, 2, 0]);
    }

    #[test]
    fn random_beams_are_constant_modulus_and_seeded() {
        let a = random_phase_beams(3, 5, &mut trial_rng(1, 0)).unwrap();
        let b = random_phase_beams(3, 5, &mut trial_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        for v in a.per_chain() {
            assert!(v.iter().all(|z| (z.norm() - 1.0 / 5f64.sqrt()).abs() < 1e-12));
        }
        let c = random_phase_beams(3, 5, &mut trial_rng(1, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scene_truth_is_consistent() {
        let cfg = ScenarioConfig::fast();
        let scene = Scene::draw(&cfg, &mut trial_rng(3, 0)).unwrap();
        assert_eq!(scene.targets.len(), cfg.n_targets());
        let ul = &scene.targets[cfg.dl_scatterers.len()];
        let ul_echo = (ula(cfg.m_b(), ul.angle_deg) * ula(cfg.n_b(), ul.angle_deg).adjoint()) * ul.gain;
        assert!(frob2(&(&scene.h_rad - &scene.h_rad_int - ul_echo)) < 1e-20);
        assert_eq!(scene.h_bb, scene.h_bb_hat);
        assert!(scene.targets.iter().all(|t| (t.gain.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn imperfect_csi_perturbs_the_si_estimate() {
        let cfg = ScenarioConfig {
            csi_nmse_db: Some(-20.0),
            ..ScenarioConfig::fast()
        };
        let scene = Scene::draw(&cfg, &mut trial_rng(3, 0)).unwrap();
        let nmse = frob2(&(&scene.h_bb_hat - &scene.h_bb)) / frob2(&scene.h_bb);
        assert!(nmse > 1e-3 && nmse < 1e-1, "{nmse}");
    }

    #[test]
    fn sweep_variables_parse_and_apply() {
        let cfg = ScenarioConfig::fast();
        assert_eq!("n_taps".parse::<SweepVariable>().unwrap(), SweepVariable::NTaps);
        assert!("p_x".parse::<SweepVariable>().is_err());
        assert_eq!(SweepVariable::PUDbm.apply(&cfg, 3.0).unwrap().p_u_dbm, 3.0);
        assert_eq!(SweepVariable::NTaps.apply(&cfg, 64.0).unwrap().n_taps, 64);
        assert!(SweepVariable::NTaps.apply(&cfg, 4.5).is_err());
        assert!(SweepVariable::NTaps.apply(&cfg, 12.0).is_err());
        assert!(sweep(&cfg, SweepVariable::PBDbm, &[]).is_err());
    }

    #[test]
    fn trial_failures_are_recorded_not_fatal_until_all_fail() {
        let recs = vec![
            TrialRecord::Failed { trial: 0, error: "x".into() },
            TrialRecord::Failed { trial: 1, error: "y".into() },
        ];
        let cfg = ScenarioConfig::fast();
        assert!(all_failed(&cfg, &recs).is_err());
        let s = Summary::from_trials(1.0, &recs);
        assert_eq!((s.trials_ok, s.trials_failed, s.rate_dl), (0, 2, 0.0));
    }
}
