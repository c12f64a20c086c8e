//! Scenario configuration: array dimensions, OFDM numerology, power levels,
//! SI model, scene geometry and run control.
//!
//! Field names are snake_case and map one-to-one onto the JSON config file.
//! Powers are in dBm; `csi_nmse_db = null` means perfect channel knowledge.

use serde::{Deserialize, Serialize};

use crate::array::{dft_codebook, Codebook};
use crate::channel::Waveform;
use crate::error::{Error, Result};

/// Position and motion of one reflector (DL scatterer, UL user or passive
/// target) as seen from the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererSpec {
    pub angle_deg: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
}

impl ScattererSpec {
    pub const fn new(angle_deg: f64, range_m: f64, velocity_mps: f64) -> Self {
        Self {
            angle_deg,
            range_m,
            velocity_mps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-size numerology and arrays.
    Table1,
    /// 32×32 arrays and 64 subcarriers for quick runs.
    Fast,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Profile::Table1),
            "fast" => Ok(Profile::Fast),
            other => Err(Error::invalid(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// TX RF chains `N_b^RF`.
    pub n_b_rf: usize,
    /// RX RF chains `M_b^RF`.
    pub m_b_rf: usize,
    /// TX antennas per RF chain `N_b^A`.
    pub n_b_a: usize,
    /// RX antennas per RF chain `M_b^A`.
    pub m_b_a: usize,
    /// UL user antennas.
    pub n_u: usize,
    /// DL user antennas.
    pub m_u: usize,

    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
    pub carrier_hz: f64,

    pub p_b_dbm: f64,
    pub p_u_dbm: f64,
    pub noise_b_dbm: f64,
    pub noise_u_dbm: f64,
    /// Per-RX-chain SI saturation level.
    pub lambda_b_dbm: f64,

    pub si_kappa_db: f64,
    pub si_pathloss_db: f64,
    /// NMSE of the SI channel estimate; `None` is perfect CSI.
    pub csi_nmse_db: Option<f64>,
    /// Analog canceller taps `N` (multiple of `m_b_rf`).
    pub n_taps: usize,
    pub codebook_bits: u32,

    pub dl_scatterers: Vec<ScattererSpec>,
    pub ul_user: ScattererSpec,
    pub passive_targets: Vec<ScattererSpec>,
    /// Magnitude of every radar reflection coefficient; phases are drawn
    /// uniformly per trial.
    pub radar_gain_db: f64,
    pub dl_gain_db: f64,
    pub ul_gain_db: f64,

    pub music_grid_step_deg: f64,
    pub range_angle_step_deg: f64,

    pub seed: u64,
    pub trials: usize,
}

impl ScenarioConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Table1 => Self::table1(),
            Profile::Fast => Self::fast(),
        }
    }

    pub fn table1() -> Self {
        Self {
            n_b_rf: 8,
            m_b_rf: 8,
            n_b_a: 16,
            m_b_a: 16,
            n_u: 4,
            m_u: 4,
            n_subcarriers: 792,
            n_symbols: 14,
            subcarrier_spacing_hz: 120e3,
            symbol_duration_s: 8.92e-6,
            carrier_hz: 28e9,
            p_b_dbm: 30.0,
            p_u_dbm: 10.0,
            noise_b_dbm: -90.0,
            noise_u_dbm: -90.0,
            lambda_b_dbm: -30.0,
            si_kappa_db: 35.0,
            si_pathloss_db: 40.0,
            csi_nmse_db: None,
            n_taps: 32,
            codebook_bits: 5,
            dl_scatterers: vec![
                ScattererSpec::new(-30.0, 40.0, 5.0),
                ScattererSpec::new(-20.0, 75.0, -10.0),
            ],
            ul_user: ScattererSpec::new(-10.0, 20.0, 0.0),
            passive_targets: vec![
                ScattererSpec::new(20.0, 120.0, 45.0),
                ScattererSpec::new(40.0, 60.0, -90.0),
            ],
            radar_gain_db: 0.0,
            dl_gain_db: 0.0,
            ul_gain_db: 0.0,
            music_grid_step_deg: 0.1,
            range_angle_step_deg: 1.0,
            seed: 42,
            trials: 1,
        }
    }

    pub fn fast() -> Self {
        Self {
            n_b_a: 4,
            m_b_a: 4,
            n_subcarriers: 64,
            ..Self::table1()
        }
    }

    /// TX antennas `N_b`.
    pub fn n_b(&self) -> usize {
        self.n_b_rf * self.n_b_a
    }

    /// RX antennas `M_b`.
    pub fn m_b(&self) -> usize {
        self.m_b_rf * self.m_b_a
    }

    /// DL streams `st = min(N_b^RF, M_u)`.
    pub fn streams(&self) -> usize {
        self.n_b_rf.min(self.m_u)
    }

    /// Total sensing targets `K = M + L + 1`.
    pub fn n_targets(&self) -> usize {
        self.passive_targets.len() + self.dl_scatterers.len() + 1
    }

    pub fn waveform(&self) -> Result<Waveform> {
        Waveform::new(
            self.n_subcarriers,
            self.n_symbols,
            self.subcarrier_spacing_hz,
            self.symbol_duration_s,
            self.carrier_hz,
        )
    }

    pub fn tx_codebook(&self) -> Result<Codebook> {
        dft_codebook(self.n_b_a, self.codebook_bits)
    }

    pub fn rx_codebook(&self) -> Result<Codebook> {
        dft_codebook(self.m_b_a, self.codebook_bits)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_b_rf", self.n_b_rf),
            ("m_b_rf", self.m_b_rf),
            ("n_b_a", self.n_b_a),
            ("m_b_a", self.m_b_a),
            ("n_u", self.n_u),
            ("m_u", self.m_u),
            ("trials", self.trials),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        self.waveform()?;
        if self.dl_scatterers.is_empty() {
            return Err(Error::invalid("at least one DL scatterer is required"));
        }
        if self.n_targets() >= self.m_b_rf {
            return Err(Error::invalid(format!(
                "{} targets need more than {} RX RF chains for MUSIC",
                self.n_targets(),
                self.m_b_rf
            )));
        }
        if self.n_taps % self.m_b_rf != 0 || self.n_taps / self.m_b_rf > self.n_b_rf {
            return Err(Error::invalid(format!(
                "n_taps = {} must be a multiple of {} and at most {}",
                self.n_taps,
                self.m_b_rf,
                self.m_b_rf * self.n_b_rf
            )));
        }
        if self.codebook_bits == 0 || self.codebook_bits > 16 {
            return Err(Error::invalid("codebook_bits must be in 1..=16"));
        }
        for s in self.scatterers() {
            if !(-90.0..=90.0).contains(&s.angle_deg) || !(s.range_m >= 0.0) || !s.velocity_mps.is_finite()
            {
                return Err(Error::invalid(format!("invalid scatterer {s:?}")));
            }
        }
        let reals = [
            self.p_b_dbm,
            self.p_u_dbm,
            self.noise_b_dbm,
            self.noise_u_dbm,
            self.lambda_b_dbm,
            self.si_pathloss_db,
            self.radar_gain_db,
            self.dl_gain_db,
            self.ul_gain_db,
        ];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("power levels and gains must be finite"));
        }
        if self.si_kappa_db.is_nan() {
            return Err(Error::invalid("si_kappa_db must not be NaN"));
        }
        if let Some(n) = self.csi_nmse_db {
            if !n.is_finite() {
                return Err(Error::invalid("csi_nmse_db must be finite or null"));
            }
        }
        if !(self.music_grid_step_deg > 0.0) || !(self.range_angle_step_deg > 0.0) {
            return Err(Error::invalid("angle grid steps must be positive"));
        }
        Ok(())
    }

    /// DL scatterers, then the UL user, then passive targets.
    pub fn scatterers(&self) -> impl Iterator<Item = &ScattererSpec> {
        self.dl_scatterers
            .iter()
            .chain(std::iter::once(&self.ul_user))
            .chain(self.passive_targets.iter())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::table1()
    }
}
