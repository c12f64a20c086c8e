//! Channel synthesis: downlink, uplink, per-resource-element radar echoes,
//! the Rician self-interference path, and imperfect-CSI perturbation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::ula;
use crate::error::{Error, Result};
use crate::linalg::{cis, complex_normal_matrix, frob2, CMat};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One line-of-sight path: complex gain and angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub angle_deg: f64,
}

/// A reflecting target seen by the base-station radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub gain: Complex64,
    pub angle_deg: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
}

impl TargetParams {
    /// Round-trip delay `2d/c`.
    pub fn delay_s(&self) -> f64 {
        2.0 * self.range_m / SPEED_OF_LIGHT
    }

    /// Doppler shift `2·v·f_c/c`.
    pub fn doppler_hz(&self, carrier_hz: f64) -> f64 {
        2.0 * self.velocity_mps * carrier_hz / SPEED_OF_LIGHT
    }
}

/// OFDM numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    /// Total symbol duration including the cyclic prefix.
    pub symbol_duration_s: f64,
    pub cp_duration_s: f64,
    pub carrier_hz: f64,
}

impl Waveform {
    /// Builds the numerology from the total symbol duration; the cyclic
    /// prefix is whatever remains after the useful part `1/Δf`.
    pub fn new(
        n_subcarriers: usize,
        n_symbols: usize,
        subcarrier_spacing_hz: f64,
        symbol_duration_s: f64,
        carrier_hz: f64,
    ) -> Result<Self> {
        if n_subcarriers == 0 || n_symbols == 0 {
            return Err(Error::invalid("waveform needs P >= 1 and Q >= 1"));
        }
        for (name, v) in [
            ("subcarrier spacing", subcarrier_spacing_hz),
            ("symbol duration", symbol_duration_s),
            ("carrier frequency", carrier_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let useful = 1.0 / subcarrier_spacing_hz;
        // Allow a relative 1e-12 slack so T_s = 1/Δf (no CP) round-trips.
        if symbol_duration_s < useful * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "symbol duration {symbol_duration_s} s is shorter than 1/Δf = {useful} s"
            )));
        }
        Ok(Self {
            n_subcarriers,
            n_symbols,
            subcarrier_spacing_hz,
            symbol_duration_s,
            cp_duration_s: (symbol_duration_s - useful).max(0.0),
            carrier_hz,
        })
    }

    /// Range resolution `c/(2PΔf)`.
    pub fn range_bin_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.n_subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    /// Velocity resolution `c/(2 f_c Q T_s)`.
    pub fn velocity_bin_mps(&self) -> f64 {
        SPEED_OF_LIGHT
            / (2.0 * self.carrier_hz * self.n_symbols as f64 * self.symbol_duration_s)
    }

    /// Phase rotation `e^{j2π(q·T_s·f_D − p·τ·Δf)}` seen by a target on
    /// subcarrier `p` of symbol `q`.
    pub fn echo_phase(&self, target: &TargetParams, p: usize, q: usize) -> Complex64 {
        let doppler = target.doppler_hz(self.carrier_hz);
        cis(2.0
            * PI
            * (q as f64 * self.symbol_duration_s * doppler
                - p as f64 * target.delay_s() * self.subcarrier_spacing_hz))
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("channel dimensions {rows}x{cols} must be >= 1")));
    }
    Ok(())
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if !angle_deg.is_finite() || !(-90.0..=90.0).contains(&angle_deg) {
        return Err(Error::invalid(format!("angle {angle_deg} deg outside [-90, 90]")));
    }
    Ok(())
}

fn check_gain(g: Complex64) -> Result<()> {
    if !(g.re.is_finite() && g.im.is_finite()) {
        return Err(Error::invalid("path gain must be finite"));
    }
    Ok(())
}

/// `Σ_l α_l a_{M_u}(θ_l) a_{N_b}^H(θ_l)`.
pub fn gen_dl_channel(paths: &[PathParams], m_u: usize, n_b: usize) -> Result<CMat> {
    if paths.is_empty() {
        return Err(Error::invalid("downlink channel needs at least one path"));
    }
    check_dims(m_u, n_b)?;
    let mut h = CMat::zeros(m_u, n_b);
    for path in paths {
        check_angle(path.angle_deg)?;
        check_gain(path.gain)?;
        h += (ula(m_u, path.angle_deg) * ula(n_b, path.angle_deg).adjoint()) * path.gain;
    }
    Ok(h)
}

/// `β a_{M_b}(φ) a_{N_u}^H(φ)`, a single LOS path.
pub fn gen_ul_channel(path: &PathParams, m_b: usize, n_u: usize) -> Result<CMat> {
    check_dims(m_b, n_u)?;
    check_angle(path.angle_deg)?;
    check_gain(path.gain)?;
    Ok((ula(m_b, path.angle_deg) * ula(n_u, path.angle_deg).adjoint()) * path.gain)
}

/// Radar channel on subcarrier `p`, symbol `q`.
pub fn radar_channel_at(
    targets: &[TargetParams],
    p: usize,
    q: usize,
    wf: &Waveform,
    m_b: usize,
    n_b: usize,
) -> Result<CMat> {
    check_dims(m_b, n_b)?;
    if p >= wf.n_subcarriers || q >= wf.n_symbols {
        return Err(Error::invalid(format!(
            "resource element ({p},{q}) outside the {}x{} grid",
            wf.n_subcarriers, wf.n_symbols
        )));
    }
    let mut h = CMat::zeros(m_b, n_b);
    for t in targets {
        check_angle(t.angle_deg)?;
        check_gain(t.gain)?;
        let coeff = t.gain * wf.echo_phase(t, p, q);
        h += (ula(m_b, t.angle_deg) * ula(n_b, t.angle_deg).adjoint()) * coeff;
    }
    Ok(h)
}

/// Frequency-flat radar channel `Σ_k α_k a(θ_k)a^H(θ_k)`, i.e. the `(0,0)`
/// resource element.
pub fn flat_radar_channel(targets: &[TargetParams], m_b: usize, n_b: usize) -> Result<CMat> {
    check_dims(m_b, n_b)?;
    let mut h = CMat::zeros(m_b, n_b);
    for t in targets {
        check_angle(t.angle_deg)?;
        check_gain(t.gain)?;
        h += (ula(m_b, t.angle_deg) * ula(n_b, t.angle_deg).adjoint()) * t.gain;
    }
    Ok(h)
}

/// Rician self-interference channel between the co-located TX and RX
/// arrays. The LOS part is the fixed broadside phase pattern
/// `a_{M_b}(0)·a_{N_b}^H(0)`; `kappa_db = +∞` returns the pure LOS term.
pub fn gen_si_channel<R: Rng + ?Sized>(
    m_b: usize,
    n_b: usize,
    kappa_db: f64,
    pathloss_db: f64,
    rng: &mut R,
) -> Result<CMat> {
    check_dims(m_b, n_b)?;
    if !pathloss_db.is_finite() {
        return Err(Error::invalid("SI path loss must be finite"));
    }
    if kappa_db.is_nan() {
        return Err(Error::invalid("Rician factor must not be NaN"));
    }
    let gain = 10f64.powf(-pathloss_db / 10.0);
    let los = ula(m_b, 0.0) * ula(n_b, 0.0).adjoint();
    if kappa_db == f64::INFINITY {
        return Ok(los.scale(gain.sqrt()));
    }
    let kappa = 10f64.powf(kappa_db / 10.0);
    let nlos = complex_normal_matrix(rng, m_b, n_b, 1.0);
    Ok(los.scale((gain * kappa / (kappa + 1.0)).sqrt()) + nlos.scale((gain / (kappa + 1.0)).sqrt()))
}

/// Adds i.i.d. complex Gaussian error with `E‖E‖²/‖H‖² = 10^(nmse_db/10)`.
/// `nmse_db = −∞` returns `h` unchanged, as does an all-zero `h`.
pub fn perturb_estimate<R: Rng + ?Sized>(h: &CMat, nmse_db: f64, rng: &mut R) -> Result<CMat> {
    if nmse_db.is_nan() || nmse_db == f64::INFINITY {
        return Err(Error::invalid(format!("NMSE {nmse_db} dB is not usable")));
    }
    let energy = frob2(h);
    if nmse_db == f64::NEG_INFINITY || energy == 0.0 || h.is_empty() {
        return Ok(h.clone());
    }
    let per_entry = 10f64.powf(nmse_db / 10.0) * energy / h.len() as f64;
    Ok(h + complex_normal_matrix(rng, h.nrows(), h.ncols(), per_entry))
}
