//! Target parameter estimation at the base-station receiver.
//!
//! DoAs come from MUSIC on the sample covariance of the RF-combined
//! snapshots. For each DoA a reference echo is rebuilt from the known
//! transmit signal, the per-resource-element quotient between received and
//! reference signals is formed, and the peak of its 2-D delay–Doppler
//! periodogram gives the quantized delay and Doppler bins.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{ula, DEFAULT_SPACING, ula_response};
use crate::beamform::AnalogBeamformer;
use crate::channel::{Waveform, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, norm2_sq, CMat, CVec, ZERO};

/// Default MUSIC sweep resolution.
pub const DEFAULT_GRID_STEP_DEG: f64 = 0.1;

/// Relative division guard for the delay–Doppler quotient.
pub const QUOTIENT_EPS: f64 = 1e-8;

/// `(1/n)·Σ y·y^H`.
pub fn sample_covariance(snapshots: &[CVec]) -> Result<CMat> {
    let Some(first) = snapshots.first() else {
        return Err(Error::invalid("sample covariance needs at least one snapshot"));
    };
    let dim = first.len();
    if snapshots.iter().any(|y| y.len() != dim) {
        return Err(Error::invalid("snapshots have differing lengths"));
    }
    let mut r = CMat::zeros(dim, dim);
    for y in snapshots {
        r.ger(Complex64::new(1.0, 0.0), y, &y.conjugate(), Complex64::new(1.0, 0.0));
    }
    Ok(r.unscale(snapshots.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicResult {
    /// Pseudo-spectrum on `angles_deg`.
    pub spectrum: Vec<f64>,
    pub angles_deg: Vec<f64>,
    /// Estimated directions, ascending.
    pub doas_deg: Vec<f64>,
    pub grid_step_deg: f64,
    /// Covariance eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// False when the signal and noise eigenvalues are not separated, in
    /// which case the peaks carry no information.
    pub reliable: bool,
}

fn angle_grid(step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0) || !step_deg.is_finite() || step_deg > 180.0 {
        return Err(Error::invalid(format!("grid step {step_deg} deg must be in (0, 180]")));
    }
    let count = (180.0 / step_deg + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| (-90.0 + i as f64 * step_deg).min(90.0))
        .collect())
}

/// MUSIC for a half-wavelength ULA of `array_size` elements.
pub fn music_doas(r: &CMat, k: usize, grid_step_deg: f64, array_size: usize) -> Result<MusicResult> {
    if array_size != r.nrows() {
        return Err(Error::invalid(format!(
            "covariance is {}x{} but the array has {array_size} elements",
            r.nrows(),
            r.ncols()
        )));
    }
    music_doas_with_manifold(r, k, grid_step_deg, |deg| {
        ula_response(array_size, deg.to_radians().sin(), DEFAULT_SPACING)
    })
}

/// MUSIC against an arbitrary array manifold `θ ↦ b(θ)`; the pseudo-spectrum
/// is `‖b‖² / ‖E_n^H b‖²`, which reduces to the textbook form for a ULA.
pub fn music_doas_with_manifold<F>(
    r: &CMat,
    k: usize,
    grid_step_deg: f64,
    manifold: F,
) -> Result<MusicResult>
where
    F: Fn(f64) -> CVec,
{
    let m = r.nrows();
    if r.ncols() != m || m == 0 {
        return Err(Error::invalid("covariance must be square and non-empty"));
    }
    if k == 0 || k >= m {
        return Err(Error::Precondition(format!(
            "MUSIC needs 1 <= K < array size, got K = {k} with {m} elements"
        )));
    }
    let angles = angle_grid(grid_step_deg)?;
    let (eigenvalues, vecs) = hermitian_eigen(r);
    let noise = vecs.columns(0, m - k);

    let spectrum: Vec<f64> = angles
        .iter()
        .map(|&deg| {
            let b = manifold(deg);
            let proj = noise.adjoint() * &b;
            norm2_sq(&b) / norm2_sq(&proj).max(f64::MIN_POSITIVE)
        })
        .collect();

    let largest_noise = eigenvalues[m - k - 1];
    let smallest_signal = eigenvalues[m - k];
    let reliable = smallest_signal > largest_noise.max(0.0) * (1.0 + 1e-6)
        && smallest_signal > 1e-14 * eigenvalues[m - 1].abs();

    let mut result = MusicResult {
        spectrum,
        angles_deg: angles,
        doas_deg: Vec::new(),
        grid_step_deg,
        eigenvalues,
        reliable,
    };

    let (lo, hi) = result
        .spectrum
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi <= lo * (1.0 + 1e-9) {
        return Err(Error::EstimationFailure {
            reason: "MUSIC pseudo-spectrum is flat".into(),
            partial: Some(Box::new(result)),
        });
    }

    let peaks = local_maxima(&result.spectrum);
    let mut ranked = peaks.clone();
    ranked.sort_by(|&a, &b| {
        result.spectrum[b]
            .total_cmp(&result.spectrum[a])
            .then(a.cmp(&b))
    });
    ranked.truncate(k);
    ranked.sort_unstable();
    result.doas_deg = ranked.iter().map(|&i| result.angles_deg[i]).collect();

    if result.doas_deg.len() < k {
        let found = result.doas_deg.len();
        return Err(Error::EstimationFailure {
            reason: format!("MUSIC found {found} peaks, expected {k}"),
            partial: Some(Box::new(result)),
        });
    }
    Ok(result)
}

/// Interior points strictly above the left neighbour and not below the
/// right one; grid ends count when they strictly dominate their neighbour.
fn local_maxima(s: &[f64]) -> Vec<usize> {
    let n = s.len();
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .filter(|&i| match i {
            0 => s[0] > s[1],
            _ if i + 1 == n => s[i] > s[i - 1],
            _ => s[i] > s[i - 1] && s[i] >= s[i + 1],
        })
        .collect()
}

/// `g = a_{M_b}(θ̂)·a_{N_b}^H(θ̂)·x`.
pub fn reference_signal(theta_hat_deg: f64, x: &CVec, m_b: usize) -> Result<CVec> {
    if !(-90.0..=90.0).contains(&theta_hat_deg) {
        return Err(Error::invalid(format!("angle {theta_hat_deg} deg outside [-90, 90]")));
    }
    if x.is_empty() || m_b == 0 {
        return Err(Error::invalid("reference signal needs non-empty arrays"));
    }
    let tx_gain = ula(x.len(), theta_hat_deg).dotc(x);
    Ok(ula(m_b, theta_hat_deg) * tx_gain)
}

/// Element-wise quotient `[W_rf·ỹ]_i / g_i` averaged over the antennas whose
/// reference magnitude clears `QUOTIENT_EPS·max|g|`. `None` when every
/// antenna is excluded.
pub fn quotient_cell(w_y: &CVec, g: &CVec) -> Option<Complex64> {
    let peak = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return None;
    }
    let floor = QUOTIENT_EPS * peak;
    let (sum, used) = w_y
        .iter()
        .zip(g.iter())
        .filter(|(_, gi)| gi.norm() >= floor)
        .fold((ZERO, 0usize), |(acc, n), (y, gi)| (acc + y / gi, n + 1));
    (used > 0).then(|| sum / used as f64)
}

/// Delay–Doppler quotient over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientGrid {
    /// `P × Q`.
    pub z: CMat,
    /// Cells where every antenna term was excluded; their `z` is 0.
    pub failed_cells: Vec<(usize, usize)>,
}

/// Builds `z^{p,q}` from received RF-domain snapshots and reference
/// signals, both stored row-major as `p·Q + q`. The RF-combined signal is
/// re-expanded to the antenna domain through the block-diagonal `W_rf`.
pub fn delay_doppler_quotient(
    y_grid: &[CVec],
    g_grid: &[CVec],
    w_rf: &AnalogBeamformer,
    n_subcarriers: usize,
    n_symbols: usize,
) -> Result<QuotientGrid> {
    let cells = n_subcarriers * n_symbols;
    if cells == 0 || y_grid.len() != cells || g_grid.len() != cells {
        return Err(Error::invalid(format!(
            "expected {cells} cells, got {} received and {} reference",
            y_grid.len(),
            g_grid.len()
        )));
    }
    let mut z = CMat::zeros(n_subcarriers, n_symbols);
    let mut failed_cells = Vec::new();
    for p in 0..n_subcarriers {
        for q in 0..n_symbols {
            let idx = p * n_symbols + q;
            let y = &y_grid[idx];
            let g = &g_grid[idx];
            if y.len() != w_rf.n_rf() || g.len() != w_rf.n_antennas() {
                return Err(Error::invalid(format!("cell ({p},{q}) has mismatched lengths")));
            }
            match quotient_cell(&w_rf.apply(y), g) {
                Some(v) => z[(p, q)] = v,
                None => failed_cells.push((p, q)),
            }
        }
    }
    Ok(QuotientGrid { z, failed_cells })
}

/// Power of the 2-D periodogram on `n ∈ [0, P)` × `m ∈ [m_min, m_min + Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDopplerMap {
    /// `P × Q`; column `j` holds Doppler bin `m = m_min + j`.
    pub magnitude: DMatrix<f64>,
    pub peak_n: usize,
    pub peak_m: i64,
}

impl DelayDopplerMap {
    /// Signed Doppler bin of the first column, `−⌊Q/2⌋`.
    pub fn m_min(&self) -> i64 {
        -((self.magnitude.ncols() / 2) as i64)
    }

    pub fn peak_value(&self) -> f64 {
        let col = (self.peak_m - self.m_min()) as usize;
        self.magnitude[(self.peak_n, col)]
    }
}

/// Cached FFT plans for repeated periodograms of one grid size.
pub struct DelayDopplerTransform {
    p: usize,
    q: usize,
    fft_q: Arc<dyn Fft<f64>>,
    ifft_p: Arc<dyn Fft<f64>>,
}

impl DelayDopplerTransform {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::invalid("periodogram grid must be non-empty"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            p,
            q,
            fft_q: planner.plan_fft_forward(q),
            ifft_p: planner.plan_fft_inverse(p),
        })
    }

    /// `|Σ_p (Σ_q z e^{−j2πqm/Q}) e^{j2πpn/P}|²` for every `(n, m)`.
    pub fn map(&self, z: &CMat) -> Result<DelayDopplerMap> {
        if z.shape() != (self.p, self.q) {
            return Err(Error::invalid(format!(
                "quotient grid is {:?}, transform expects ({}, {})",
                z.shape(),
                self.p,
                self.q
            )));
        }
        let (p, q) = (self.p, self.q);
        let mut work = z.clone();
        let mut row = vec![ZERO; q];
        for i in 0..p {
            for j in 0..q {
                row[j] = work[(i, j)];
            }
            self.fft_q.process(&mut row);
            for j in 0..q {
                work[(i, j)] = row[j];
            }
        }
        let mut col = vec![ZERO; p];
        let m_min = -((q / 2) as i64);
        let mut magnitude = DMatrix::<f64>::zeros(p, q);
        for j in 0..q {
            // column j of the output holds m = m_min + j, FFT bin (m mod Q)
            let m = m_min + j as i64;
            let bin = m.rem_euclid(q as i64) as usize;
            for i in 0..p {
                col[i] = work[(i, bin)];
            }
            self.ifft_p.process(&mut col);
            for i in 0..p {
                magnitude[(i, j)] = col[i].norm_sqr();
            }
        }
        // Ties resolve to the smallest n, then the smallest signed m.
        let (mut best, mut best_n, mut best_j) = (f64::NEG_INFINITY, 0, 0);
        for n in 0..p {
            for j in 0..q {
                if magnitude[(n, j)] > best {
                    best = magnitude[(n, j)];
                    best_n = n;
                    best_j = j;
                }
            }
        }
        Ok(DelayDopplerMap {
            magnitude,
            peak_n: best_n,
            peak_m: m_min + best_j as i64,
        })
    }
}

pub fn delay_doppler_map(z: &CMat) -> Result<DelayDopplerMap> {
    DelayDopplerTransform::new(z.nrows(), z.ncols())?.map(z)
}

/// Arg-max `(n*, m*)` of the delay–Doppler periodogram.
pub fn periodogram_peak(z: &CMat) -> Result<(usize, i64)> {
    let map = delay_doppler_map(z)?;
    Ok((map.peak_n, map.peak_m))
}

/// Delay, Doppler, range and velocity recovered from one target's bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub doa_deg: f64,
    pub delay_bin: usize,
    pub doppler_bin: i64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
}

/// `τ̂ = n*/(PΔf)`, `f̂_D = m*/(Q·T_s)`, range `c·τ̂/2`, velocity
/// `c·f̂_D/(2 f_c)`. The DoA field is left at zero for the caller to fill.
pub fn recover_parameters(n_star: usize, m_star: i64, wf: &Waveform) -> TargetEstimate {
    let delay_s = n_star as f64 / (wf.n_subcarriers as f64 * wf.subcarrier_spacing_hz);
    let doppler_hz = m_star as f64 / (wf.n_symbols as f64 * wf.symbol_duration_s);
    TargetEstimate {
        doa_deg: 0.0,
        delay_bin: n_star,
        doppler_bin: m_star,
        delay_s,
        doppler_hz,
        range_m: SPEED_OF_LIGHT * delay_s / 2.0,
        velocity_mps: SPEED_OF_LIGHT * doppler_hz / (2.0 * wf.carrier_hz),
    }
}

/// Everything the receiver captured during one sensing slot.
#[derive(Debug, Clone)]
pub struct SensingCapture {
    pub waveform: Waveform,
    pub w_rf: AnalogBeamformer,
    /// Transmitted antenna-domain vectors `x^{p,q}`, row-major `p·Q + q`.
    pub tx: Vec<CVec>,
    /// RF-combined, SI-cancelled receive vectors `ỹ^{p,q}`, same order.
    pub rx: Vec<CVec>,
}

/// Full per-slot output of the estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensingEstimate {
    pub targets: Vec<TargetEstimate>,
    pub music: MusicResult,
    /// One map per estimated target, in `targets` order.
    #[serde(skip)]
    pub maps: Vec<DelayDopplerMap>,
    pub failed_cells: usize,
}

impl SensingCapture {
    fn check(&self) -> Result<()> {
        let cells = self.waveform.n_subcarriers * self.waveform.n_symbols;
        if self.tx.len() != cells || self.rx.len() != cells {
            return Err(Error::invalid("capture does not cover the full resource grid"));
        }
        Ok(())
    }

    /// Effective RF-domain manifold `W_rf^H·a_{M_b}(θ)`.
    pub fn manifold(&self, angle_deg: f64) -> CVec {
        self.w_rf.apply_adjoint(&ula(self.w_rf.n_antennas(), angle_deg))
    }

    /// Quotient grid for a reference built at `theta_deg`.
    pub fn quotient(&self, theta_deg: f64) -> Result<QuotientGrid> {
        self.check()?;
        let (p_n, q_n) = (self.waveform.n_subcarriers, self.waveform.n_symbols);
        let m_b = self.w_rf.n_antennas();
        let rx_steer = ula(m_b, theta_deg);
        let tx_steer = ula(self.tx[0].len(), theta_deg);
        let mut z = CMat::zeros(p_n, q_n);
        let mut failed_cells = Vec::new();
        for p in 0..p_n {
            for q in 0..q_n {
                let idx = p * q_n + q;
                let g = &rx_steer * tx_steer.dotc(&self.tx[idx]);
                match quotient_cell(&self.w_rf.apply(&self.rx[idx]), &g) {
                    Some(v) => z[(p, q)] = v,
                    None => failed_cells.push((p, q)),
                }
            }
        }
        Ok(QuotientGrid { z, failed_cells })
    }

    /// MUSIC followed by per-target delay–Doppler estimation.
    pub fn estimate(&self, k: usize, grid_step_deg: f64) -> Result<SensingEstimate> {
        self.check()?;
        let r = sample_covariance(&self.rx)?;
        let music = music_doas_with_manifold(&r, k, grid_step_deg, |deg| self.manifold(deg))?;
        let transform =
            DelayDopplerTransform::new(self.waveform.n_subcarriers, self.waveform.n_symbols)?;
        let mut targets = Vec::with_capacity(k);
        let mut maps = Vec::with_capacity(k);
        let mut failed_cells = 0;
        for &doa in &music.doas_deg {
            let grid = self.quotient(doa)?;
            failed_cells += grid.failed_cells.len();
            let map = transform.map(&grid.z)?;
            let mut est = recover_parameters(map.peak_n, map.peak_m, &self.waveform);
            est.doa_deg = doa;
            targets.push(est);
            maps.push(map);
        }
        Ok(SensingEstimate {
            targets,
            music,
            maps,
            failed_cells,
        })
    }

    /// Range profile per look angle: for each angle, the delay–Doppler power
    /// maximized over Doppler, normalized by the global maximum.
    pub fn range_angle_map(&self, angles_deg: &[f64]) -> Result<DMatrix<f64>> {
        let p_n = self.waveform.n_subcarriers;
        let transform = DelayDopplerTransform::new(p_n, self.waveform.n_symbols)?;
        let mut out = DMatrix::<f64>::zeros(angles_deg.len(), p_n);
        for (a, &deg) in angles_deg.iter().enumerate() {
            let map = transform.map(&self.quotient(deg)?.z)?;
            for n in 0..p_n {
                out[(a, n)] = map.magnitude.row(n).max();
            }
        }
        let peak = out.max();
        if peak > 0.0 {
            out /= peak;
        }
        Ok(out)
    }
}

/// Sum of per-target maps, each divided by its own maximum.
pub fn combined_range_velocity(maps: &[DelayDopplerMap]) -> Option<DMatrix<f64>> {
    let first = maps.first()?;
    let mut acc = DMatrix::<f64>::zeros(first.magnitude.nrows(), first.magnitude.ncols());
    for m in maps {
        let peak = m.magnitude.max();
        if peak > 0.0 {
            acc += &m.magnitude / peak;
        }
    }
    Some(acc)
}
