//! Analog multi-tap and digital self-interference cancellers.
//!
//! Both cancellers are derived from an estimate of the compressed SI channel
//! `H̃ = W_rf^H·H_bb·V_rf` (RX chains × TX chains). The analog canceller
//! negates the first `N/M_rf` columns of the estimate; the digital one
//! removes what remains.

use serde::{Deserialize, Serialize};

use crate::beamform::DigitalPrecoder;
use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellerPair {
    pub analog: CMat,
    pub digital: CMat,
    pub n_taps: usize,
}

impl CancellerPair {
    /// Number of TX-chain columns covered by analog taps.
    pub fn active_columns(&self) -> usize {
        self.n_taps / self.analog.nrows()
    }
}

pub fn build_cancellers(h_tilde_hat: &CMat, n_taps: usize) -> Result<CancellerPair> {
    let (m_rf, n_rf) = h_tilde_hat.shape();
    if m_rf == 0 || n_rf == 0 {
        return Err(Error::invalid("compressed SI channel must be non-empty"));
    }
    if n_taps % m_rf != 0 {
        return Err(Error::invalid(format!(
            "{n_taps} taps cannot be spread evenly over {m_rf} RX chains"
        )));
    }
    let cols = n_taps / m_rf;
    if cols > n_rf {
        return Err(Error::invalid(format!(
            "{n_taps} taps need {cols} TX columns but only {n_rf} exist"
        )));
    }
    let mut analog = CMat::zeros(m_rf, n_rf);
    analog
        .columns_mut(0, cols)
        .copy_from(&(-h_tilde_hat.columns(0, cols)));
    let digital = -(h_tilde_hat + &analog);
    Ok(CancellerPair {
        analog,
        digital,
        n_taps,
    })
}

/// Squared row norms of `(H̃_true + C_b)·V_bb`, i.e. the SI power reaching
/// each RX chain's ADC, times the per-stream symbol power.
///
/// Precoders produced by this crate already carry the transmit power, so
/// callers pass `symbol_power = 1`.
pub fn analog_residual_power_per_chain(
    h_tilde_true: &CMat,
    c_b: &CMat,
    v_bb: &DigitalPrecoder,
    symbol_power: f64,
) -> Result<Vec<f64>> {
    if h_tilde_true.shape() != c_b.shape() {
        return Err(Error::invalid("SI channel and analog canceller shapes differ"));
    }
    if v_bb.matrix.nrows() != h_tilde_true.ncols() {
        return Err(Error::invalid("precoder rows must equal TX RF chains"));
    }
    let residual = (h_tilde_true + c_b) * &v_bb.matrix;
    Ok(residual
        .row_iter()
        .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() * symbol_power)
        .collect())
}

/// Post-digital residual `(H̃_true + C_b + D_b)·V_bb`.
pub fn post_digital_residual(
    h_tilde_true: &CMat,
    pair: &CancellerPair,
    v_bb: &DigitalPrecoder,
) -> Result<CMat> {
    if h_tilde_true.shape() != pair.analog.shape() || v_bb.matrix.nrows() != h_tilde_true.ncols()
    {
        return Err(Error::invalid("SI residual operands are not conformable"));
    }
    Ok((h_tilde_true + &pair.analog + &pair.digital) * &v_bb.matrix)
}
