//! Partially-connected hybrid beamformer containers.
//!
//! The analog stage is block-diagonal: RF chain `i` drives its own subarray
//! of `n_a` phase shifters, so the assembled `(n_rf·n_a) × n_rf` matrix has
//! chain `i`'s vector in rows `i·n_a..(i+1)·n_a` of column `i` and zeros
//! elsewhere.

use serde::{Deserialize, Serialize};

use crate::array::Codebook;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, frob2, CMat, CVec};

/// Tolerance on `|v_n|² − 1/n_a` for caller-supplied analog weights.
pub const MODULUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogBeamformer {
    per_chain: Vec<CVec>,
    assembled: CMat,
}

impl AnalogBeamformer {
    pub fn per_chain(&self) -> &[CVec] {
        &self.per_chain
    }

    pub fn matrix(&self) -> &CMat {
        &self.assembled
    }

    pub fn n_rf(&self) -> usize {
        self.per_chain.len()
    }

    /// Antennas per RF chain.
    pub fn n_a(&self) -> usize {
        self.per_chain[0].len()
    }

    pub fn n_antennas(&self) -> usize {
        self.assembled.nrows()
    }

    /// Columns of `h` feeding (or fed by) RF chain `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let n_a = self.n_a();
        i * n_a..(i + 1) * n_a
    }

    /// `F·x` without forming the dense product.
    pub fn apply(&self, x: &CVec) -> CVec {
        let n_a = self.n_a();
        let mut out = CVec::zeros(self.n_antennas());
        for (i, v) in self.per_chain.iter().enumerate() {
            for (n, w) in v.iter().enumerate() {
                out[i * n_a + n] = w * x[i];
            }
        }
        out
    }

    /// `F^H·y` without forming the dense product.
    pub fn apply_adjoint(&self, y: &CVec) -> CVec {
        let n_a = self.n_a();
        CVec::from_iterator(
            self.n_rf(),
            self.per_chain
                .iter()
                .enumerate()
                .map(|(i, v)| v.dotc(&y.rows(i * n_a, n_a))),
        )
    }

    /// Verifies every chain uses an entry of `cb`, returning the indices.
    pub fn codebook_indices(&self, cb: &Codebook) -> Result<Vec<usize>> {
        self.per_chain
            .iter()
            .enumerate()
            .map(|(i, v)| {
                cb.index_of(v, 1e-12).ok_or_else(|| {
                    Error::ConstraintViolation(format!("chain {i} vector is not in the codebook"))
                })
            })
            .collect()
    }
}

/// Builds the block-diagonal analog matrix from per-chain vectors.
pub fn assemble_analog(per_chain: Vec<CVec>) -> Result<AnalogBeamformer> {
    let Some(first) = per_chain.first() else {
        return Err(Error::invalid("analog beamformer needs at least one RF chain"));
    };
    let n_a = first.len();
    if n_a == 0 {
        return Err(Error::invalid("RF chain subarray must have at least one antenna"));
    }
    if let Some(bad) = per_chain.iter().position(|v| v.len() != n_a) {
        return Err(Error::invalid(format!(
            "chain {bad} has {} antennas, expected {n_a}",
            per_chain[bad].len()
        )));
    }
    let target = 1.0 / n_a as f64;
    for (i, v) in per_chain.iter().enumerate() {
        if let Some((n, z)) = v
            .iter()
            .enumerate()
            .find(|(_, z)| !((z.norm_sqr() - target).abs() <= MODULUS_TOL))
        {
            return Err(Error::ConstraintViolation(format!(
                "chain {i} element {n} has |w|^2 = {}, expected {target}",
                z.norm_sqr()
            )));
        }
    }
    let n_rf = per_chain.len();
    let mut assembled = CMat::zeros(n_rf * n_a, n_rf);
    for (i, v) in per_chain.iter().enumerate() {
        assembled.view_mut((i * n_a, i), (n_a, 1)).copy_from(v);
    }
    Ok(AnalogBeamformer {
        per_chain,
        assembled,
    })
}

/// Assembles chain `i` from codebook entry `indices[i]`.
pub fn analog_from_codebook(cb: &Codebook, indices: &[usize]) -> Result<AnalogBeamformer> {
    let vectors = indices
        .iter()
        .map(|&m| {
            cb.vectors
                .get(m)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("codebook index {m} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_analog(vectors)
}

/// Baseband precoder or combiner matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalPrecoder {
    pub matrix: CMat,
}

impl DigitalPrecoder {
    pub fn new(matrix: CMat) -> Result<Self> {
        if !all_finite(&matrix) {
            return Err(Error::NumericalFailure("precoder has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            matrix: CMat::zeros(rows, cols),
        }
    }

    pub fn n_streams(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `x = V_rf·V_bb·s`.
pub fn tx_signal(v_rf: &AnalogBeamformer, v_bb: &DigitalPrecoder, s: &CVec) -> Result<CVec> {
    if v_bb.matrix.nrows() != v_rf.n_rf() || v_bb.matrix.ncols() != s.len() {
        return Err(Error::invalid(format!(
            "cannot chain {}x{} analog, {}x{} digital and {} symbols",
            v_rf.n_antennas(),
            v_rf.n_rf(),
            v_bb.matrix.nrows(),
            v_bb.matrix.ncols(),
            s.len()
        )));
    }
    Ok(v_rf.apply(&(&v_bb.matrix * s)))
}

/// Mean radiated power for unit-variance i.i.d. symbols, `‖V_rf·V_bb‖_F²`.
pub fn tx_power(v_rf: &AnalogBeamformer, v_bb: &DigitalPrecoder) -> Result<f64> {
    if v_bb.matrix.nrows() != v_rf.n_rf() {
        return Err(Error::invalid("digital precoder rows must equal RF chains"));
    }
    Ok(frob2(&(v_rf.matrix() * &v_bb.matrix)))
}
