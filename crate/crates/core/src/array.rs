//! Uniform linear array responses and DFT phase-shifter codebooks.
//!
//! Angles cross the public API in degrees and are converted to radians
//! internally. Element spacing is expressed in wavelengths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CVec};

pub const DEFAULT_SPACING: f64 = 0.5;

/// Largest codebook size (in bits) we are willing to materialize.
const MAX_CODEBOOK_BITS: u32 = 24;

/// ULA response toward one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub elements: CVec,
    pub angle_deg: f64,
    pub spacing_over_lambda: f64,
}

impl SteeringVector {
    pub fn n_elems(&self) -> usize {
        self.elements.len()
    }
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if !angle_deg.is_finite() || !(-90.0..=90.0).contains(&angle_deg) {
        return Err(Error::invalid(format!(
            "angle {angle_deg} deg outside [-90, 90]"
        )));
    }
    Ok(())
}

/// Element `n` is `exp(j·2π·d·n·sin θ)`.
pub fn steering_vector(
    n_elems: usize,
    angle_deg: f64,
    spacing_over_lambda: f64,
) -> Result<SteeringVector> {
    if n_elems == 0 {
        return Err(Error::invalid("array must have at least one element"));
    }
    check_angle(angle_deg)?;
    if !(spacing_over_lambda > 0.0) || !spacing_over_lambda.is_finite() {
        return Err(Error::invalid(format!(
            "element spacing {spacing_over_lambda} must be positive"
        )));
    }
    Ok(SteeringVector {
        elements: ula_response(n_elems, angle_deg.to_radians().sin(), spacing_over_lambda),
        angle_deg,
        spacing_over_lambda,
    })
}

/// Half-wavelength ULA response for an angle in degrees. Panics on invalid
/// input; meant for internal callers that have already validated the angle.
pub fn ula(n_elems: usize, angle_deg: f64) -> CVec {
    debug_assert!((-90.0..=90.0).contains(&angle_deg));
    ula_response(n_elems, angle_deg.to_radians().sin(), DEFAULT_SPACING)
}

/// Response parameterized directly by `sin θ`.
pub(crate) fn ula_response(n_elems: usize, sin_theta: f64, spacing: f64) -> CVec {
    let step = 2.0 * PI * spacing * sin_theta;
    CVec::from_iterator(n_elems, (0..n_elems).map(|n| cis(step * n as f64)))
}

/// Beam codebook: `2^n_bits` constant-modulus vectors on a uniform
/// sin-space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub vectors: Vec<CVec>,
    pub n_bits: u32,
    /// Pointing angle of each entry in degrees.
    pub angles_deg: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn n_elems(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    /// Index of an entry equal to `v` within `tol` (max abs difference).
    pub fn index_of(&self, v: &CVec, tol: f64) -> Option<usize> {
        self.vectors.iter().position(|cb| {
            cb.len() == v.len() && cb.iter().zip(v.iter()).all(|(a, b)| (a - b).norm() <= tol)
        })
    }
}

/// DFT codebook: entry `m` steers to `arcsin(−1 + 2m/2^n_bits)` and is
/// scaled by `1/√n_elems`.
pub fn dft_codebook(n_elems: usize, n_bits: u32) -> Result<Codebook> {
    if n_elems == 0 || n_bits == 0 {
        return Err(Error::invalid("codebook needs n_elems >= 1 and n_bits >= 1"));
    }
    if n_bits > MAX_CODEBOOK_BITS {
        return Err(Error::invalid(format!(
            "codebook with {n_bits} bits exceeds the {MAX_CODEBOOK_BITS}-bit limit"
        )));
    }
    let size = 1usize << n_bits;
    let scale = 1.0 / (n_elems as f64).sqrt();
    let mut vectors = Vec::with_capacity(size);
    let mut angles_deg = Vec::with_capacity(size);
    for m in 0..size {
        let s = -1.0 + 2.0 * m as f64 / size as f64;
        vectors.push(ula_response(n_elems, s, DEFAULT_SPACING).scale(scale));
        angles_deg.push(s.asin().to_degrees());
    }
    Ok(Codebook {
        vectors,
        n_bits,
        angles_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, norm2_sq};
    use proptest::prelude::*;

    fn close(a: num_complex::Complex64, b: num_complex::Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(4, 0.0, 0.5).unwrap();
        assert!(a.elements.iter().all(|&z| close(z, c(1.0, 0.0))));
    }

    #[test]
    fn thirty_degrees_gives_quarter_turn() {
        let a = steering_vector(2, 30.0, 0.5).unwrap();
        assert!(close(a.elements[0], c(1.0, 0.0)));
        assert!(close(a.elements[1], c(0.0, 1.0)));
    }

    #[test]
    fn endfire_alternates_sign() {
        let a = steering_vector(2, -90.0, 0.5).unwrap();
        assert!(close(a.elements[1], c(-1.0, 0.0)));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(steering_vector(0, 0.0, 0.5).is_err());
        assert!(steering_vector(4, 90.5, 0.5).is_err());
        assert!(steering_vector(4, f64::NAN, 0.5).is_err());
        assert!(steering_vector(4, 10.0, 0.0).is_err());
        assert!(dft_codebook(4, 0).is_err());
        assert!(dft_codebook(4, 64).is_err());
    }

    #[test]
    fn table_codebook_shape() {
        let cb = dft_codebook(16, 5).unwrap();
        assert_eq!(cb.len(), 32);
        for v in &cb.vectors {
            assert_eq!(v.len(), 16);
            assert!(v.iter().all(|z| (z.norm_sqr() - 1.0 / 16.0).abs() < 1e-12));
        }
    }

    #[test]
    fn single_element_codebook_is_degenerate() {
        let cb = dft_codebook(1, 1).unwrap();
        assert_eq!(cb.len(), 2);
        for v in &cb.vectors {
            assert!((v[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_midpoint_is_broadside() {
        let cb = dft_codebook(4, 2).unwrap();
        let expect = steering_vector(4, 0.0, 0.5).unwrap().elements.scale(0.5);
        assert!(cb.vectors[2].iter().zip(expect.iter()).all(|(&a, &b)| close(a, b)));
        assert_eq!(cb.index_of(&expect, 1e-12), Some(2));
    }

    #[test]
    fn critically_sampled_grid_is_orthogonal() {
        let cb = dft_codebook(8, 3).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let ip = cb.vectors[i].dotc(&cb.vectors[j]).norm();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({i},{j}) -> {ip}");
            }
        }
    }

    proptest! {
        #[test]
        fn steering_norm_and_modulus(n in 1usize..64, angle in -90.0f64..=90.0) {
            let a = steering_vector(n, angle, 0.5).unwrap();
            prop_assert!((norm2_sq(&a.elements) - n as f64).abs() < 1e-9);
            prop_assert!(a.elements.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
            prop_assert!(close(a.elements[0], c(1.0, 0.0)));
            prop_assert!((a.elements.dotc(&a.elements).re - n as f64).abs() < 1e-9);
        }

        #[test]
        fn codebook_constant_modulus(n in 1usize..32, bits in 1u32..7) {
            let cb = dft_codebook(n, bits).unwrap();
            prop_assert_eq!(cb.len(), 1usize << bits);
            for v in &cb.vectors {
                prop_assert!(v.iter().all(|z| (z.norm_sqr() - 1.0 / n as f64).abs() < 1e-12));
            }
        }
    }
}
