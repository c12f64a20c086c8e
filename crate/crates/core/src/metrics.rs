//! Link-level SINRs and rates for radar, DL and UL.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob2, svd, CMat};
use crate::optimize::{EstimatedChannels, HybridBeamformers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub gamma_rad: f64,
    pub gamma_dl: f64,
    pub gamma_ul: f64,
    pub rate_dl: f64,
    pub rate_ul: f64,
}

impl LinkMetrics {
    pub fn new(gamma_rad: f64, gamma_dl: f64, gamma_ul: f64) -> Self {
        Self {
            gamma_rad,
            gamma_dl,
            gamma_ul,
            rate_dl: rate(gamma_dl),
            rate_ul: rate(gamma_ul),
        }
    }
}

/// `log2(1 + γ)`.
pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma.max(0.0)).log2()
}

fn check_noise(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("noise variance {sigma2} must be positive")));
    }
    Ok(())
}

/// `(H̃_true + C_b + D_b)·V_bb`: SI left after both cancellers.
fn si_residual(bf: &HybridBeamformers, true_h_tilde: &CMat) -> Result<CMat> {
    if true_h_tilde.shape() != bf.cancellers.analog.shape() {
        return Err(Error::invalid("compressed SI channel does not match the cancellers"));
    }
    Ok((true_h_tilde + &bf.cancellers.analog + &bf.cancellers.digital) * &bf.v_b_bb.matrix)
}

/// `‖W_rf^H·H_rad·V_rf·V_bb‖_F² / (‖(H̃ + C + D)·V_bb‖_F² + ‖W_rf‖_F²·σ_b²)`.
pub fn radar_sinr(
    bf: &HybridBeamformers,
    est: &EstimatedChannels,
    true_h_tilde: &CMat,
    sigma_b2: f64,
) -> Result<f64> {
    check_noise(sigma_b2)?;
    let signal = frob2(
        &(bf.w_b_rf.matrix().adjoint() * &est.h_rad_hat * bf.v_b_rf.matrix() * &bf.v_b_bb.matrix),
    );
    let si = frob2(&si_residual(bf, true_h_tilde)?);
    Ok(signal / (si + frob2(bf.w_b_rf.matrix()) * sigma_b2))
}

/// `‖W_u^H·H_DL·V_rf·V_bb‖_F² / (‖W_u‖_F²·σ_u²)`.
pub fn dl_snr(bf: &HybridBeamformers, h_dl: &CMat, sigma_u2: f64) -> Result<f64> {
    check_noise(sigma_u2)?;
    if h_dl.nrows() != bf.w_u.nrows() || h_dl.ncols() != bf.v_b_rf.n_antennas() {
        return Err(Error::invalid("DL channel does not match the beamformers"));
    }
    let w2 = frob2(&bf.w_u);
    if w2 == 0.0 {
        return Ok(0.0);
    }
    let signal = frob2(&(bf.w_u.adjoint() * h_dl * bf.v_b_rf.matrix() * &bf.v_b_bb.matrix));
    Ok(signal / (w2 * sigma_u2))
}

/// UL SINR with combiner `W_bb`: signal `‖W_bb^H·W_rf^H·H_UL·v_u‖²` over the
/// DL echo `‖W_bb^H·W_rf^H·H_rad·V_rf·V_bb‖_F²`, the SI residual
/// `‖W_bb^H·(H̃ + C + D)·V_bb‖_F²` and `σ_b²`.
pub fn ul_sinr(
    bf: &HybridBeamformers,
    est: &EstimatedChannels,
    true_h_tilde: &CMat,
    sigma_b2: f64,
) -> Result<f64> {
    check_noise(sigma_b2)?;
    let w_h = bf.w_b_bb.adjoint() * bf.w_b_rf.matrix().adjoint();
    let signal = (&w_h * &est.h_ul_hat * &bf.v_u_bb).norm_squared();
    let echo = frob2(&(&w_h * &est.h_rad_hat * bf.v_b_rf.matrix() * &bf.v_b_bb.matrix));
    let si = frob2(&(bf.w_b_bb.adjoint() * si_residual(bf, true_h_tilde)?));
    Ok(signal / (echo + si + sigma_b2))
}

/// Rate of an unconstrained fully-digital SVD design with `P_b` split
/// equally over `st` streams: `Σ_i log2(1 + (P_b/st)·σ_i²/σ_u²)`.
pub fn ideal_dl_rate(h_dl: &CMat, p_b: f64, sigma_u2: f64, st: usize) -> Result<f64> {
    check_noise(sigma_u2)?;
    if st == 0 || !(p_b >= 0.0) {
        return Err(Error::invalid("ideal rate needs st ≥ 1 and P_b ≥ 0"));
    }
    let per_stream = p_b / st as f64;
    Ok(svd(h_dl)
        .singular_values
        .iter()
        .take(st)
        .map(|s| (1.0 + per_stream * s * s / sigma_u2).log2())
        .sum())
}

/// Every link metric at once, with the NSP combiner in `bf`.
pub fn link_metrics(
    bf: &HybridBeamformers,
    est: &EstimatedChannels,
    true_h_tilde: &CMat,
    sigma_b2: f64,
    sigma_u2: f64,
) -> Result<LinkMetrics> {
    Ok(LinkMetrics::new(
        radar_sinr(bf, est, true_h_tilde, sigma_b2)?,
        dl_snr(bf, &est.h_dl_hat, sigma_u2)?,
        ul_sinr(bf, est, true_h_tilde, sigma_b2)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{dft_codebook, ula};
    use crate::beamform::{analog_from_codebook, DigitalPrecoder};
    use crate::cancel::build_cancellers;
    use crate::linalg::{c, complex_normal_matrix, complex_normal_vector, outer, CVec};
    use crate::optimize::{RxCombiner, TxSolver};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        bf: HybridBeamformers,
        est: EstimatedChannels,
        h_tilde: CMat,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cb = dft_codebook(4, 3).unwrap();
        let v_rf = analog_from_codebook(&cb, &[1, 6]).unwrap();
        let w_rf = analog_from_codebook(&cb, &[2, 5]).unwrap();
        let h_bb = complex_normal_matrix(&mut r, 8, 8, 1e-2);
        let h_tilde = w_rf.matrix().adjoint() * &h_bb * v_rf.matrix();
        let est = EstimatedChannels {
            h_rad_hat: complex_normal_matrix(&mut r, 8, 8, 1.0),
            h_rad_int_hat: complex_normal_matrix(&mut r, 8, 8, 1.0),
            h_dl_hat: complex_normal_matrix(&mut r, 3, 8, 1.0),
            h_ul_hat: complex_normal_matrix(&mut r, 8, 2, 1.0),
            h_bb_hat: h_bb,
        };
        let mut w_bb = complex_normal_matrix(&mut r, 2, 1, 1.0);
        w_bb.unscale_mut(w_bb.norm());
        let bf = HybridBeamformers {
            v_b_rf: v_rf,
            v_b_bb: DigitalPrecoder::new(complex_normal_matrix(&mut r, 2, 2, 1.0)).unwrap(),
            w_b_rf: w_rf,
            w_b_bb: w_bb,
            w_u: complex_normal_matrix(&mut r, 3, 2, 1.0),
            v_u_bb: complex_normal_vector(&mut r, 2, 0.1),
            cancellers: build_cancellers(&(&h_tilde + complex_normal_matrix(&mut r, 2, 2, 1e-3)), 2)
                .unwrap(),
            tx_solver: TxSolver::ClosedForm { zeta: 0.0 },
            rx_combiner: RxCombiner::Nsp,
        };
        Fixture { bf, est, h_tilde }
    }

    fn fro2_loop(m: &CMat) -> f64 {
        let mut acc = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                acc += m[(i, j)].re.powi(2) + m[(i, j)].im.powi(2);
            }
        }
        acc
    }

    #[test]
    fn radar_sinr_matches_term_by_term() {
        let f = fixture(1);
        let bf = &f.bf;
        let sigma = 1e-3;
        let signal = fro2_loop(
            &(bf.w_b_rf.matrix().adjoint() * &f.est.h_rad_hat * bf.v_b_rf.matrix() * &bf.v_b_bb.matrix),
        );
        let residual = &f.h_tilde + &bf.cancellers.analog + &bf.cancellers.digital;
        let si = fro2_loop(&(residual * &bf.v_b_bb.matrix));
        let noise = fro2_loop(bf.w_b_rf.matrix()) * sigma;
        let got = radar_sinr(bf, &f.est, &f.h_tilde, sigma).unwrap();
        assert!((got - signal / (si + noise)).abs() <= 1e-12 * got);
        assert!(si > 0.0, "imperfect CSI leaves a residual");
    }

    #[test]
    fn radar_sinr_with_perfect_csi_is_noise_limited() {
        let mut f = fixture(2);
        f.bf.cancellers = build_cancellers(&f.h_tilde, 2).unwrap();
        let sigma = 1e-3;
        let signal = frob2(
            &(f.bf.w_b_rf.matrix().adjoint()
                * &f.est.h_rad_hat
                * f.bf.v_b_rf.matrix()
                * &f.bf.v_b_bb.matrix),
        );
        let got = radar_sinr(&f.bf, &f.est, &f.h_tilde, sigma).unwrap();
        assert!((got - signal / (2.0 * sigma)).abs() <= 1e-12 * got);
        f.bf.v_b_bb = DigitalPrecoder::zeros(2, 2);
        assert_eq!(radar_sinr(&f.bf, &f.est, &f.h_tilde, sigma).unwrap(), 0.0);
    }

    #[test]
    fn dl_snr_matched_rank_one() {
        let (m_u, n_b, p_b, sigma) = (4, 8, 2.0f64, 1e-2);
        let cb = dft_codebook(n_b, 3).unwrap();
        let theta = cb.angles_deg[5];
        let h = outer(&ula(m_u, theta), &ula(n_b, theta));
        let mut f = fixture(3);
        f.bf.v_b_rf = analog_from_codebook(&cb, &[5]).unwrap();
        f.bf.v_b_bb = DigitalPrecoder::new(CMat::from_element(1, 1, c(p_b.sqrt(), 0.0))).unwrap();
        let mut w = CMat::zeros(m_u, 2);
        w.set_column(0, &ula(m_u, theta).unscale((m_u as f64).sqrt()));
        f.bf.w_u = w;
        let got = dl_snr(&f.bf, &h, sigma).unwrap();
        let expected = p_b * m_u as f64 * n_b as f64 / sigma;
        assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
        let halved = dl_snr(&f.bf, &h, 2.0 * sigma).unwrap();
        assert!((halved - got / 2.0).abs() <= 1e-12 * got);
        f.bf.v_b_bb = DigitalPrecoder::zeros(1, 1);
        assert_eq!(dl_snr(&f.bf, &h, sigma).unwrap(), 0.0);
    }

    #[test]
    fn ul_sinr_matches_term_by_term() {
        let f = fixture(4);
        let bf = &f.bf;
        let sigma = 1e-3;
        let w_h = bf.w_b_bb.adjoint() * bf.w_b_rf.matrix().adjoint();
        let signal = fro2_loop(&(&w_h * &f.est.h_ul_hat * CMat::from_column_slice(2, 1, bf.v_u_bb.as_slice())));
        let echo = fro2_loop(&(&w_h * &f.est.h_rad_hat * bf.v_b_rf.matrix() * &bf.v_b_bb.matrix));
        let residual = &f.h_tilde + &bf.cancellers.analog + &bf.cancellers.digital;
        let si = fro2_loop(&(bf.w_b_bb.adjoint() * residual * &bf.v_b_bb.matrix));
        let got = ul_sinr(bf, &f.est, &f.h_tilde, sigma).unwrap();
        assert!((got - signal / (echo + si + sigma)).abs() <= 1e-12 * got);
        let mut silent = f.bf.clone();
        silent.v_u_bb = CVec::zeros(2);
        assert_eq!(ul_sinr(&silent, &f.est, &f.h_tilde, sigma).unwrap(), 0.0);
    }

    #[test]
    fn nsp_combiner_leaves_only_the_self_echo() {
        use crate::optimize::nsp_rx_combiner;
        let mut f = fixture(5);
        let phi = -12.0;
        let a_rx = ula(8, phi);
        f.est.h_ul_hat = outer(&a_rx, &ula(2, phi));
        let self_echo = outer(&a_rx, &ula(8, phi));
        f.est.h_rad_int_hat = outer(&ula(8, 35.0), &ula(8, 35.0));
        f.est.h_rad_hat = &f.est.h_rad_int_hat + &self_echo;
        f.bf.cancellers = build_cancellers(&f.h_tilde, 2).unwrap();
        let w_rf_h = f.bf.w_b_rf.matrix().adjoint();
        f.bf.w_b_bb =
            nsp_rx_combiner(&(&w_rf_h * &f.est.h_ul_hat), &(&w_rf_h * &f.est.h_rad_int_hat), 1).unwrap();
        let sigma = 1e-3;
        let w_h = f.bf.w_b_bb.adjoint() * &w_rf_h;
        let signal = (&w_h * &f.est.h_ul_hat * &f.bf.v_u_bb).norm_squared();
        let echo = frob2(&(&w_h * self_echo * f.bf.v_b_rf.matrix() * &f.bf.v_b_bb.matrix));
        let got = ul_sinr(&f.bf, &f.est, &f.h_tilde, sigma).unwrap();
        assert!((got - signal / (echo + sigma)).abs() <= 1e-9 * got);
    }

    #[test]
    fn ideal_rate_cases() {
        let h = outer(&ula(3, 10.0), &ula(5, 10.0));
        let smax2 = 15.0f64;
        let got = ideal_dl_rate(&h, 2.0, 0.1, 1).unwrap();
        assert!((got - (1.0 + 2.0 * smax2 / 0.1).log2()).abs() < 1e-12);
        assert_eq!(ideal_dl_rate(&h, 0.0, 0.1, 1).unwrap(), 0.0);

        let mut r = ChaCha8Rng::seed_from_u64(6);
        let h = complex_normal_matrix(&mut r, 4, 4, 1.0);
        let (p, s2) = (3.0, 0.5);
        let eig = crate::linalg::hermitian_eigen(&(&h * h.adjoint())).0;
        let expected: f64 = eig.iter().map(|l| (1.0 + p / 4.0 * l / s2).log2()).sum();
        let got = ideal_dl_rate(&h, p, s2, 4).unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn noise_scaling_and_rate_mapping() {
        let f = fixture(7);
        let a = link_metrics(&f.bf, &f.est, &f.h_tilde, 1e-3, 1e-3).unwrap();
        let mut g = f;
        g.bf.cancellers = build_cancellers(&g.h_tilde, 2).unwrap();
        let base = radar_sinr(&g.bf, &g.est, &g.h_tilde, 1e-3).unwrap();
        let scaled = radar_sinr(&g.bf, &g.est, &g.h_tilde, 4e-3).unwrap();
        assert!((scaled - base / 4.0).abs() <= 1e-12 * base);
        assert_eq!(a.rate_dl, (1.0 + a.gamma_dl).log2());
        assert_eq!(a.rate_ul, (1.0 + a.gamma_ul).log2());
        assert!(radar_sinr(&g.bf, &g.est, &g.h_tilde, 0.0).is_err());
    }
}
