//! Hybrid beamformer design for one slot: codebook searches for the analog
//! stages, a constrained least-squares TX precoder, power normalization and
//! the null-space-projection UL combiner.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::array::{ula, Codebook};
use crate::beamform::{analog_from_codebook, AnalogBeamformer, DigitalPrecoder};
use crate::cancel::{build_cancellers, CancellerPair};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{
    column_space_basis, frob2, left_singular_vectors, norm2_sq, outer, right_singular_vectors,
    CMat, CVec,
};
use crate::runner::dbm_to_watt;

/// Relative ridge added to `H^H·H` before inversion, scaled by
/// `trace(H^H·H)/dim`.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Guard added to the per-chain SI term in the RX codebook ratio.
pub const RATIO_EPS: f64 = 1e-12;

/// Rank tolerance (relative to `σ_max`) of the interference subspace.
pub const NSP_RANK_TOL: f64 = 1e-10;

/// Relative duality gap targeted by the numeric precoder.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

pub const DEFAULT_SOLVER_MAX_ITER: usize = 500;

/// Channel estimates built from the previous slot's DoAs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedChannels {
    /// `Ĥ_Rad,Int + a(φ̂)·a^H(φ̂)`.
    pub h_rad_hat: CMat,
    /// Radar channel without the UL user.
    pub h_rad_int_hat: CMat,
    pub h_dl_hat: CMat,
    pub h_ul_hat: CMat,
    /// Uncompressed SI channel estimate.
    pub h_bb_hat: CMat,
}

impl EstimatedChannels {
    /// Unit-gain steering outer products: `interferer_doas` are every sensed
    /// direction except the UL user's, `ul_doa` is `φ̂`, `dl_doas` feed the
    /// DL channel. Dimensions come from `cfg`.
    pub fn from_doas(
        interferer_doas: &[f64],
        ul_doa: f64,
        dl_doas: &[f64],
        h_bb_hat: CMat,
        cfg: &ScenarioConfig,
    ) -> Result<Self> {
        let (m_b, n_b) = (cfg.m_b(), cfg.n_b());
        if h_bb_hat.shape() != (m_b, n_b) {
            return Err(Error::invalid(format!(
                "SI estimate is {:?}, expected ({m_b}, {n_b})",
                h_bb_hat.shape()
            )));
        }
        let all = interferer_doas.iter().chain(dl_doas).chain(std::iter::once(&ul_doa));
        if let Some(bad) = all.filter(|d| !(-90.0..=90.0).contains(*d)).next() {
            return Err(Error::invalid(format!("DoA {bad} deg outside [-90, 90]")));
        }
        let mut h_rad_int_hat = CMat::zeros(m_b, n_b);
        for &d in interferer_doas {
            h_rad_int_hat += outer(&ula(m_b, d), &ula(n_b, d));
        }
        let h_rad_hat = &h_rad_int_hat + outer(&ula(m_b, ul_doa), &ula(n_b, ul_doa));
        let mut h_dl_hat = CMat::zeros(cfg.m_u, n_b);
        for &d in dl_doas {
            h_dl_hat += outer(&ula(cfg.m_u, d), &ula(n_b, d));
        }
        let h_ul_hat = outer(&ula(m_b, ul_doa), &ula(cfg.n_u, ul_doa));
        Ok(Self {
            h_rad_hat,
            h_rad_int_hat,
            h_dl_hat,
            h_ul_hat,
            h_bb_hat,
        })
    }
}

/// How `w_b_bb` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxCombiner {
    Nsp,
    /// The interference span covered the UL direction, so the unconstrained
    /// maximum-singular-vector combiner was used instead.
    MssFallback,
}

/// Which TX precoder branch produced `v_b_bb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TxSolver {
    ClosedForm { zeta: f64 },
    Numeric { newton_steps: usize, duality_gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridBeamformers {
    pub v_b_rf: AnalogBeamformer,
    /// `N_b^RF × st`.
    pub v_b_bb: DigitalPrecoder,
    pub w_b_rf: AnalogBeamformer,
    /// `M_b^RF × 1`, unit-norm columns.
    pub w_b_bb: CMat,
    /// `M_u × st`.
    pub w_u: CMat,
    /// `N_u`, `‖v‖² = P_u`.
    pub v_u_bb: CVec,
    pub cancellers: CancellerPair,
    pub tx_solver: TxSolver,
    pub rx_combiner: RxCombiner,
}

/// Per-chain codebook search maximizing `‖Ĥ_Rad·V_rf‖_F²`; ties keep the
/// lowest codebook index.
pub fn select_tx_analog(h_rad_hat: &CMat, cb: &Codebook, n_rf: usize) -> Result<AnalogBeamformer> {
    let n_a = cb.n_elems();
    if n_rf == 0 || h_rad_hat.ncols() != n_rf * n_a {
        return Err(Error::invalid(format!(
            "radar channel has {} columns, expected {n_rf} chains of {n_a}",
            h_rad_hat.ncols()
        )));
    }
    let indices: Vec<usize> = (0..n_rf)
        .map(|i| {
            let block = h_rad_hat.columns(i * n_a, n_a);
            argmax(cb.vectors.iter().map(|v| norm2_sq(&(&block * v))))
        })
        .collect();
    analog_from_codebook(cb, &indices)
}

/// Per-chain codebook search maximizing the chain's radar return over its
/// SI leakage, `n_j(w)/(d_j(w) + RATIO_EPS)` with `n_j = ‖w^H·[Ĥ_Rad·V_rf]_j‖²`
/// and `d_j = ‖w^H·[Ĥ_bb·V_rf]_j‖²` over the chain's row block.
pub fn select_rx_analog(
    h_rad_hat: &CMat,
    h_bb_hat: &CMat,
    v_b_rf: &AnalogBeamformer,
    cb: &Codebook,
) -> Result<AnalogBeamformer> {
    let m_a = cb.n_elems();
    let m_b = h_rad_hat.nrows();
    if h_bb_hat.shape() != h_rad_hat.shape() {
        return Err(Error::invalid("radar and SI channels differ in shape"));
    }
    if m_b == 0 || m_b % m_a != 0 || h_rad_hat.ncols() != v_b_rf.n_antennas() {
        return Err(Error::invalid(format!(
            "{m_b} RX antennas do not split into subarrays of {m_a}"
        )));
    }
    let radar = h_rad_hat * v_b_rf.matrix();
    let si = h_bb_hat * v_b_rf.matrix();
    let indices: Vec<usize> = (0..m_b / m_a)
        .map(|j| {
            let r = radar.rows(j * m_a, m_a);
            let s = si.rows(j * m_a, m_a);
            argmax(cb.vectors.iter().map(|w| {
                let n = (w.adjoint() * &r).norm_squared();
                let d = (w.adjoint() * &s).norm_squared();
                n / (d + RATIO_EPS)
            }))
        })
        .collect();
    analog_from_codebook(cb, &indices)
}

fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// `G = H_eff·V_r·√(P_b/st)` with `V_r` the top-`st` right singular vectors
/// of the effective DL channel.
pub fn target_precoder(h_dl_eff: &CMat, st: usize, p_b_watts: f64) -> CMat {
    let v = right_singular_vectors(h_dl_eff, st);
    (h_dl_eff * v).scale((p_b_watts / st as f64).sqrt())
}

/// Closed-form single-constraint precoder and its multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSolution {
    pub precoder: DigitalPrecoder,
    pub zeta: f64,
}

/// Minimizes `‖H·V − G‖_F²` subject to `‖V^H·t1‖² ≤ λ_b`.
///
/// With `A = H^H·H + ridge·(trace/dim)·I` and the unconstrained solution
/// `V0 = A⁻¹·H^H·G`, the constrained optimum is
/// `V = (A + ζ·t1·t1^H)⁻¹·H^H·G` with
/// `ζ = max(‖V0^H·t1‖/√λ_b − 1, 0) / (t1^H·A⁻¹·t1)`, which makes the
/// constraint hold with equality whenever it is active.
/// `lambda_b_watts = ∞` disables the constraint.
pub fn lagrangian_tx_precoder(
    h_dl_eff: &CMat,
    t1: &CVec,
    lambda_b_watts: f64,
    g_target: &CMat,
    ridge: f64,
) -> Result<LagrangianSolution> {
    let n = h_dl_eff.ncols();
    if t1.len() != n || g_target.nrows() != h_dl_eff.nrows() {
        return Err(Error::invalid("precoder problem dimensions do not match"));
    }
    check_lambda(lambda_b_watts)?;
    let (a, b) = normal_equations(h_dl_eff, g_target, ridge);
    let v0 = solve_normal(&a, &b)?;
    let a_inv_t = solve_normal(&a, &CMat::from_column_slice(n, 1, t1.as_slice()))?
        .column(0)
        .into_owned();
    let s = t1.dotc(&a_inv_t).re;
    let t_v0 = t1.adjoint() * &v0;
    let excess = t_v0.norm() / lambda_b_watts.sqrt() - 1.0;
    let zeta = if s > 0.0 && excess > 0.0 { excess / s } else { 0.0 };
    let v = if zeta > 0.0 {
        let v = &v0 - (&a_inv_t * &t_v0).scale(zeta / (1.0 + zeta * s));
        // The update cancels most of t^H·V0, so the constraint lands a few
        // hundred ulps off the boundary. One refinement step along A⁻¹t puts
        // it back without moving the rest of V.
        let t_v = t1.adjoint() * &v;
        let fix = lambda_b_watts.sqrt() / t_v.norm() - 1.0;
        v + (&a_inv_t * t_v).scale(fix / s)
    } else {
        v0
    };
    Ok(LagrangianSolution {
        precoder: DigitalPrecoder::new(v)?,
        zeta,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid(format!("SI budget {lambda} W must be positive")));
    }
    Ok(())
}

/// Cholesky solve that also rejects numerically singular systems, which a
/// plain factorization can let through on round-off.
fn solve_normal(a: &CMat, b: &CMat) -> Result<CMat> {
    let singular = || Error::NumericalFailure("H^H·H is singular; use a positive ridge".into());
    let ch = ((a + a.adjoint()).scale(0.5)).cholesky().ok_or_else(singular)?;
    let diag: Vec<f64> = ch.l_dirty().diagonal().iter().map(|z| z.re * z.re).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * max) {
        return Err(singular());
    }
    Ok(ch.solve(b))
}

fn normal_equations(h: &CMat, g: &CMat, ridge: f64) -> (CMat, CMat) {
    let n = h.ncols();
    let mut a = h.adjoint() * h;
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
    for i in 0..n {
        a[(i, i)].re += ridge * scale;
    }
    (a, h.adjoint() * g)
}

/// Output of the interior-point precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSolution {
    pub precoder: DigitalPrecoder,
    /// `‖H·V − G‖_F²` at the returned point.
    pub objective: f64,
    /// One multiplier per constraint row.
    pub multipliers: Vec<f64>,
    /// Bound on the distance to the optimum, in objective units.
    pub duality_gap: f64,
    pub newton_steps: usize,
    /// Objective after each centering step; non-increasing.
    pub history: Vec<f64>,
}

/// Minimizes `‖H·V − G‖_F²` subject to `‖V^H·t_r‖² ≤ λ_b` for every row,
/// by a log-barrier interior-point method with Newton centering.
///
/// The iterate starts at `V = 0` and stays strictly feasible. If the
/// unconstrained least-squares solution already satisfies every constraint
/// it is returned directly. The same ridge as the closed form is applied.
pub fn numeric_tx_precoder(
    h_dl_eff: &CMat,
    t_rows: &[CVec],
    lambda_b_watts: f64,
    g_target: &CMat,
    tol: f64,
    max_iter: usize,
) -> Result<NumericSolution> {
    let n = h_dl_eff.ncols();
    let st = g_target.ncols();
    if g_target.nrows() != h_dl_eff.nrows() || t_rows.iter().any(|t| t.len() != n) {
        return Err(Error::invalid("precoder problem dimensions do not match"));
    }
    check_lambda(lambda_b_watts)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let (a, b) = normal_equations(h_dl_eff, g_target, DEFAULT_RIDGE);
    let objective = |v: &CMat| frob2(&(h_dl_eff * v - g_target));
    let violation = |v: &CMat| {
        t_rows
            .iter()
            .map(|t| norm2_sq(&(v.adjoint() * t)) - lambda_b_watts)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let v0 = solve_normal(&a, &b)?;
    let rows: Vec<&CVec> = t_rows.iter().filter(|t| norm2_sq(t) > 0.0).collect();
    if lambda_b_watts.is_infinite() || rows.is_empty() || violation(&v0) <= 0.0 {
        let obj = objective(&v0);
        return Ok(NumericSolution {
            precoder: DigitalPrecoder::new(v0)?,
            objective: obj,
            multipliers: vec![0.0; t_rows.len()],
            duality_gap: 0.0,
            newton_steps: 0,
            history: vec![obj],
        });
    }

    let f_scale = frob2(g_target).max(f64::MIN_POSITIVE);
    let problem = Barrier {
        a: realify(&a) * (2.0 / f_scale),
        b: (0..st)
            .map(|c| {
                realify_vec(&b.column(c).into_owned())
                    .into_iter()
                    .map(|x| x * 2.0 / f_scale)
                    .collect()
            })
            .collect(),
        t: rows
            .iter()
            .map(|t| realify(&outer(t, t)) * (2.0 / lambda_b_watts))
            .collect(),
        n2: 2 * n,
        st,
    };
    let m = rows.len() as f64;
    let mut u = vec![0.0; 2 * n * st];
    let mut t = 1.0;
    let mut steps = 0;
    let mut history = Vec::new();
    loop {
        steps += problem.center(&mut u, t, max_iter.saturating_sub(steps))?;
        let v = from_real(&u, n, st);
        history.push(objective(&v));
        let gap = m / t;
        if gap <= tol || steps >= max_iter {
            let worst = violation(&v);
            if worst > 1e-9 * lambda_b_watts {
                return Err(Error::Infeasible {
                    iterations: steps,
                    max_violation: worst,
                    last_iterate: Box::new(v),
                });
            }
            let slacks = problem.slacks(&u);
            let active: Vec<&CVec> = rows
                .iter()
                .zip(&slacks)
                .filter(|(_, &s)| s <= ACTIVE_SLACK)
                .map(|(t, _)| *t)
                .collect();
            let fitted = multiplier_estimate(h_dl_eff, g_target, &v, &active);
            let mut fitted = fitted.into_iter();
            let multipliers = t_rows
                .iter()
                .map(|tr| {
                    let is_active = rows
                        .iter()
                        .zip(&slacks)
                        .any(|(r, &s)| std::ptr::eq(*r, tr) && s <= ACTIVE_SLACK);
                    if is_active {
                        fitted.next().unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            return Ok(NumericSolution {
                objective: objective(&v),
                precoder: DigitalPrecoder::new(v)?,
                multipliers,
                duality_gap: gap * f_scale,
                newton_steps: steps,
                history,
            });
        }
        t *= 10.0;
    }
}

/// Normalized slack below which a constraint counts as active when the
/// multipliers are recovered.
const ACTIVE_SLACK: f64 = 1e-4;

/// Least-squares multipliers for the active rows: minimizes
/// `‖H^H(HV − G) + Σ ζ_r·t_r·t_r^H·V‖_F` over real `ζ ≥ 0`. Recovering them
/// from the final point avoids the cancellation in `1 − g_r` that makes the
/// barrier's own estimates `1/(t·s_r)` inaccurate near the boundary.
fn multiplier_estimate(h: &CMat, g: &CMat, v: &CMat, active: &[&CVec]) -> Vec<f64> {
    if active.is_empty() {
        return Vec::new();
    }
    let grad = h.adjoint() * (h * v - g);
    let dirs: Vec<CMat> = active.iter().map(|t| *t * (t.adjoint() * v)).collect();
    let k = dirs.len();
    let gram = DMatrix::from_fn(k, k, |i, j| dirs[i].dotc(&dirs[j]).re);
    let rhs = nalgebra::DVector::from_fn(k, |i, _| -dirs[i].dotc(&grad).re);
    let sol = gram
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| nalgebra::DVector::zeros(k));
    sol.iter().map(|z| z.max(0.0)).collect()
}

/// Quadratic objective and constraints in stacked real coordinates, all
/// pre-scaled so the objective is relative to `‖G‖²` and each constraint
/// reads `g_r(u) ≤ 1`.
struct Barrier {
    /// Hessian block of the objective (shared by every column).
    a: DMatrix<f64>,
    /// Linear term per column.
    b: Vec<Vec<f64>>,
    /// Hessian block of each constraint.
    t: Vec<DMatrix<f64>>,
    n2: usize,
    st: usize,
}

impl Barrier {
    fn block<'a>(&self, u: &'a [f64], c: usize) -> &'a [f64] {
        &u[c * self.n2..(c + 1) * self.n2]
    }

    fn slacks(&self, u: &[f64]) -> Vec<f64> {
        self.t
            .iter()
            .map(|tr| {
                let g: f64 = (0..self.st)
                    .map(|c| quad(tr, self.block(u, c)) / 2.0)
                    .sum();
                1.0 - g
            })
            .collect()
    }

    /// `t·f(u) − Σ log(1 − g_r(u))`, infinite outside the domain.
    fn value(&self, u: &[f64], t: f64) -> f64 {
        let slacks = self.slacks(u);
        if slacks.iter().any(|&s| s <= 0.0) {
            return f64::INFINITY;
        }
        let f: f64 = (0..self.st)
            .map(|c| {
                let uc = self.block(u, c);
                quad(&self.a, uc) / 2.0 - dot(&self.b[c], uc)
            })
            .sum();
        t * f - slacks.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Newton iterations at fixed `t`; returns the number of steps taken.
    fn center(&self, u: &mut Vec<f64>, t: f64, budget: usize) -> Result<usize> {
        let dim = u.len();
        let mut steps = 0;
        while steps < budget {
            let slacks = self.slacks(u);
            let mut grad = vec![0.0; dim];
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for c in 0..self.st {
                let r = c * self.n2..(c + 1) * self.n2;
                let au = &self.a * nalgebra::DVector::from_column_slice(self.block(u, c));
                for (k, i) in r.clone().enumerate() {
                    grad[i] += t * (au[k] - self.b[c][k]);
                }
                let mut blk = hess.view_mut((r.start, r.start), (self.n2, self.n2));
                blk += &self.a * t;
            }
            for (tr, &s) in self.t.iter().zip(&slacks) {
                let mut dg = vec![0.0; dim];
                for c in 0..self.st {
                    let r = c * self.n2;
                    let tu = tr * nalgebra::DVector::from_column_slice(self.block(u, c));
                    dg[r..r + self.n2].copy_from_slice(tu.as_slice());
                    let mut blk = hess.view_mut((r, r), (self.n2, self.n2));
                    blk += tr / s;
                }
                let dgv = nalgebra::DVector::from_column_slice(&dg);
                hess += &dgv * dgv.transpose() / (s * s);
                for (gi, d) in grad.iter_mut().zip(&dg) {
                    *gi += d / s;
                }
            }
            let g = nalgebra::DVector::from_column_slice(&grad);
            let step = newton_direction(hess, &g)?;
            let decrement = -g.dot(&step);
            let f0 = self.value(u, t);
            // Below this the decrease is lost in the rounding of `f0`.
            if decrement / 2.0 <= 1e-10 || decrement <= 1e-13 * f0.abs() {
                break;
            }
            let mut alpha = 1.0;
            let mut next: Vec<f64>;
            loop {
                next = u.iter().zip(step.iter()).map(|(x, d)| x + alpha * d).collect();
                if self.value(&next, t) <= f0 - 0.25 * alpha * decrement {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return Ok(steps + 1);
                }
            }
            *u = next;
            steps += 1;
        }
        Ok(steps)
    }
}

fn newton_direction(hess: DMatrix<f64>, g: &nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>> {
    let dim = hess.nrows();
    let shift = hess.trace().abs() / dim as f64 * 1e-14;
    let mut h = hess;
    for attempt in 0..4 {
        if let Some(ch) = h.clone().cholesky() {
            return Ok(-ch.solve(g));
        }
        let bump = shift * 100f64.powi(attempt);
        for i in 0..dim {
            h[(i, i)] += bump;
        }
    }
    Err(Error::NumericalFailure("barrier Hessian is not positive definite".into()))
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(x);
    v.dot(&(m * &v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[[Re M, −Im M], [Im M, Re M]]`, so `v^H·M·v = u^T·M̂·u` for Hermitian `M`
/// and `u = [Re v; Im v]`.
fn realify(m: &CMat) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::<f64>::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

fn realify_vec(v: &CVec) -> Vec<f64> {
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}

fn from_real(u: &[f64], n: usize, st: usize) -> CMat {
    CMat::from_fn(n, st, |i, c| {
        let base = c * 2 * n;
        crate::linalg::c(u[base + i], u[base + n + i])
    })
}

/// Rescales every column of `V_bb` whose radiated power `‖V_rf·v_c‖²`
/// exceeds `budget_watts` down to exactly the budget. Compliant columns are
/// left untouched.
pub fn power_normalize(
    v_rf: &AnalogBeamformer,
    v_bb: &DigitalPrecoder,
    budget_watts: f64,
) -> Result<DigitalPrecoder> {
    if v_bb.matrix.nrows() != v_rf.n_rf() {
        return Err(Error::invalid("digital precoder rows must equal RF chains"));
    }
    let full = v_rf.matrix() * &v_bb.matrix;
    let mut out = v_bb.matrix.clone();
    for c in 0..out.ncols() {
        let p = full.column(c).norm_squared();
        if p > budget_watts {
            let scale = (budget_watts / p).sqrt();
            out.column_mut(c).scale_mut(scale);
        }
    }
    DigitalPrecoder::new(out)
}

/// Null-space-projection combiner: the top left singular vectors of the
/// effective UL channel, projected off the span of the effective radar
/// interference channel and normalized per column.
pub fn nsp_rx_combiner(h_ul_eff: &CMat, h_rad_int_eff: &CMat, n_streams: usize) -> Result<CMat> {
    if h_ul_eff.nrows() != h_rad_int_eff.nrows() {
        return Err(Error::invalid("UL and interference channels differ in RX dimension"));
    }
    let x = left_singular_vectors(h_ul_eff, n_streams);
    let basis = column_space_basis(h_rad_int_eff, NSP_RANK_TOL);
    let projected = &x - &basis * (basis.adjoint() * &x);
    let mut w = projected;
    for c in 0..w.ncols() {
        let norm = w.column(c).norm();
        if norm <= 1e-8 * x.column(c).norm().max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateCombiner(format!(
                "UL stream {c} lies inside the interference subspace"
            )));
        }
        w.column_mut(c).unscale_mut(norm);
    }
    Ok(w)
}

/// Maximum-singular-vector combiner that ignores interference.
pub fn mss_rx_combiner(h_ul_eff: &CMat, n_streams: usize) -> CMat {
    left_singular_vectors(h_ul_eff, n_streams)
}

/// DL user combiner (top-`st` left singular vectors of `Ĥ_DL`) and UL user
/// precoder (first right singular vector of `Ĥ_UL`, scaled to `P_u`).
pub fn user_beamformers(
    h_dl_hat: &CMat,
    h_ul_hat: &CMat,
    st: usize,
    p_u_watts: f64,
) -> (CMat, CVec) {
    let w_u = left_singular_vectors(h_dl_hat, st);
    let v_u = right_singular_vectors(h_ul_hat, 1).column(0).scale(p_u_watts.sqrt());
    (w_u, v_u)
}

/// Designs every beamformer and canceller for the next slot.
///
/// Steps: user combiner, TX analog, RX analog, compressed SI and effective
/// DL channels, cancellers, TX digital precoder (closed form for one RX
/// chain, interior point otherwise), per-stream power normalization, UL
/// precoder, NSP combiner. Errors carry the failing step number. When the
/// NSP projection annihilates the UL direction (always the case with one RX
/// chain and any interferer), the MSS combiner is used and flagged.
pub fn run_algorithm1(est: &EstimatedChannels, cfg: &ScenarioConfig) -> Result<HybridBeamformers> {
    let st = cfg.streams();
    let p_b = dbm_to_watt(cfg.p_b_dbm);
    let p_u = dbm_to_watt(cfg.p_u_dbm);
    let lambda_b = dbm_to_watt(cfg.lambda_b_dbm);

    let (w_u, v_u_bb) = user_beamformers(&est.h_dl_hat, &est.h_ul_hat, st, p_u);

    let tx_cb = cfg.tx_codebook().map_err(|e| e.at_step(2, "TX analog search"))?;
    let v_b_rf = select_tx_analog(&est.h_rad_hat, &tx_cb, cfg.n_b_rf)
        .map_err(|e| e.at_step(2, "TX analog search"))?;

    let rx_cb = cfg.rx_codebook().map_err(|e| e.at_step(3, "RX analog search"))?;
    let w_b_rf = select_rx_analog(&est.h_rad_hat, &est.h_bb_hat, &v_b_rf, &rx_cb)
        .map_err(|e| e.at_step(3, "RX analog search"))?;

    let h_tilde = w_b_rf.matrix().adjoint() * &est.h_bb_hat * v_b_rf.matrix();
    let h_dl_eff = &est.h_dl_hat * v_b_rf.matrix();

    let cancellers =
        build_cancellers(&h_tilde, cfg.n_taps).map_err(|e| e.at_step(5, "canceller design"))?;

    let residual = &h_tilde + &cancellers.analog;
    let t_rows: Vec<CVec> = residual.row_iter().map(|r| r.adjoint()).collect();
    let g = target_precoder(&h_dl_eff, st, p_b);
    let (v_bb, tx_solver) = if cfg.m_b_rf == 1 {
        let sol = lagrangian_tx_precoder(&h_dl_eff, &t_rows[0], lambda_b, &g, DEFAULT_RIDGE)
            .map_err(|e| e.at_step(7, "closed-form TX precoder"))?;
        (sol.precoder, TxSolver::ClosedForm { zeta: sol.zeta })
    } else {
        let sol = numeric_tx_precoder(
            &h_dl_eff,
            &t_rows,
            lambda_b,
            &g,
            DEFAULT_SOLVER_TOL,
            DEFAULT_SOLVER_MAX_ITER,
        )
        .map_err(|e| e.at_step(10, "numeric TX precoder"))?;
        (
            sol.precoder,
            TxSolver::Numeric {
                newton_steps: sol.newton_steps,
                duality_gap: sol.duality_gap,
            },
        )
    };
    let v_b_bb = power_normalize(&v_b_rf, &v_bb, p_b / st as f64)
        .map_err(|e| e.at_step(11, "power normalization"))?;

    let w_rf_h = w_b_rf.matrix().adjoint();
    let h_ul_eff = &w_rf_h * &est.h_ul_hat;
    let (w_b_bb, rx_combiner) = match nsp_rx_combiner(&h_ul_eff, &(&w_rf_h * &est.h_rad_int_hat), 1) {
        Ok(w) => (w, RxCombiner::Nsp),
        Err(Error::DegenerateCombiner(_)) => (mss_rx_combiner(&h_ul_eff, 1), RxCombiner::MssFallback),
        Err(e) => return Err(e.at_step(13, "NSP combiner")),
    };

    Ok(HybridBeamformers {
        v_b_rf,
        v_b_bb,
        w_b_rf,
        w_b_bb,
        w_u,
        v_u_bb,
        cancellers,
        tx_solver,
        rx_combiner,
    })
}
