//! Dense complex linear-algebra helpers on top of `nalgebra`.
//!
//! Singular vectors returned from here follow one phase convention: the
//! first entry whose modulus exceeds a small fraction of the vector's largest
//! entry is rotated onto the positive real axis. This makes SVD-derived
//! beamformers reproducible across runs and platforms.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `e^{j·phase}`
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Squared Frobenius norm.
pub fn frob2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Rank-one outer product `a·b^H`.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Rotates `v` so its first significant entry is real and positive.
/// Returns the unit-modulus factor that was applied.
pub fn fix_phase(v: &mut CVec) -> Complex64 {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return ONE;
    }
    let pivot = v
        .iter()
        .find(|z| z.norm() > 1e-8 * peak)
        .copied()
        .unwrap_or(ONE);
    let rot = pivot.conj() / pivot.norm();
    v.iter_mut().for_each(|z| *z *= rot);
    rot
}

/// Thin SVD with singular values in descending order.
pub struct Svd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns (not `V^H`).
    pub v: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let s = SVD::new(m.clone(), true, true);
    let out = Svd {
        u: s.u.expect("requested U"),
        singular_values: s.singular_values.iter().copied().collect(),
        v: s.v_t.expect("requested V^H").adjoint(),
    };
    // The implicit-shift routine occasionally returns inconsistent factors
    // for rank-deficient complex input.
    if out.is_accurate(m, SVD_CHECK_TOL) {
        out
    } else {
        jacobi_svd(m)
    }
}

const SVD_CHECK_TOL: f64 = 1e-10;

impl Svd {
    fn is_accurate(&self, m: &CMat, tol: f64) -> bool {
        let k = self.singular_values.len();
        let sigma = CMat::from_diagonal(&CVec::from_iterator(k, self.singular_values.iter().map(|&x| c(x, 0.0))));
        let scale = m.norm().max(f64::MIN_POSITIVE);
        let recon = (&self.u * sigma * self.v.adjoint() - m).norm() / scale;
        let orth = |q: &CMat| (q.adjoint() * q - CMat::identity(q.ncols(), q.ncols())).norm();
        recon <= tol && orth(&self.u) <= tol && orth(&self.v) <= tol
    }
}

/// One-sided Jacobi SVD. Slower than the bidiagonal route but reliable on
/// rank-deficient input.
pub fn jacobi_svd(m: &CMat) -> Svd {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.adjoint());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = CMat::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dotc(&a.column(j));
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let x = mat[(r, i)];
                        let y = mat[(r, j)] * phase.conj();
                        mat[(r, i)] = x * cs - y * sn;
                        mat[(r, j)] = x * sn + y * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let smax = norms.iter().copied().fold(0.0, f64::max);
    let mut u = CMat::zeros(rows, n);
    let mut v_sorted = CMat::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singular_values.push(sigma);
        v_sorted.set_column(dst, &v.column(src));
        if sigma > f64::EPSILON * smax * n as f64 && sigma > 0.0 {
            u.set_column(dst, &a.column(src).unscale(sigma));
        }
    }
    complete_orthonormal(&mut u, &singular_values, f64::EPSILON * smax * n as f64);
    Svd {
        u,
        singular_values,
        v: v_sorted,
    }
}

/// Replaces the columns of `u` that belong to negligible singular values
/// with an orthonormal completion of the others.
fn complete_orthonormal(u: &mut CMat, singular_values: &[f64], floor: f64) {
    let rows = u.nrows();
    let mut e = 0;
    for col in 0..u.ncols() {
        let sigma = singular_values[col];
        if sigma > floor && sigma > 0.0 {
            continue;
        }
        while e < rows {
            let mut cand = CVec::zeros(rows);
            cand[e] = ONE;
            e += 1;
            // Two Gram-Schmidt passes against every other column.
            for _ in 0..2 {
                for k in 0..u.ncols() {
                    if k == col {
                        continue;
                    }
                    let q = u.column(k).into_owned();
                    let proj = q.dotc(&cand);
                    cand -= q * proj;
                }
            }
            let norm = cand.norm();
            if norm > 1e-6 {
                u.set_column(col, &cand.unscale(norm));
                break;
            }
        }
    }
}

/// Leading `k` left singular vectors (columns), phase-normalized.
pub fn left_singular_vectors(m: &CMat, k: usize) -> CMat {
    let s = svd(m);
    take_columns_fixed(&s.u, k, m.nrows())
}

/// Leading `k` right singular vectors (columns), phase-normalized.
pub fn right_singular_vectors(m: &CMat, k: usize) -> CMat {
    let s = svd(m);
    take_columns_fixed(&s.v, k, m.ncols())
}

fn take_columns_fixed(basis: &CMat, k: usize, dim: usize) -> CMat {
    let mut out = CMat::zeros(dim, k);
    for j in 0..k.min(basis.ncols()) {
        let mut col: CVec = basis.column(j).into_owned();
        fix_phase(&mut col);
        out.set_column(j, &col);
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    // Symmetrize first so round-off in the input cannot leak into the result.
    let h = (m + m.adjoint()).scale(0.5);
    let e = SymmetricEigen::new(h);
    let n = e.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &e.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Orthonormal basis of the column space of `m`, keeping singular values
/// above `rel_tol · σ_max`.
pub fn column_space_basis(m: &CMat, rel_tol: f64) -> CMat {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let s = svd(m);
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let rank = s
        .singular_values
        .iter()
        .take_while(|&&sv| sv > rel_tol * smax)
        .count();
    s.u.columns(0, rank).into_owned()
}

/// Solves `A·X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Option<CMat> {
    let h = (a + a.adjoint()).scale(0.5);
    h.cholesky().map(|ch| ch.solve(b))
}

/// Draws one `CN(0, variance)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re * s, im * s)
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMat {
    // Column-major fill order keeps draws reproducible for a given seed.
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng, variance);
        }
    }
    m
}

pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVec {
    CVec::from_iterator(len, (0..len).map(|_| complex_normal(rng, variance)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_reconstructs_wide_and_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (r, cc) in [(3, 5), (5, 3), (4, 4)] {
            let m = complex_normal_matrix(&mut rng, r, cc, 1.0);
            let s = svd(&m);
            let k = s.singular_values.len();
            let sig = CMat::from_diagonal(&CVec::from_iterator(
                k,
                s.singular_values.iter().map(|&x| c(x, 0.0)),
            ));
            let rec = &s.u * sig * s.v.adjoint();
            assert!(frob2(&(rec - &m)) < 1e-20 * frob2(&m).max(1.0));
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn phase_convention_makes_first_entry_real_positive() {
        let mut v = CVec::from_vec(vec![c(0.0, 0.0), c(0.0, -2.0), c(1.0, 1.0)]);
        fix_phase(&mut v);
        assert!(v[0].norm() == 0.0);
        assert!((v[1] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hermitian_eigen_is_ascending_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = complex_normal_matrix(&mut rng, 4, 4, 1.0);
        let h = &a * a.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMat::from_diagonal(&CVec::from_iterator(4, vals.iter().map(|&x| c(x, 0.0))));
        let rec = &vecs * d * vecs.adjoint();
        assert!(frob2(&(rec - &h)) < 1e-20 * frob2(&h));
    }

    #[test]
    fn column_space_basis_drops_null_directions() {
        let a = CVec::from_vec(vec![ONE, c(0.0, 1.0), ONE]);
        let m = outer(&a, &a) + outer(&a, &a).scale(2.0);
        let b = column_space_basis(&m, 1e-10);
        assert_eq!(b.ncols(), 1);
    }

    fn assert_valid(m: &CMat, s: &Svd) {
        assert!(s.is_accurate(m, 1e-12), "{m}");
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s.u.shape(), (m.nrows(), m.nrows().min(m.ncols())));
    }

    #[test]
    fn rank_deficient_products_factor_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let rows = rng.random_range(2..=16);
            let cols = rng.random_range(1..=16);
            let rank = rng.random_range(1..=rows.min(cols));
            let m = complex_normal_matrix(&mut rng, rows, rank, 1.0) * complex_normal_matrix(&mut rng, rank, cols, 1.0);
            let s = svd(&m);
            assert_valid(&m, &s);
            assert_eq!(column_space_basis(&m, 1e-10).ncols(), rank);
        }
    }

    #[test]
    fn jacobi_matches_reference_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (r, cc) in [(6, 3), (3, 6), (5, 5), (1, 4)] {
            let m = complex_normal_matrix(&mut rng, r, cc, 1.0);
            let j = jacobi_svd(&m);
            assert_valid(&m, &j);
            let eig = hermitian_eigen(&(m.adjoint() * &m)).0;
            let mut expect: Vec<f64> = eig.iter().rev().map(|&l| l.max(0.0).sqrt()).collect();
            expect.truncate(r.min(cc));
            for (a, b) in j.singular_values.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
        let z = CMat::zeros(3, 2);
        let j = jacobi_svd(&z);
        assert_eq!(j.singular_values, vec![0.0, 0.0]);
        assert_valid(&z, &j);
    }
}
