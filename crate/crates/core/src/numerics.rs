//! Dense linear-algebra substrate: SVD with a deterministic sign convention,
//! pseudo-inverses, Kronecker products and pivoted LU solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    /// Non-increasing, non-negative.
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    /// First `k` left singular vectors.
    pub fn leading(&self, k: usize) -> Result<DMatrix<f64>> {
        if k > self.u.ncols() {
            return Err(Error::RankDeficient {
                context: "leading singular vectors",
                required: k,
                available: self.u.ncols(),
            });
        }
        Ok(self.u.columns(0, k).into_owned())
    }

    /// Number of singular values above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * &self.v_t
    }
}

pub fn ensure_finite_matrix(a: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub fn ensure_finite_vector(a: &DVector<f64>, context: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD with singular values sorted descending. Each left singular vector
/// is normalised so that its first significant entry is positive, which makes
/// downstream bases (and therefore experiment outputs) reproducible.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<Svd> {
    ensure_finite_matrix(a, "thin_svd")?;
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            singular_values: DVector::zeros(0),
            v_t: DMatrix::zeros(0, cols),
        });
    }
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|_| Error::SvdNoConvergence { rows, cols })?;
    let s = svd.S().column_vector();
    let (uf, vf) = (svd.U(), svd.V());

    // Stable descending order regardless of backend conventions.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let mut u = DMatrix::from_fn(rows, k, |i, j| uf[(i, order[j])]);
    let mut v_t = DMatrix::from_fn(k, cols, |i, j| vf[(j, order[i])]);
    let singular_values = DVector::from_fn(k, |i, _| s[order[i]].max(0.0));

    for j in 0..k {
        let col = u.column(j);
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .find(|v| v.abs() > 1e-10 * scale)
            .copied()
            .unwrap_or(0.0);
        if lead < 0.0 {
            u.column_mut(j).neg_mut();
            v_t.row_mut(j).neg_mut();
        }
    }
    if !(u.iter().all(|v| v.is_finite()) && v_t.iter().all(|v| v.is_finite())) {
        return Err(Error::SvdNoConvergence { rows, cols });
    }
    Ok(Svd {
        u,
        singular_values,
        v_t,
    })
}

/// Numerical-rank cutoff used by [`pseudo_inverse`].
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Moore–Penrose pseudo-inverse with cutoff `σ ≤ max(m,n)·ε·σ_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = a.shape();
    let svd = thin_svd(a)?;
    let k = svd.singular_values.len();
    if k == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let tol = rank_tolerance(rows, cols, svd.singular_values[0]);
    // V diag(1/s) Uᵀ over the retained part.
    let mut v_scaled = svd.v_t.transpose();
    for j in 0..k {
        let s = svd.singular_values[j];
        let f = if s > tol { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(j).scale_mut(f);
    }
    Ok(v_scaled * svd.u.transpose())
}

/// `a ⊗ b` for vectors of equal length: `result[i·k + j] = a[i]·b[j]`.
pub fn kron(a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.len() != b.len() {
        return Err(Error::dim("kron", a.len(), b.len()));
    }
    let k = b.len();
    Ok(DVector::from_fn(k * k, |idx, _| a[idx / k] * b[idx % k]))
}

/// `z ⊗ z`.
pub fn kron_square(z: &DVector<f64>) -> DVector<f64> {
    let k = z.len();
    DVector::from_fn(k * k, |idx, _| z[idx / k] * z[idx % k])
}

/// Derivative of `z ↦ z ⊗ z`, i.e. `I⊗z + z⊗I` as a k²×k matrix.
pub fn kron_square_jacobian(z: &DVector<f64>) -> DMatrix<f64> {
    let k = z.len();
    let mut d = DMatrix::zeros(k * k, k);
    for i in 0..k {
        for j in 0..k {
            let row = i * k + j;
            d[(row, i)] += z[j];
            d[(row, j)] += z[i];
        }
    }
    d
}

/// Pivoted LU factorisation that refuses matrices singular to working precision.
pub struct DenseLu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
    pivot_condition: f64,
}

impl std::fmt::Debug for DenseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseLu")
            .field("n", &self.n)
            .field("pivot_condition", &self.pivot_condition)
            .finish()
    }
}

impl DenseLu {
    pub fn new(a: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let (n, c) = a.shape();
        if n != c {
            return Err(Error::dim(context, n, c));
        }
        ensure_finite_matrix(a, context)?;
        let lu = to_faer(a).partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let p = u[(i, i)].abs();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        let pivot_condition = if n == 0 {
            1.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        };
        if !(pivot_condition.is_finite() && pivot_condition * f64::EPSILON < 1.0) {
            return Err(Error::Singular {
                context,
                condition: pivot_condition,
            });
        }
        Ok(DenseLu {
            lu,
            n,
            pivot_condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Ratio of extreme pivots; a cheap lower estimate of the 2-norm condition.
    pub fn condition_estimate(&self) -> f64 {
        self.pivot_condition
    }

    fn check_rhs(&self, rows: usize) -> Result<()> {
        if rows != self.n {
            return Err(Error::dim("LU solve", self.n, rows));
        }
        Ok(())
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        use faer::linalg::solvers::Solve;
        self.check_rhs(b.nrows())?;
        Ok(from_faer(self.lu.solve(to_faer(b)).as_ref()))
    }

    /// Solve `Aᵀ X = B`.
    pub fn solve_transpose(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        use faer::linalg::solvers::Solve;
        self.check_rhs(b.nrows())?;
        Ok(from_faer(self.lu.solve_transpose(to_faer(b)).as_ref()))
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        use faer::linalg::solvers::Solve;
        self.check_rhs(b.len())?;
        let mut x = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        Ok(DVector::from_fn(self.n, |i, _| x[(i, 0)]))
    }
}

/// Solve `A X = B` with partial pivoting.
pub fn solve_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    DenseLu::new(a, "solve_dense")?.solve(b)
}

pub fn solve_dense_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    DenseLu::new(a, "solve_dense")?.solve_vec(b)
}

/// Explicit inverse of a small square matrix together with its 1-norm
/// condition number `‖A‖₁‖A⁻¹‖₁`.
pub fn inverse_with_condition(
    a: &DMatrix<f64>,
    context: &'static str,
) -> Result<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    let lu = DenseLu::new(a, context)?;
    let inv = lu.solve(&DMatrix::identity(n, n))?;
    let cond = norm_1(a) * norm_1(&inv);
    if !cond.is_finite() {
        return Err(Error::Singular {
            context,
            condition: cond,
        });
    }
    Ok((inv, cond))
}

/// Maximum absolute column sum.
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn sym_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s = (a + a.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn norm_2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// `‖A + Aᵀ‖_F`.
pub fn skew_defect(a: &DMatrix<f64>) -> f64 {
    (a + a.transpose()).norm()
}

/// `‖A − Aᵀ‖_F`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// Horizontal concatenation `[A, B]`.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim("hcat", a.nrows(), b.nrows()));
    }
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn svd_identity() {
        let svd = thin_svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(svd.singular_values, DVector::from_element(3, 1.0));
        assert!((svd.u.clone() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        assert!((svd.v_t.clone() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn svd_diagonal_rank_one() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let svd = thin_svd(&a).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-15);
        assert_eq!(svd.singular_values[1], 0.0);
        assert!((svd.u[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(svd.u[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random() {
        for (r, c) in [(10, 4), (4, 10), (30, 30)] {
            let a = lcg_matrix(r, c, 7);
            let svd = thin_svd(&a).unwrap();
            assert!((svd.reconstruct() - &a).norm() <= 1e-10 * a.norm());
            let utu = svd.u.transpose() * &svd.u;
            assert!((utu - DMatrix::identity(r.min(c), r.min(c))).norm() < 1e-12);
            for w in svd.singular_values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn svd_sign_convention() {
        let a = lcg_matrix(8, 5, 3);
        let svd = thin_svd(&a).unwrap();
        for j in 0..5 {
            let first = svd
                .u
                .column(j)
                .iter()
                .find(|v| v.abs() > 1e-10)
                .copied()
                .unwrap();
            assert!(first > 0.0);
        }
        let svd_neg = thin_svd(&(-a)).unwrap();
        assert!((svd_neg.u - svd.u).norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(thin_svd(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn pinv_examples() {
        let p = pseudo_inverse(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);

        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = pseudo_inverse(&a).unwrap();
        let normal = (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        assert!((p - normal).norm() < 1e-14);

        let q = thin_svd(&lcg_matrix(9, 3, 11)).unwrap().u;
        let p = pseudo_inverse(&q).unwrap();
        assert!((p - q.transpose()).norm() < 1e-12);
    }

    #[test]
    fn pinv_rank_deficient_penrose() {
        let b = lcg_matrix(7, 2, 5);
        let a = &b * lcg_matrix(2, 5, 9);
        let p = pseudo_inverse(&a).unwrap();
        let rel = |x: DMatrix<f64>, y: &DMatrix<f64>| (x - y).norm() / y.norm();
        assert!(rel(&a * &p * &a, &a) < 1e-10);
        assert!(rel(&p * &a * &p, &p) < 1e-10);
        let ap = &a * &p;
        assert!(symmetry_defect(&ap) < 1e-10 * ap.norm());
        let pa = &p * &a;
        assert!(symmetry_defect(&pa) < 1e-10 * pa.norm());
    }

    #[test]
    fn kron_examples() {
        let e = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(kron(&e, &e).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(kron(&a, &b).unwrap().as_slice(), &[3.0, 4.0, 6.0, 8.0]);
        let z = DVector::zeros(2);
        assert_eq!(kron(&z, &z).unwrap(), DVector::zeros(4));
        assert!(kron(&a, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn kron_square_jacobian_matches_fd() {
        let z = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        let jac = kron_square_jacobian(&z);
        let h = 1e-6;
        for l in 0..3 {
            let mut zp = z.clone();
            zp[l] += h;
            let mut zm = z.clone();
            zm[l] -= h;
            let fd = (kron_square(&zp) - kron_square(&zm)) / (2.0 * h);
            assert!((fd - jac.column(l)).norm() < 1e-8);
        }
    }

    #[test]
    fn solve_examples() {
        let b = DVector::from_vec(vec![5.0, -1.0, 2.0]);
        let x = solve_dense_vec(&DMatrix::identity(3, 3), &b).unwrap();
        assert_eq!(x, b);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_dense_vec(&a, &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);

        let a = lcg_matrix(8, 8, 21) + DMatrix::identity(8, 8) * 4.0;
        let rhs = lcg_matrix(8, 1, 4);
        let x = solve_dense(&a, &rhs).unwrap();
        let xp = pseudo_inverse(&a).unwrap() * &rhs;
        assert!((x - xp).norm() < 1e-9);
    }

    #[test]
    fn solve_singular_reports_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match solve_dense_vec(&a, &DVector::from_vec(vec![1.0, 1.0])) {
            Err(Error::Singular { condition, .. }) => assert!(condition > 1e15),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_condition_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3]));
        let (inv, cond) = inverse_with_condition(&a, "test").unwrap();
        assert!((inv[(1, 1)] - 1e3).abs() < 1e-9);
        assert!((cond - 1e3).abs() < 1e-9);
    }
}
