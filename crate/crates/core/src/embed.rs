//! Approximation maps `φ: ℝʳ → ℝᴺ` and point reductions `ρ` with `ρ∘φ = id`.
//!
//! Both embeddings keep the input matrix `B` as their first `m` basis
//! columns, so the reduced input matrix of a GMG model is `[I_m; 0]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite_matrix, hcat, kron_square, kron_square_jacobian, pseudo_inverse, rank_tolerance,
    thin_svd, Svd,
};

const INVARIANT_TOL: f64 = 1e-10;

fn check_orthonormal(v: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let k = v.ncols();
    let defect = (v.tr_mul(v) - DMatrix::<f64>::identity(k, k)).amax();
    if defect > INVARIANT_TOL {
        return Err(Error::InvalidArgument(format!(
            "{context}: columns are not orthonormal (defect {defect:.3e})"
        )));
    }
    Ok(())
}

fn check_orthogonal(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let scale = a.norm().max(1.0);
    let defect = a.tr_mul(b).amax();
    if defect > INVARIANT_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "{context}: bases are not orthogonal (defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// `φ(x̌) = Vx̌` with `V = [B, V̄]`.
#[derive(Debug, Clone)]
pub struct LinearEmbedding {
    ports: usize,
    v: DMatrix<f64>,
    v_pinv: DMatrix<f64>,
}

impl LinearEmbedding {
    /// Port-aligned embedding `V = [B, V̄]` with `BᵀV̄ = 0`, `V̄ᵀV̄ = I`.
    pub fn port_aligned(b: &DMatrix<f64>, vbar: &DMatrix<f64>) -> Result<Self> {
        check_orthonormal(vbar, "linear embedding V̄")?;
        check_orthogonal(b, vbar, "linear embedding [B, V̄]")?;
        let v = hcat(b, vbar)?;
        let v_pinv = pseudo_inverse(&v)?;
        Ok(LinearEmbedding {
            ports: b.ncols(),
            v,
            v_pinv,
        })
    }

    /// Plain orthonormal basis without port alignment.
    pub fn orthonormal(v: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&v, "linear embedding V")?;
        let v_pinv = v.transpose();
        Ok(LinearEmbedding {
            ports: 0,
            v,
            v_pinv,
        })
    }

    /// Arbitrary full-column-rank basis (reduction by its pseudo-inverse).
    pub fn general(v: DMatrix<f64>, ports: usize) -> Result<Self> {
        ensure_finite_matrix(&v, "linear embedding V")?;
        let v_pinv = pseudo_inverse(&v)?;
        Ok(LinearEmbedding { ports, v, v_pinv })
    }

    pub fn ports(&self) -> usize {
        self.ports
    }
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.v
    }
    pub fn b(&self) -> DMatrix<f64> {
        self.v.columns(0, self.ports).into_owned()
    }
    pub fn vbar(&self) -> DMatrix<f64> {
        self.v
            .columns(self.ports, self.v.ncols() - self.ports)
            .into_owned()
    }
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.v_pinv
    }
}

/// `φ(x̌) = Bx̌₁ + V̄₁x̌₂ + V̄₂M(x̌₂⊗x̌₂)`.
#[derive(Debug, Clone)]
pub struct QuadraticEmbedding {
    ports: usize,
    /// `[B, V̄₁, V̄₂]`
    basis: DMatrix<f64>,
    v1_dim: usize,
    v2_dim: usize,
    m: DMatrix<f64>,
    lambda: f64,
    linear_pinv: DMatrix<f64>,
}

impl QuadraticEmbedding {
    pub fn from_parts(
        b: &DMatrix<f64>,
        v1: &DMatrix<f64>,
        v2: &DMatrix<f64>,
        m: DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let k = v1.ncols();
        if m.nrows() != v2.ncols() {
            return Err(Error::dim("quadratic map M rows", v2.ncols(), m.nrows()));
        }
        if m.ncols() != k * k {
            return Err(Error::dim("quadratic map M columns", k * k, m.ncols()));
        }
        check_orthonormal(v1, "quadratic embedding V̄₁")?;
        check_orthonormal(v2, "quadratic embedding V̄₂")?;
        check_orthogonal(b, v1, "quadratic embedding [B, V̄₁]")?;
        let lin = hcat(b, v1)?;
        check_orthogonal(&lin, v2, "quadratic embedding V̄₂ ⊥ [B, V̄₁]")?;
        let linear_pinv = pseudo_inverse(&lin)?;
        Ok(QuadraticEmbedding {
            ports: b.ncols(),
            basis: hcat(&lin, v2)?,
            v1_dim: k,
            v2_dim: v2.ncols(),
            m,
            lambda,
            linear_pinv,
        })
    }

    pub fn ports(&self) -> usize {
        self.ports
    }
    pub fn lifting_order(&self) -> usize {
        self.v2_dim
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }
    /// `[B, V̄₁, V̄₂]`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn b(&self) -> DMatrix<f64> {
        self.basis.columns(0, self.ports).into_owned()
    }
    pub fn v1(&self) -> DMatrix<f64> {
        self.basis.columns(self.ports, self.v1_dim).into_owned()
    }
    pub fn v2(&self) -> DMatrix<f64> {
        self.basis
            .columns(self.ports + self.v1_dim, self.v2_dim)
            .into_owned()
    }
    /// `[B, V̄₁]`.
    pub fn linear_part(&self) -> DMatrix<f64> {
        self.basis.columns(0, self.ports + self.v1_dim).into_owned()
    }
    pub fn linear_pinv(&self) -> &DMatrix<f64> {
        &self.linear_pinv
    }
}

#[derive(Debug, Clone)]
pub enum Embedding {
    Linear(LinearEmbedding),
    Quadratic(QuadraticEmbedding),
}

impl Embedding {
    pub fn full_dim(&self) -> usize {
        self.basis().nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        match self {
            Embedding::Linear(e) => e.v.ncols(),
            Embedding::Quadratic(e) => e.ports + e.v1_dim,
        }
    }

    pub fn ports(&self) -> usize {
        match self {
            Embedding::Linear(e) => e.ports,
            Embedding::Quadratic(e) => e.ports,
        }
    }

    /// All columns spanning the image: `V` or `[B, V̄₁, V̄₂]`.
    pub fn basis(&self) -> &DMatrix<f64> {
        match self {
            Embedding::Linear(e) => &e.v,
            Embedding::Quadratic(e) => &e.basis,
        }
    }

    fn check(&self, xr: &DVector<f64>) -> Result<()> {
        if xr.len() != self.reduced_dim() {
            return Err(Error::dim("reduced state", self.reduced_dim(), xr.len()));
        }
        Ok(())
    }

    /// Coordinates `c` with `φ(x̌) = basis()·c`.
    pub fn coefficients(&self, xr: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(xr)?;
        Ok(match self {
            Embedding::Linear(_) => xr.clone(),
            Embedding::Quadratic(e) => {
                let lin = e.ports + e.v1_dim;
                let z = xr.rows(e.ports, e.v1_dim).into_owned();
                let mut c = DVector::zeros(lin + e.v2_dim);
                c.rows_mut(0, lin).copy_from(xr);
                c.rows_mut(lin, e.v2_dim)
                    .copy_from(&(&e.m * kron_square(&z)));
                c
            }
        })
    }

    /// `∂c/∂x̌`, so that `Dφ(x̌) = basis()·∂c/∂x̌`.
    pub fn coefficient_jacobian(&self, xr: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(xr)?;
        Ok(match self {
            Embedding::Linear(e) => DMatrix::identity(e.v.ncols(), e.v.ncols()),
            Embedding::Quadratic(e) => {
                let lin = e.ports + e.v1_dim;
                let z = xr.rows(e.ports, e.v1_dim).into_owned();
                let mut l = DMatrix::zeros(lin + e.v2_dim, lin);
                l.view_mut((0, 0), (lin, lin)).fill_with_identity();
                let dq = &e.m * kron_square_jacobian(&z);
                l.view_mut((lin, e.ports), (e.v2_dim, e.v1_dim))
                    .copy_from(&dq);
                l
            }
        })
    }

    pub fn eval(&self, xr: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.basis() * self.coefficients(xr)?)
    }

    pub fn jacobian(&self, xr: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.basis() * self.coefficient_jacobian(xr)?)
    }

    /// `ρ(x) = [B, V̄]†x` (linear part only for the quadratic embedding).
    pub fn reduce(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.full_dim() {
            return Err(Error::dim("full state", self.full_dim(), x.len()));
        }
        Ok(match self {
            Embedding::Linear(e) => &e.v_pinv * x,
            Embedding::Quadratic(e) => &e.linear_pinv * x,
        })
    }
}

pub fn embed_eval(e: &Embedding, xr: &DVector<f64>) -> Result<DVector<f64>> {
    e.eval(xr)
}

pub fn embed_jacobian(e: &Embedding, xr: &DVector<f64>) -> Result<DMatrix<f64>> {
    e.jacobian(xr)
}

pub fn reduce_point(e: &Embedding, x: &DVector<f64>) -> Result<DVector<f64>> {
    e.reduce(x)
}

/// POD of the port-deflated snapshots `X − BB†X`, shared across reduced
/// dimensions.
#[derive(Debug, Clone)]
pub struct DeflatedPod {
    b: DMatrix<f64>,
    svd: Svd,
    rank: usize,
}

impl DeflatedPod {
    pub fn new(x: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != b.nrows() {
            return Err(Error::dim("snapshot rows", b.nrows(), x.nrows()));
        }
        let deflated = deflate(x, b)?;
        let svd = thin_svd(&deflated)?;
        // Rank relative to the snapshots themselves, so that a numerically
        // zero deflation does not count as directions.
        let tol = rank_tolerance(x.nrows(), x.ncols(), x.norm());
        let rank = svd.rank(tol);
        Ok(DeflatedPod {
            b: b.clone(),
            svd,
            rank,
        })
    }

    pub fn ports(&self) -> usize {
        self.b.ncols()
    }

    /// Largest `r` for which a port-aligned basis exists.
    pub fn max_reduced_dim(&self) -> usize {
        self.ports() + self.rank
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.svd.singular_values
    }

    /// First `k` deflated POD modes.
    pub fn modes(&self, k: usize) -> Result<DMatrix<f64>> {
        if k > self.rank {
            return Err(Error::RankDeficient {
                context: "port-deflated POD (achievable r reported as available)",
                required: self.ports() + k,
                available: self.max_reduced_dim(),
            });
        }
        self.svd.leading(k)
    }

    pub fn linear_embedding(&self, r: usize) -> Result<LinearEmbedding> {
        let m = self.ports();
        if r <= m {
            return Err(Error::InvalidArgument(format!(
                "reduced dimension r = {r} must exceed the port count m = {m}"
            )));
        }
        LinearEmbedding::port_aligned(&self.b, &self.modes(r - m)?)
    }

    pub fn quadratic_embedding(
        &self,
        x: &DMatrix<f64>,
        r: usize,
        r_n: usize,
        lambda: f64,
    ) -> Result<QuadraticEmbedding> {
        let m = self.ports();
        if r <= m {
            return Err(Error::InvalidArgument(format!(
                "reduced dimension r = {r} must exceed the port count m = {m}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularisation must be finite and non-negative (got {lambda})"
            )));
        }
        let k = r - m;
        if r_n == 0 || r_n > k * k {
            return Err(Error::InvalidArgument(format!(
                "lifting order r_n = {r_n} must lie in 1..={}",
                k * k
            )));
        }
        let v1 = self.modes(k)?;
        let lin = hcat(&self.b, &v1)?;
        let residual = deflate(x, &lin)?;
        let svd = thin_svd(&residual)?;
        let available = svd.rank(rank_tolerance(x.nrows(), x.ncols(), x.norm()));
        if available < r_n {
            return Err(Error::RankDeficient {
                context: "quadratic embedding residual",
                required: r_n,
                available,
            });
        }
        // A nearly exhausted residual leaves its singular vectors slightly
        // outside the complement of [B, V̄₁]; project once more.
        let v2 = orthonormalize(deflate(&svd.leading(r_n)?, &lin)?);

        // r_QM = x − BB†x − V̄₁V̄₁ᵀx, projected onto span(V̄₂).
        let deflated = deflate(x, &self.b)?;
        let r_qm = &deflated - &v1 * v1.tr_mul(x);
        let targets = v2.tr_mul(&r_qm);
        let z = v1.tr_mul(x);
        let features = kron_square_columns(&z);
        let m_mat = fit_quadratic_map(&targets, &features, lambda)?;
        QuadraticEmbedding::from_parts(&self.b, &v1, &v2, m_mat, lambda)
    }
}

/// Modified Gram–Schmidt on the columns, keeping each close to its input.
fn orthonormalize(mut v: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..v.ncols() {
        for i in 0..j {
            let c = v.column(i).dot(&v.column(j));
            let vi = v.column(i).into_owned();
            v.column_mut(j).axpy(-c, &vi, 1.0);
        }
        let n = v.column(j).norm();
        if n > 0.0 {
            v.column_mut(j).scale_mut(1.0 / n);
        }
    }
    v
}

/// `X − BB†X`.
pub fn deflate(x: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.ncols() == 0 {
        return Ok(x.clone());
    }
    let b_pinv = pseudo_inverse(b)?;
    Ok(x - b * (b_pinv * x))
}

/// Column-wise `z ⊗ z`.
pub fn kron_square_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let k = z.nrows();
    let mut f = DMatrix::zeros(k * k, z.ncols());
    for (j, col) in z.column_iter().enumerate() {
        f.column_mut(j).copy_from(&kron_square(&col.into_owned()));
    }
    f
}

/// `argmin_M ‖T − MF‖²_F + λ‖M‖²_F` via SVD filter factors `σ/(σ²+λ)`;
/// for `λ = 0` this is the minimum-norm least-squares solution.
pub fn fit_quadratic_map(
    targets: &DMatrix<f64>,
    features: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if targets.ncols() != features.ncols() {
        return Err(Error::dim(
            "quadratic fit samples",
            features.ncols(),
            targets.ncols(),
        ));
    }
    let svd = thin_svd(features)?;
    let s = &svd.singular_values;
    let tol = s.get(0).map_or(0.0, |&s0| {
        rank_tolerance(features.nrows(), features.ncols(), s0)
    });
    // M = T V diag(f) Uᵀ
    let mut tv = targets * svd.v_t.transpose();
    for (j, &sj) in s.iter().enumerate() {
        let f = if lambda > 0.0 {
            sj / (sj * sj + lambda)
        } else if sj > tol {
            1.0 / sj
        } else {
            0.0
        };
        tv.column_mut(j).scale_mut(f);
    }
    Ok(tv * svd.u.transpose())
}

pub fn build_linear_embedding(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: usize,
) -> Result<LinearEmbedding> {
    DeflatedPod::new(x, b)?.linear_embedding(r)
}

pub fn build_quadratic_embedding(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: usize,
    r_n: usize,
    lambda: f64,
) -> Result<QuadraticEmbedding> {
    DeflatedPod::new(x, b)?.quadratic_embedding(x, r, r_n, lambda)
}
