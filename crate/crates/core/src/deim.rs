//! Structure-preserving DEIM.
//!
//! The nonlinear gradient `q` is approximated by `ℙ q(ℙᵀx)` with
//! `ℙ = U(EᵀU)⁻¹Eᵀ`. Since this is the exact gradient of
//! `H_DEIM(x) = ½xᵀQx + p(ℙᵀx)`, the approximation keeps the pH structure.
//! `ℙ` is stored as `C = U(EᵀU)⁻¹` plus the index set `ξ`; note that `ℙᵀx`
//! is supported on `ξ` with values `Cᵀx`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{thin_svd, DenseLu};
use crate::ph::SplitHamiltonian;

/// Smallest `d` whose relative Frobenius POD tail `√(Σ_{k≥d} σ_k²) / ‖σ‖` is
/// below `eps`. Zero singular values (all-zero snapshots) give `d = 0`.
pub fn deim_dim_from_singular_values(sigma: &[f64], eps: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    // tail[d] = Σ_{k≥d} σ_k², accumulated from the small end.
    let mut tail = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tail[k] = tail[k + 1] + sigma[k] * sigma[k];
    }
    (0..=sigma.len())
        .find(|&d| (tail[d] / total).sqrt() < eps)
        .unwrap_or(sigma.len())
}

/// DEIM dimension for the q-snapshot matrix `X_Q`.
pub fn choose_deim_dim(x_q: &DMatrix<f64>, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "DEIM tolerance must be positive (got {eps})"
        )));
    }
    if x_q.iter().all(|v| *v == 0.0) {
        return Ok(0);
    }
    let svd = thin_svd(x_q)?;
    Ok(deim_dim_from_singular_values(
        svd.singular_values.as_slice(),
        eps,
    ))
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in v.enumerate() {
        // strict comparison keeps the smallest index on ties
        if x.abs() > best_val {
            best = i;
            best_val = x.abs();
        }
    }
    best
}

/// Greedy DEIM index selection (0-based, smallest index on ties).
pub fn deim_indices(u: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, d) = u.shape();
    if d > n {
        return Err(Error::RankDeficient {
            context: "DEIM basis",
            required: d,
            available: n,
        });
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    let mut xi = vec![argmax_abs(u.column(0).iter().copied())];
    for l in 1..d {
        let etu = DMatrix::from_fn(l, l, |i, j| u[(xi[i], j)]);
        let rhs = DVector::from_fn(l, |i, _| u[(xi[i], l)]);
        let c = DenseLu::new(&etu, "DEIM E^T U")?.solve_vec(&rhs)?;
        let resid = u.column(l) - u.columns(0, l) * c;
        let next = argmax_abs(resid.iter().copied());
        if xi.contains(&next) {
            return Err(Error::Singular {
                context: "DEIM E^T U",
                condition: f64::INFINITY,
            });
        }
        xi.push(next);
    }
    Ok(xi)
}

/// DEIM data for one split Hamiltonian.
#[derive(Debug, Clone)]
pub struct DeimModel {
    hamiltonian: SplitHamiltonian,
    basis: DMatrix<f64>,
    indices: Vec<usize>,
    factor: DMatrix<f64>,
    exact: bool,
}

impl DeimModel {
    /// POD of `X_Q` truncated at tolerance `eps`, greedy indices and factor.
    pub fn build(h: &SplitHamiltonian, x_q: &DMatrix<f64>, eps: f64) -> Result<Self> {
        if x_q.nrows() != h.dim() {
            return Err(Error::dim("DEIM snapshots", h.dim(), x_q.nrows()));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "DEIM tolerance must be positive (got {eps})"
            )));
        }
        if h.is_quadratic() || x_q.iter().all(|v| *v == 0.0) {
            return Self::from_basis(h, DMatrix::zeros(h.dim(), 0));
        }
        let svd = thin_svd(x_q)?;
        let d = deim_dim_from_singular_values(svd.singular_values.as_slice(), eps);
        Self::from_basis(h, svd.leading(d)?)
    }

    /// DEIM with a given basis `U` (orthonormal columns expected).
    pub fn from_basis(h: &SplitHamiltonian, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != h.dim() {
            return Err(Error::dim("DEIM basis", h.dim(), basis.nrows()));
        }
        let indices = deim_indices(&basis)?;
        let d = indices.len();
        let etu = DMatrix::from_fn(d, d, |i, j| basis[(indices[i], j)]);
        let factor = if d == 0 {
            DMatrix::zeros(h.dim(), 0)
        } else {
            // C = U (EᵀU)⁻¹  ⇔  (EᵀU)ᵀ Cᵀ = Uᵀ
            let lu = DenseLu::new(&etu.transpose(), "DEIM E^T U")?;
            lu.solve(&basis.transpose())?.transpose()
        };
        Ok(DeimModel {
            hamiltonian: h.clone(),
            basis,
            indices,
            factor,
            exact: false,
        })
    }

    /// `d = N`, `ℙ = I`: no hyper-reduction, gradients are exact.
    pub fn identity(h: &SplitHamiltonian) -> Self {
        let n = h.dim();
        DeimModel {
            hamiltonian: h.clone(),
            basis: DMatrix::identity(n, n),
            indices: (0..n).collect(),
            factor: DMatrix::identity(n, n),
            exact: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }
    pub fn hamiltonian(&self) -> &SplitHamiltonian {
        &self.hamiltonian
    }
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    /// `C = U(EᵀU)⁻¹`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Nonzero entries of `ℙᵀx` (at [`Self::indices`]), i.e. `Cᵀx`.
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.exact {
            x.clone()
        } else {
            self.factor.tr_mul(x)
        }
    }

    /// `ℙᵀx` as a full vector.
    pub fn project_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        let vals = self.restrict(x);
        let mut out = DVector::zeros(x.len());
        for (k, &i) in self.indices.iter().enumerate() {
            out[i] = vals[k];
        }
        out
    }

    /// `ℙv = C·v[ξ]`.
    pub fn interpolate(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.exact {
            return v.clone();
        }
        let sel = DVector::from_fn(self.dim(), |k, _| v[self.indices[k]]);
        &self.factor * sel
    }

    /// `H_DEIM(x) = ½xᵀQx + p(ℙᵀx)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let h = &self.hamiltonian;
        let vals = self.restrict(x);
        0.5 * x.dot(&(h.q() * x))
            + h.potential()
                .value_on_support(&self.indices, vals.as_slice())
    }

    /// `∇H_DEIM(x) = Qx + C·q(ℙᵀx)[ξ]`.
    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = &self.hamiltonian;
        let mut g = h.q() * x;
        if self.dim() > 0 {
            let vals = self.restrict(x);
            let qv = DVector::from_vec(
                h.potential()
                    .gradient_on_support(&self.indices, vals.as_slice()),
            );
            if self.exact {
                g += qv;
            } else {
                g += &self.factor * qv;
            }
        }
        g
    }
}

pub fn build_deim(h: &SplitHamiltonian, x_q: &DMatrix<f64>, eps: f64) -> Result<DeimModel> {
    DeimModel::build(h, x_q, eps)
}

pub fn deim_grad(model: &DeimModel, x: &DVector<f64>) -> DVector<f64> {
    model.grad(x)
}
