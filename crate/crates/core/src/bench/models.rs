//! Mass-spring-damper benchmark systems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ph::{ChainQuarticPotential, PhSystem, QuarticPotential, SplitHamiltonian};

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite (got {v})"
        ))),
        None => Ok(()),
    }
}

/// Linear chain of `n` masses; the first mass is driven, the last one is
/// attached to a wall. Every mass has its own damper to ground.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMsdConfig {
    pub masses: Vec<f64>,
    /// `k_i` couples mass `i` and `i+1`; the last one is the wall spring.
    pub stiffnesses: Vec<f64>,
    pub dampers: Vec<f64>,
}

impl LinearMsdConfig {
    pub fn uniform(n_masses: usize, mass: f64, stiffness: f64, damper: f64) -> Self {
        LinearMsdConfig {
            masses: vec![mass; n_masses],
            stiffnesses: vec![stiffness; n_masses],
            dampers: vec![damper; n_masses],
        }
    }

    pub fn n_masses(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_masses();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "the chain needs at least one mass".into(),
            ));
        }
        if self.stiffnesses.len() != n || self.dampers.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} stiffnesses and dampers, got {} and {}",
                self.stiffnesses.len(),
                self.dampers.len()
            )));
        }
        check_positive("masses", &self.masses)?;
        check_positive("stiffnesses", &self.stiffnesses)?;
        check_positive("dampers", &self.dampers)
    }
}

/// Interleaved state `(q₁, p₁, q₂, p₂, …)`, input on the first momentum.
pub fn build_linear_msd(cfg: &LinearMsdConfig) -> Result<PhSystem> {
    cfg.validate()?;
    let n = cfg.n_masses();
    let dim = 2 * n;
    let k = &cfg.stiffnesses;
    let mut q = DMatrix::zeros(dim, dim);
    let mut j = DMatrix::zeros(dim, dim);
    let mut r = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let (pos, mom) = (2 * i, 2 * i + 1);
        q[(pos, pos)] = k[i] + if i > 0 { k[i - 1] } else { 0.0 };
        if i + 1 < n {
            q[(pos, pos + 2)] = -k[i];
            q[(pos + 2, pos)] = -k[i];
        }
        q[(mom, mom)] = 1.0 / cfg.masses[i];
        j[(pos, mom)] = 1.0;
        j[(mom, pos)] = -1.0;
        r[(mom, mom)] = cfg.dampers[i];
    }
    let mut b = DMatrix::zeros(dim, 1);
    b[(1, 0)] = 1.0;
    PhSystem::new(
        j,
        r,
        b,
        SplitHamiltonian::quadratic(q)?,
        DVector::zeros(dim),
    )
}

/// Chain of `n` equal masses with springs `k₁ + k₂ℓ²` (force law) and
/// dampers `γ`; the last mass is attached to the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearMsdConfig {
    pub n_masses: usize,
    pub k1: f64,
    pub k2: f64,
    pub mass: f64,
    pub damping: f64,
}

impl NonlinearMsdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_masses == 0 {
            return Err(Error::InvalidArgument(
                "the chain needs at least one mass".into(),
            ));
        }
        check_positive(
            "k1, k2, mass and damping",
            &[self.k1, self.k2, self.mass, self.damping],
        )
    }

    fn parts(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.n_masses;
        let dim = 2 * n;
        let mut j = DMatrix::zeros(dim, dim);
        let mut r = DMatrix::zeros(dim, dim);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, i)] = -1.0;
            r[(n + i, n + i)] = self.damping;
        }
        let mut b = DMatrix::zeros(dim, 1);
        b[(n, 0)] = 1.0;
        (j, r, b)
    }
}

/// Upper bidiagonal `M` with `(Mx)_i = x_i − x_{i+1}` and `(Mx)_n = x_n`.
pub fn elongation_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = -1.0;
    }
    m
}

/// `T = blockdiag(M, I)`.
pub fn coordinate_transform(n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::identity(2 * n, 2 * n);
    t.view_mut((0, 0), (n, n)).copy_from(&elongation_matrix(n));
    t
}

/// The chain in positions and velocities `[ξ; ξ̇]`.
pub fn build_nonlinear_msd_original(cfg: &NonlinearMsdConfig) -> Result<PhSystem> {
    cfg.validate()?;
    let n = cfg.n_masses;
    let (j, r, b) = cfg.parts();
    let m = elongation_matrix(n);
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n))
        .copy_from(&(m.tr_mul(&m) * cfg.k1));
    for i in n..2 * n {
        q[(i, i)] = cfg.mass;
    }
    let pot = Arc::new(ChainQuarticPotential {
        n_masses: n,
        coeff: cfg.k2,
    });
    let h = SplitHamiltonian::new(q, pot, DVector::zeros(2 * n))?;
    PhSystem::new(j, r, b, h, DVector::zeros(2 * n))
}

/// The chain in elongation coordinates `x̂ = Tx`, where the quartic part is
/// separable. Returns the transformed system and `T`.
pub fn build_nonlinear_msd(cfg: &NonlinearMsdConfig) -> Result<(PhSystem, DMatrix<f64>)> {
    cfg.validate()?;
    let n = cfg.n_masses;
    let (j, r, b) = cfg.parts();
    let m = elongation_matrix(n);
    let t = coordinate_transform(n);

    // TJTᵀ = [[0, M], [−Mᵀ, 0]]; R and B only touch the momentum block.
    let mut jt = DMatrix::zeros(2 * n, 2 * n);
    jt.view_mut((0, n), (n, n)).copy_from(&m);
    jt.view_mut((n, 0), (n, n)).copy_from(&(-m.transpose()));
    let rt = &t * &r * t.transpose();
    let bt = &t * &b;
    debug_assert!((&t * &j * t.transpose() - &jt).amax() == 0.0);

    // T⁻ᵀ blockdiag(k₁MᵀM, mI) T⁻¹ = blockdiag(k₁I, mI)
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        q[(i, i)] = cfg.k1;
        q[(n + i, n + i)] = cfg.mass;
    }
    let pot = Arc::new(QuarticPotential {
        dim: 2 * n,
        active: n,
        coeff: cfg.k2,
    });
    let h = SplitHamiltonian::new(q, pot, DVector::zeros(2 * n))?;
    let sys = PhSystem::new(jt, rt, bt, h, DVector::zeros(2 * n))?;
    Ok((sys, t))
}
