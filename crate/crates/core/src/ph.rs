//! Full-order port-Hamiltonian systems
//! `ẋ = (J−R)∇H(x) + Bu`, `y = Bᵀ∇H(x)` with `H(x) = ½xᵀQx + p(x)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite_matrix, ensure_finite_vector, norm_2, skew_defect, sym_min_eigenvalue,
    symmetry_defect, thin_svd, DenseLu,
};

/// The non-quadratic part `p` of a split Hamiltonian.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    /// `q(x) = ∇p(x)`.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn is_zero(&self) -> bool {
        false
    }

    /// `p` at the vector that equals `entries` on `support` and zero elsewhere.
    fn value_on_support(&self, support: &[usize], entries: &[f64]) -> f64 {
        self.value(&scatter(self.dim(), support, entries))
    }

    /// `q(x)[support]` for `x` as in [`Potential::value_on_support`].
    fn gradient_on_support(&self, support: &[usize], entries: &[f64]) -> Vec<f64> {
        let g = self.gradient(&scatter(self.dim(), support, entries));
        support.iter().map(|&i| g[i]).collect()
    }
}

fn scatter(n: usize, support: &[usize], entries: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    for (&i, &v) in support.iter().zip(entries) {
        x[i] = v;
    }
    x
}

/// `p ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroPotential {
    pub dim: usize,
}

impl Potential for ZeroPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn hessian(&self, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn value_on_support(&self, _: &[usize], _: &[f64]) -> f64 {
        0.0
    }
    fn gradient_on_support(&self, support: &[usize], _: &[f64]) -> Vec<f64> {
        vec![0.0; support.len()]
    }
}

/// `p(x) = Σ_{k<active} ¼·coeff·x_k⁴`.
#[derive(Debug, Clone)]
pub struct QuarticPotential {
    pub dim: usize,
    pub active: usize,
    pub coeff: f64,
}

impl Potential for QuarticPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.25 * self.coeff * x.iter().take(self.active).map(|v| v.powi(4)).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| {
            if i < self.active {
                self.coeff * x[i].powi(3)
            } else {
                0.0
            }
        })
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.dim, |i, _| {
            if i < self.active {
                3.0 * self.coeff * x[i] * x[i]
            } else {
                0.0
            }
        }))
    }
    fn value_on_support(&self, support: &[usize], entries: &[f64]) -> f64 {
        0.25 * self.coeff
            * support
                .iter()
                .zip(entries)
                .filter(|(&i, _)| i < self.active)
                .map(|(_, v)| v.powi(4))
                .sum::<f64>()
    }
    fn gradient_on_support(&self, support: &[usize], entries: &[f64]) -> Vec<f64> {
        support
            .iter()
            .zip(entries)
            .map(|(&i, v)| {
                if i < self.active {
                    self.coeff * v.powi(3)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Quartic spring potential of a mass chain in position/momentum coordinates:
/// `p(x) = Σ_k ¼·coeff·ℓ_k⁴` with `ℓ_k = x_k − x_{k+1}` for `k < n−1` and
/// `ℓ_{n−1} = x_{n−1}` (last mass attached to the wall).
#[derive(Debug, Clone)]
pub struct ChainQuarticPotential {
    pub n_masses: usize,
    pub coeff: f64,
}

impl ChainQuarticPotential {
    fn elongations(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.n_masses;
        (0..n)
            .map(|k| if k + 1 < n { x[k] - x[k + 1] } else { x[k] })
            .collect()
    }
}

impl Potential for ChainQuarticPotential {
    fn dim(&self) -> usize {
        2 * self.n_masses
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.25 * self.coeff * self.elongations(x).iter().map(|l| l.powi(4)).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n_masses;
        let l = self.elongations(x);
        let mut g = DVector::zeros(2 * n);
        for k in 0..n {
            let f = self.coeff * l[k].powi(3);
            g[k] += f;
            if k + 1 < n {
                g[k + 1] -= f;
            }
        }
        g
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_masses;
        let l = self.elongations(x);
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            let c = 3.0 * self.coeff * l[k] * l[k];
            h[(k, k)] += c;
            if k + 1 < n {
                h[(k + 1, k + 1)] += c;
                h[(k, k + 1)] -= c;
                h[(k + 1, k)] -= c;
            }
        }
        h
    }
}

/// `H(x) = ½xᵀQx + p(x)` together with its equilibrium.
#[derive(Debug, Clone)]
pub struct SplitHamiltonian {
    q: DMatrix<f64>,
    potential: Arc<dyn Potential>,
    equilibrium: DVector<f64>,
}

impl SplitHamiltonian {
    pub fn new(
        q: DMatrix<f64>,
        potential: Arc<dyn Potential>,
        equilibrium: DVector<f64>,
    ) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::dim("Hamiltonian Q", n, q.ncols()));
        }
        if potential.dim() != n {
            return Err(Error::dim("Hamiltonian potential", n, potential.dim()));
        }
        if equilibrium.len() != n {
            return Err(Error::dim("Hamiltonian equilibrium", n, equilibrium.len()));
        }
        ensure_finite_matrix(&q, "Hamiltonian Q")?;
        let scale = q.norm().max(f64::MIN_POSITIVE);
        if symmetry_defect(&q) > 1e-12 * scale {
            return Err(Error::InvalidStructure("Q is not symmetric".into()));
        }
        let min_eig = min_eig_fast(&q);
        if min_eig < -1e-10 * norm_2_fast(&q) {
            return Err(Error::InvalidStructure(format!(
                "Q is not positive semidefinite (smallest eigenvalue {min_eig:.3e})"
            )));
        }
        let h = SplitHamiltonian {
            q,
            potential,
            equilibrium,
        };
        let g = h.grad(&h.equilibrium);
        if g.amax() > 1e-10 {
            return Err(Error::InvalidStructure(format!(
                "gradient of H does not vanish at the equilibrium (max {:.3e})",
                g.amax()
            )));
        }
        Ok(h)
    }

    /// Purely quadratic `H = ½xᵀQx` with equilibrium at the origin.
    pub fn quadratic(q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        Self::new(q, Arc::new(ZeroPotential { dim: n }), DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }
    pub fn equilibrium(&self) -> &DVector<f64> {
        &self.equilibrium
    }
    pub fn is_quadratic(&self) -> bool {
        self.potential.is_zero()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.potential.value(x)
    }

    /// `∇H(x) = Qx + q(x)`.
    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + self.potential.gradient(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.q + self.potential.hessian(x)
    }
}

pub fn grad_hamiltonian(h: &SplitHamiltonian, x: &DVector<f64>) -> DVector<f64> {
    h.grad(x)
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.iter()
        .enumerate()
        .all(|(k, v)| *v == 0.0 || k % a.nrows() == k / a.nrows())
}

fn min_eig_fast(a: &DMatrix<f64>) -> f64 {
    if is_diagonal(a) {
        a.diagonal().iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        sym_min_eigenvalue(a)
    }
}

fn norm_2_fast(a: &DMatrix<f64>) -> f64 {
    if is_diagonal(a) {
        a.diagonal().amax()
    } else {
        norm_2(a)
    }
}

/// A time-dependent input `u(t) ∈ ℝᵐ`.
#[derive(Clone)]
pub struct InputSignal {
    m: usize,
    label: String,
    f: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InputSignal")
            .field("m", &self.m)
            .field("label", &self.label)
            .finish()
    }
}

impl InputSignal {
    pub fn new(
        m: usize,
        label: impl Into<String>,
        f: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        InputSignal {
            m,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn zero(m: usize) -> Self {
        Self::new(m, "zero", move |_| DVector::zeros(m))
    }

    /// The same constant value on every port.
    pub fn constant(m: usize, value: f64) -> Self {
        Self::new(m, format!("constant({value})"), move |_| {
            DVector::from_element(m, value)
        })
    }

    /// `amplitude·sin(omega·t)` on every port.
    pub fn sine(m: usize, amplitude: f64, omega: f64) -> Self {
        Self::new(m, format!("{amplitude}*sin({omega}*t)"), move |t| {
            DVector::from_element(m, amplitude * (omega * t).sin())
        })
    }

    pub fn ports(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        (self.f)(t)
    }
}

/// Diagnostics for the structural hypotheses of a pH system.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub j_skew_defect: f64,
    pub r_symmetry_defect: f64,
    pub r_min_eigenvalue: f64,
    pub q_symmetry_defect: f64,
    pub q_min_eigenvalue: f64,
    pub j_minus_r_condition: f64,
    pub b_rank: usize,
    pub ports: usize,
}

impl StructureReport {
    pub fn checks(&self) -> Vec<(&'static str, bool, String)> {
        vec![
            (
                "J skew-symmetric",
                self.j_skew_defect <= 1e-12,
                format!("||J+J^T||/||J|| = {:.3e}", self.j_skew_defect),
            ),
            (
                "R symmetric",
                self.r_symmetry_defect <= 1e-12,
                format!("||R-R^T||/||R|| = {:.3e}", self.r_symmetry_defect),
            ),
            (
                "R positive semidefinite",
                self.r_min_eigenvalue >= -1e-10,
                format!("min eig(R)/||R|| = {:.3e}", self.r_min_eigenvalue),
            ),
            (
                "Q symmetric",
                self.q_symmetry_defect <= 1e-12,
                format!("||Q-Q^T||/||Q|| = {:.3e}", self.q_symmetry_defect),
            ),
            (
                "Q positive semidefinite",
                self.q_min_eigenvalue >= -1e-10,
                format!("min eig(Q)/||Q|| = {:.3e}", self.q_min_eigenvalue),
            ),
            (
                "J-R invertible",
                self.j_minus_r_condition.is_finite()
                    && self.j_minus_r_condition * f64::EPSILON < 1.0,
                format!(
                    "pivot condition estimate = {:.3e}",
                    self.j_minus_r_condition
                ),
            ),
            (
                "B full column rank",
                self.b_rank == self.ports,
                format!("rank(B) = {} of {}", self.b_rank, self.ports),
            ),
        ]
    }

    pub fn passes(&self) -> bool {
        self.checks().iter().all(|c| c.1)
    }
}

/// `Σ(J, R, H, B, x₀)`.
#[derive(Debug, Clone)]
pub struct PhSystem {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    b: DMatrix<f64>,
    hamiltonian: SplitHamiltonian,
    x0: DVector<f64>,
}

impl PhSystem {
    pub fn new(
        j: DMatrix<f64>,
        r: DMatrix<f64>,
        b: DMatrix<f64>,
        hamiltonian: SplitHamiltonian,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let sys = Self::new_unchecked(j, r, b, hamiltonian, x0)?;
        let report = sys.structure_report()?;
        if let Some((name, _, detail)) = report.checks().into_iter().find(|c| !c.1) {
            return Err(Error::InvalidStructure(format!(
                "{name} violated: {detail}"
            )));
        }
        Ok(sys)
    }

    /// Checks dimensions and finiteness only.
    pub fn new_unchecked(
        j: DMatrix<f64>,
        r: DMatrix<f64>,
        b: DMatrix<f64>,
        hamiltonian: SplitHamiltonian,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let n = hamiltonian.dim();
        for (context, m) in [("pH system J", &j), ("pH system R", &r)] {
            if m.shape() != (n, n) {
                return Err(Error::dim(
                    context,
                    n,
                    if m.nrows() != n { m.nrows() } else { m.ncols() },
                ));
            }
        }
        if b.nrows() != n {
            return Err(Error::dim("pH system B", n, b.nrows()));
        }
        if x0.len() != n {
            return Err(Error::dim("pH system x0", n, x0.len()));
        }
        ensure_finite_matrix(&j, "pH system J")?;
        ensure_finite_matrix(&r, "pH system R")?;
        ensure_finite_matrix(&b, "pH system B")?;
        ensure_finite_vector(&x0, "pH system x0")?;
        Ok(PhSystem {
            j,
            r,
            b,
            hamiltonian,
            x0,
        })
    }

    pub fn structure_report(&self) -> Result<StructureReport> {
        let rel = |defect: f64, m: &DMatrix<f64>| {
            let s = m.norm();
            if s == 0.0 {
                defect
            } else {
                defect / s
            }
        };
        let r_scale = norm_2_fast(&self.r);
        let q_scale = norm_2_fast(self.hamiltonian.q());
        let j_minus_r_condition = match DenseLu::new(&self.j_minus_r(), "J-R") {
            Ok(lu) => lu.condition_estimate(),
            Err(Error::Singular { condition, .. }) => condition,
            Err(e) => return Err(e),
        };
        let b_svd = thin_svd(&self.b)?;
        let b_rank = match b_svd.singular_values.get(0) {
            Some(&s0) if s0 > 0.0 => b_svd.rank(crate::numerics::rank_tolerance(
                self.b.nrows(),
                self.b.ncols(),
                s0,
            )),
            _ => 0,
        };
        Ok(StructureReport {
            j_skew_defect: rel(skew_defect(&self.j), &self.j),
            r_symmetry_defect: rel(symmetry_defect(&self.r), &self.r),
            r_min_eigenvalue: min_eig_fast(&self.r) / r_scale.max(f64::MIN_POSITIVE),
            q_symmetry_defect: rel(symmetry_defect(self.hamiltonian.q()), self.hamiltonian.q()),
            q_min_eigenvalue: min_eig_fast(self.hamiltonian.q()) / q_scale.max(f64::MIN_POSITIVE),
            j_minus_r_condition,
            b_rank,
            ports: self.b.ncols(),
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
    pub fn ports(&self) -> usize {
        self.b.ncols()
    }
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn hamiltonian(&self) -> &SplitHamiltonian {
        &self.hamiltonian
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn j_minus_r(&self) -> DMatrix<f64> {
        &self.j - &self.r
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim("pH state", self.dim(), x.len()));
        }
        Ok(())
    }

    fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.ports() {
            return Err(Error::dim("pH input", self.ports(), u.len()));
        }
        Ok(())
    }

    /// `(J−R)∇H(x) + Bu`.
    pub fn eval_rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        self.check_input(u)?;
        let g = self.hamiltonian.grad(x);
        Ok(&self.j * &g - &self.r * &g + &self.b * u)
    }

    /// `Bᵀ∇H(x)`.
    pub fn eval_output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        Ok(self.b.tr_mul(&self.hamiltonian.grad(x)))
    }

    /// `(R∇H)ᵀ∇H`.
    pub fn dissipation(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_state(x)?;
        let g = self.hamiltonian.grad(x);
        Ok((&self.r * &g).dot(&g))
    }

    /// `yᵀu − [ẋᵀ∇H + (R∇H)ᵀ∇H]`, zero up to rounding.
    pub fn power_balance_residual(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let g = self.hamiltonian.grad(x);
        let xdot = self.eval_rhs(x, u)?;
        let y = self.b.tr_mul(&g);
        Ok(y.dot(u) - (xdot.dot(&g) + (&self.r * &g).dot(&g)))
    }

    /// State Jacobian of the right-hand side, `(J−R)(Q + ∇²p(x))`.
    pub fn rhs_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        Ok(self.j_minus_r() * self.hamiltonian.hessian(x))
    }
}
