//! Reduced port-Hamiltonian systems.
//!
//! GMG models use the reduction map `W = (J−R)⁻ᵀV(Vᵀ(J−R)⁻¹V)⁻ᵀ`. With
//! `G = Dᵀ(J−R)⁻¹D` for the embedding Jacobian `D` this gives
//! `ẋ̌ = G⁻¹∇Ȟ(x̌) + [u; 0]`, i.e. `J̌ − Ř = G⁻¹` and `B̌ = [I_m; 0]`. For the
//! quadratic embedding `G(x̌)` is assembled from the cached `k×k` matrix
//! `V_fullᵀ(J−R)⁻¹V_full`, so online evaluations never touch `N`-sized data
//! beyond the DEIM factors.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::deim::DeimModel;
use crate::embed::{Embedding, LinearEmbedding, QuadraticEmbedding};
use crate::error::{Error, Result};
use crate::integrate::{fd_jacobian, simulate, NewtonConfig, OdeSystem, TimeGrid, Trajectory};
use crate::numerics::{
    inverse_with_condition, norm_2, skew_defect, sym_min_eigenvalue, symmetry_defect, thin_svd,
    DenseLu,
};
use crate::ph::{InputSignal, PhSystem, Potential};

/// Condition number of `Vᵀ(J−R)⁻¹V` above which `V ∉ S_G`.
pub const SG_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RomMethod {
    Sp1,
    Sp2,
    GmgPod,
    GmgQm,
}

impl RomMethod {
    pub const ALL: [RomMethod; 4] = [
        RomMethod::Sp1,
        RomMethod::Sp2,
        RomMethod::GmgPod,
        RomMethod::GmgQm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RomMethod::Sp1 => "SP1",
            RomMethod::Sp2 => "SP2",
            RomMethod::GmgPod => "GMG-POD",
            RomMethod::GmgQm => "GMG-QM",
        }
    }

    pub fn is_gmg(self) -> bool {
        matches!(self, RomMethod::GmgPod | RomMethod::GmgQm)
    }
}

impl fmt::Display for RomMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RomMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "SP1" => Ok(RomMethod::Sp1),
            "SP2" => Ok(RomMethod::Sp2),
            "GMG-POD" => Ok(RomMethod::GmgPod),
            "GMG-QM" => Ok(RomMethod::GmgQm),
            _ => Err(Error::InvalidArgument(format!(
                "unknown reduction method '{s}' (expected SP1, SP2, GMG-POD or GMG-QM)"
            ))),
        }
    }
}

/// Factorisation of `J − R`, shared by every GMG model of one full-order system.
#[derive(Debug)]
pub struct GmgContext {
    lu: DenseLu,
}

impl GmgContext {
    pub fn new(sys: &PhSystem) -> Result<Self> {
        Ok(GmgContext {
            lu: DenseLu::new(&sys.j_minus_r(), "J-R")?,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    /// `(J−R)⁻¹M`.
    pub fn solve(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu.solve(m)
    }

    /// `(J−R)⁻ᵀM`.
    pub fn solve_transpose(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu.solve_transpose(m)
    }

    /// `Vᵀ(J−R)⁻¹V`.
    pub fn gram(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(v.tr_mul(&self.solve(v)?))
    }
}

fn sg_inverse(g: &DMatrix<f64>, state_norm: Option<f64>) -> Result<DMatrix<f64>> {
    let r = g.nrows();
    match inverse_with_condition(g, "GMG Gram matrix") {
        Ok((inv, cond)) if cond <= SG_CONDITION_LIMIT => Ok(inv),
        Ok((_, condition)) | Err(Error::Singular { condition, .. }) => Err(Error::NotInSg {
            r,
            condition,
            state_norm,
        }),
        Err(e) => Err(e),
    }
}

/// GMG reduction map `W = (J−R)⁻ᵀV(Vᵀ(J−R)⁻¹V)⁻ᵀ`; satisfies `WᵀV = I`.
pub fn gmg_reduction(v: &DMatrix<f64>, ctx: &GmgContext) -> Result<DMatrix<f64>> {
    if v.nrows() != ctx.dim() {
        return Err(Error::dim("GMG basis", ctx.dim(), v.nrows()));
    }
    let ginv = sg_inverse(&ctx.gram(v)?, None)?;
    Ok(ctx.solve_transpose(v)? * ginv.transpose())
}

/// `Ȟ(x̌) = H_DEIM(φ(x̌))` expressed in embedding coefficients `c`
/// (`φ = V_full·c`), with all `N`-dimensional products precomputed.
#[derive(Debug, Clone)]
struct ReducedHamiltonian {
    /// `V_fullᵀQV_full`
    gq: DMatrix<f64>,
    potential: Arc<dyn Potential>,
    indices: Vec<usize>,
    /// `CᵀV_full`
    ctv: DMatrix<f64>,
    /// `V_fullᵀC`
    vtc: DMatrix<f64>,
    active: bool,
}

impl ReducedHamiltonian {
    fn new(basis: &DMatrix<f64>, deim: &DeimModel) -> Self {
        let h = deim.hamiltonian();
        let gq = basis.tr_mul(&(h.q() * basis));
        let active = !h.is_quadratic() && deim.dim() > 0;
        let (ctv, vtc) = if !active {
            (
                DMatrix::zeros(0, basis.ncols()),
                DMatrix::zeros(basis.ncols(), 0),
            )
        } else if deim.is_exact() {
            (basis.clone(), basis.transpose())
        } else {
            (deim.factor().tr_mul(basis), basis.tr_mul(deim.factor()))
        };
        ReducedHamiltonian {
            gq,
            potential: h.potential().clone(),
            indices: if active {
                deim.indices().to_vec()
            } else {
                Vec::new()
            },
            ctv,
            vtc,
            active,
        }
    }

    fn value(&self, c: &DVector<f64>) -> f64 {
        let quad = 0.5 * c.dot(&(&self.gq * c));
        let vals = &self.ctv * c;
        quad + self
            .potential
            .value_on_support(&self.indices, vals.as_slice())
    }

    /// `V_fullᵀ∇H_DEIM(V_full c)`.
    fn grad(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.gq * c;
        if self.active {
            let vals = &self.ctv * c;
            let q = DVector::from_vec(
                self.potential
                    .gradient_on_support(&self.indices, vals.as_slice()),
            );
            g += &self.vtc * q;
        }
        g
    }
}

#[derive(Debug, Clone)]
enum Operator {
    /// `ẋ̌ = (J̌−Ř)∇Ȟ + B̌u`, `y̌ = B̌ᵀ∇Ȟ`.
    Constant {
        j: DMatrix<f64>,
        r: DMatrix<f64>,
        b: DMatrix<f64>,
        w: DMatrix<f64>,
    },
    /// `ẋ̌ = G(x̌)⁻¹∇Ȟ + [u; 0]` with `G = Lᵀ·gram·L`.
    Manifold { gram: DMatrix<f64> },
}

/// Reduced matrices `(J̌, Ř, B̌)` at one reduced state.
#[derive(Debug, Clone)]
pub struct ReducedStructure {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ReducedStructure {
    /// `‖J̌ + J̌ᵀ‖_F / ‖J̌‖_F`.
    pub fn j_skew_defect(&self) -> f64 {
        relative(skew_defect(&self.j), self.j.norm())
    }
    /// `‖Ř − Řᵀ‖_F / ‖Ř‖_F`.
    pub fn r_symmetry_defect(&self) -> f64 {
        relative(symmetry_defect(&self.r), self.r.norm())
    }
    /// Smallest eigenvalue of `Ř` over `‖Ř‖₂`.
    pub fn r_min_eigenvalue(&self) -> f64 {
        relative(sym_min_eigenvalue(&self.r), norm_2(&self.r))
    }
    /// `max |B̌ − [I_m; 0]|`.
    pub fn port_defect(&self) -> f64 {
        let (r, m) = self.b.shape();
        (&self.b - DMatrix::<f64>::identity(r, m)).amax()
    }
}

fn relative(v: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        v / scale
    } else {
        v
    }
}

/// A reduced pH model in one of the four supported families.
#[derive(Debug, Clone)]
pub struct ReducedPhSystem {
    method: RomMethod,
    embedding: Embedding,
    inputs: usize,
    x0: DVector<f64>,
    operator: Operator,
    hamiltonian: ReducedHamiltonian,
}

fn check_ports_in_span(sys: &PhSystem, emb: &Embedding) -> Result<()> {
    let m = sys.ports();
    if emb.ports() != m {
        return Err(Error::dim("embedding port columns", m, emb.ports()));
    }
    let b = sys.b();
    let defect = (emb.basis().columns(0, m) - b).amax();
    if defect > 1e-8 * b.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "the first {m} embedding columns must equal B (defect {defect:.3e})"
        )));
    }
    Ok(())
}

fn check_deim(sys: &PhSystem, deim: &DeimModel) -> Result<()> {
    if deim.hamiltonian().dim() != sys.dim() {
        return Err(Error::dim(
            "DEIM model",
            sys.dim(),
            deim.hamiltonian().dim(),
        ));
    }
    Ok(())
}

impl ReducedPhSystem {
    fn with_constant(
        method: RomMethod,
        sys: &PhSystem,
        embedding: Embedding,
        w: DMatrix<f64>,
        b: DMatrix<f64>,
        deim: &DeimModel,
    ) -> Result<Self> {
        let j = w.tr_mul(&(sys.j() * &w));
        let r = w.tr_mul(&(sys.r() * &w));
        let hamiltonian = ReducedHamiltonian::new(embedding.basis(), deim);
        let x0 = embedding.reduce(sys.x0())?;
        Ok(ReducedPhSystem {
            method,
            embedding,
            inputs: sys.ports(),
            x0,
            operator: Operator::Constant { j, r, b, w },
            hamiltonian,
        })
    }

    pub fn method(&self) -> RomMethod {
        self.method
    }
    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }
    pub fn dim(&self) -> usize {
        self.embedding.reduced_dim()
    }
    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// The constant reduction map, if the model has one.
    pub fn reduction_map(&self) -> Option<&DMatrix<f64>> {
        match &self.operator {
            Operator::Constant { w, .. } => Some(w),
            Operator::Manifold { .. } => None,
        }
    }

    fn check_state(&self, xr: &DVector<f64>) -> Result<()> {
        if xr.len() != self.dim() {
            return Err(Error::dim("reduced state", self.dim(), xr.len()));
        }
        Ok(())
    }

    /// `∇Ȟ(x̌)`.
    pub fn grad_hamiltonian(&self, xr: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.embedding.coefficients(xr)?;
        let gc = self.hamiltonian.grad(&c);
        Ok(match &self.embedding {
            Embedding::Linear(_) => gc,
            Embedding::Quadratic(_) => self.embedding.coefficient_jacobian(xr)?.tr_mul(&gc),
        })
    }

    /// `Ȟ(x̌)`.
    pub fn hamiltonian_value(&self, xr: &DVector<f64>) -> Result<f64> {
        Ok(self.hamiltonian.value(&self.embedding.coefficients(xr)?))
    }

    fn manifold_inverse(&self, gram: &DMatrix<f64>, xr: &DVector<f64>) -> Result<DMatrix<f64>> {
        let l = self.embedding.coefficient_jacobian(xr)?;
        let g = l.tr_mul(&(gram * &l));
        sg_inverse(&g, Some(xr.norm()))
    }

    /// `(J̌(x̌), Ř(x̌), B̌)`.
    pub fn structure_at(&self, xr: &DVector<f64>) -> Result<ReducedStructure> {
        self.check_state(xr)?;
        Ok(match &self.operator {
            Operator::Constant { j, r, b, .. } => ReducedStructure {
                j: j.clone(),
                r: r.clone(),
                b: b.clone(),
            },
            Operator::Manifold { gram } => {
                let ginv = self.manifold_inverse(gram, xr)?;
                let gt = ginv.transpose();
                ReducedStructure {
                    j: (&ginv - &gt) * 0.5,
                    r: (&ginv + &gt) * -0.5,
                    b: DMatrix::identity(self.dim(), self.inputs),
                }
            }
        })
    }

    /// Reduced right-hand side and output `(ẋ̌, y̌)`.
    pub fn rhs_output(
        &self,
        xr: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(xr)?;
        if u.len() != self.inputs {
            return Err(Error::dim("reduced input", self.inputs, u.len()));
        }
        let g = self.grad_hamiltonian(xr)?;
        Ok(match &self.operator {
            Operator::Constant { j, r, b, .. } => {
                let dx = j * &g - r * &g + b * u;
                let y = b.tr_mul(&g);
                (dx, y)
            }
            Operator::Manifold { gram } => {
                let ginv = self.manifold_inverse(gram, xr)?;
                let mut dx = ginv * &g;
                for i in 0..self.inputs {
                    dx[i] += u[i];
                }
                (dx, g.rows(0, self.inputs).into_owned())
            }
        })
    }

    pub fn output(&self, xr: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.grad_hamiltonian(xr)?;
        Ok(match &self.operator {
            Operator::Constant { b, .. } => b.tr_mul(&g),
            Operator::Manifold { .. } => g.rows(0, self.inputs).into_owned(),
        })
    }

    /// `(Ř∇Ȟ)ᵀ∇Ȟ`.
    pub fn dissipation(&self, xr: &DVector<f64>) -> Result<f64> {
        let g = self.grad_hamiltonian(xr)?;
        let s = self.structure_at(xr)?;
        Ok((&s.r * &g).dot(&g))
    }

    /// `y̌ᵀu − [ẋ̌ᵀ∇Ȟ + (Ř∇Ȟ)ᵀ∇Ȟ]`.
    pub fn power_balance_residual(&self, xr: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let (dx, y) = self.rhs_output(xr, u)?;
        let g = self.grad_hamiltonian(xr)?;
        Ok(y.dot(u) - (dx.dot(&g) + self.dissipation(xr)?))
    }
}

pub fn rom_rhs_output(
    rom: &ReducedPhSystem,
    xr: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    rom.rhs_output(xr, u)
}

/// GMG model on a port-aligned linear embedding.
pub fn build_gmg_pod_rom(
    sys: &PhSystem,
    emb: &LinearEmbedding,
    deim: &DeimModel,
    ctx: &GmgContext,
) -> Result<ReducedPhSystem> {
    check_deim(sys, deim)?;
    let embedding = Embedding::Linear(emb.clone());
    check_ports_in_span(sys, &embedding)?;
    let w = gmg_reduction(emb.basis(), ctx)?;
    let b = DMatrix::identity(emb.basis().ncols(), sys.ports());
    ReducedPhSystem::with_constant(RomMethod::GmgPod, sys, embedding, w, b, deim)
}

/// GMG model on a quadratic manifold.
pub fn build_gmg_qm_rom(
    sys: &PhSystem,
    emb: &QuadraticEmbedding,
    deim: &DeimModel,
    ctx: &GmgContext,
) -> Result<ReducedPhSystem> {
    check_deim(sys, deim)?;
    let embedding = Embedding::Quadratic(emb.clone());
    check_ports_in_span(sys, &embedding)?;
    let gram = ctx.gram(emb.basis())?;
    let hamiltonian = ReducedHamiltonian::new(emb.basis(), deim);
    let x0 = embedding.reduce(sys.x0())?;
    let rom = ReducedPhSystem {
        method: RomMethod::GmgQm,
        embedding,
        inputs: sys.ports(),
        x0,
        operator: Operator::Manifold { gram },
        hamiltonian,
    };
    // S_G membership at the initial state
    rom.structure_at(&rom.x0.clone())?;
    Ok(rom)
}

/// SP1 baseline from an orthonormal POD basis; requires a quadratic Hamiltonian.
pub fn build_sp1_rom_from_basis(sys: &PhSystem, v: &DMatrix<f64>) -> Result<ReducedPhSystem> {
    if !sys.hamiltonian().is_quadratic() {
        return Err(Error::InvalidArgument(
            "SP1 needs a quadratic Hamiltonian (p ≡ 0)".into(),
        ));
    }
    let emb = LinearEmbedding::orthonormal(v.clone())?;
    let qv = sys.hamiltonian().q() * v;
    let (inv, _) = inverse_with_condition(&v.tr_mul(&qv), "SP1 V^T Q V")?;
    let w = qv * inv;
    let b = w.tr_mul(sys.b());
    ReducedPhSystem::with_constant(
        RomMethod::Sp1,
        sys,
        Embedding::Linear(emb),
        w,
        b,
        &DeimModel::identity(sys.hamiltonian()),
    )
}

/// SP1 baseline on the plain POD basis of `X`.
pub fn build_sp1_rom(sys: &PhSystem, x: &DMatrix<f64>, r: usize) -> Result<ReducedPhSystem> {
    let v = thin_svd(x)?.leading(r)?;
    build_sp1_rom_from_basis(sys, &v)
}

/// SP2 baseline: `W = V_∇H(V_PODᵀV_∇H)⁻¹`, Hamiltonian through `deim`.
pub fn build_sp2_rom_from_bases(
    sys: &PhSystem,
    v: &DMatrix<f64>,
    v_grad: &DMatrix<f64>,
    deim: &DeimModel,
) -> Result<ReducedPhSystem> {
    check_deim(sys, deim)?;
    if v.shape() != v_grad.shape() {
        return Err(Error::dim("SP2 gradient basis", v.ncols(), v_grad.ncols()));
    }
    let emb = LinearEmbedding::orthonormal(v.clone())?;
    let (inv, _) = inverse_with_condition(&v.tr_mul(v_grad), "SP2 V^T V_gradH")?;
    let w = v_grad * inv;
    let b = w.tr_mul(sys.b());
    ReducedPhSystem::with_constant(RomMethod::Sp2, sys, Embedding::Linear(emb), w, b, deim)
}

pub fn build_sp2_rom(
    sys: &PhSystem,
    x: &DMatrix<f64>,
    x_grad: &DMatrix<f64>,
    r: usize,
    deim: &DeimModel,
) -> Result<ReducedPhSystem> {
    let v = thin_svd(x)?.leading(r)?;
    let v_grad = thin_svd(x_grad)?.leading(r)?;
    build_sp2_rom_from_bases(sys, &v, &v_grad, deim)
}

/// A reduced model driven by an input signal, for time integration.
pub struct DrivenRom<'a> {
    pub rom: &'a ReducedPhSystem,
    pub input: &'a InputSignal,
}

impl OdeSystem for DrivenRom<'_> {
    fn dim(&self) -> usize {
        self.rom.dim()
    }
    fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.rom.rhs_output(x, &self.input.eval(t))?.0)
    }
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.input.eval(t);
        fd_jacobian(|v| Ok(self.rom.rhs_output(v, &u)?.0), x)
    }
}

/// Simulate a reduced model from its own initial condition.
pub fn simulate_rom(
    rom: &ReducedPhSystem,
    input: &InputSignal,
    grid: TimeGrid,
    cfg: NewtonConfig,
) -> Result<Trajectory> {
    if input.ports() != rom.inputs() {
        return Err(Error::dim("input signal", rom.inputs(), input.ports()));
    }
    let driven = DrivenRom { rom, input };
    simulate(&driven, rom.x0(), grid, cfg, |x| rom.output(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in RomMethod::ALL {
            assert_eq!(m.name().parse::<RomMethod>().unwrap(), m);
        }
        assert_eq!("gmg_qm".parse::<RomMethod>().unwrap(), RomMethod::GmgQm);
        assert!("foo".parse::<RomMethod>().is_err());
    }
}
