//! Error measures comparing a reduced trajectory with the full one.

use nalgebra::{DMatrix, DVector};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::numerics::pseudo_inverse;
use crate::ph::{InputSignal, PhSystem};
use crate::rom::ReducedPhSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub e_x_red: f64,
    pub e_x_proj: f64,
    /// Only for quadratic embeddings.
    pub e_x_lowerbound: Option<f64>,
    pub e_y: f64,
    /// Energy-balance error at every grid point (empty if not computed).
    pub energy_error: Vec<f64>,
}

fn check_grids(fom: &Trajectory, rom: &Trajectory) -> Result<()> {
    let same = fom.grid.n_steps == rom.grid.n_steps
        && fom.grid.t0 == rom.grid.t0
        && fom.grid.t_end == rom.grid.t_end
        && fom.states.ncols() == rom.states.ncols();
    if !same {
        return Err(Error::InvalidArgument(format!(
            "time grids differ: FOM {:?}, ROM {:?}",
            fom.grid, rom.grid
        )));
    }
    if fom.outputs.nrows() != rom.outputs.nrows() {
        return Err(Error::dim(
            "ROM outputs",
            fom.outputs.nrows(),
            rom.outputs.nrows(),
        ));
    }
    Ok(())
}

/// `√(Σ_{i≥1}‖a_i − b_i‖² / Σ_{i≥1}‖a_i‖²)`, skipping the initial column.
pub fn relative_error(reference: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    let n = reference.ncols();
    let num: f64 = (1..n)
        .map(|i| (reference.column(i) - approx.column(i)).norm_squared())
        .sum();
    let den: f64 = (1..n).map(|i| reference.column(i).norm_squared()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Embed every column of a reduced state matrix.
pub fn reconstruct(emb: &Embedding, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut coeffs = DMatrix::zeros(emb.basis().ncols(), reduced.ncols());
    for (i, col) in reduced.column_iter().enumerate() {
        coeffs
            .column_mut(i)
            .copy_from(&emb.coefficients(&col.into_owned())?);
    }
    Ok(emb.basis() * coeffs)
}

/// `φ(ρ(x))` for every column.
pub fn project(emb: &Embedding, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut reduced = DMatrix::zeros(emb.reduced_dim(), states.ncols());
    for (i, col) in states.column_iter().enumerate() {
        reduced
            .column_mut(i)
            .copy_from(&emb.reduce(&col.into_owned())?);
    }
    reconstruct(emb, &reduced)
}

/// Relative error of the best approximation in `span(B, V̄₁, V̄₂)`.
fn lowerbound(emb: &Embedding, states: &DMatrix<f64>) -> Result<Option<f64>> {
    let Embedding::Quadratic(q) = emb else {
        return Ok(None);
    };
    let b = q.b();
    let (v1, v2) = (q.v1(), q.v2());
    let resid = states
        - &b * (pseudo_inverse(&b)? * states)
        - &v1 * v1.tr_mul(states)
        - &v2 * v2.tr_mul(states);
    Ok(Some(relative_error(states, &(states - resid))))
}

/// State, projection and output errors of a reduced trajectory.
pub fn compute_metrics(
    fom: &Trajectory,
    rom: &Trajectory,
    emb: &Embedding,
) -> Result<MetricsReport> {
    check_grids(fom, rom)?;
    if fom.states.nrows() != emb.full_dim() {
        return Err(Error::dim("FOM states", emb.full_dim(), fom.states.nrows()));
    }
    if rom.states.nrows() != emb.reduced_dim() {
        return Err(Error::dim(
            "ROM states",
            emb.reduced_dim(),
            rom.states.nrows(),
        ));
    }
    let x = &fom.states;
    Ok(MetricsReport {
        e_x_red: relative_error(x, &reconstruct(emb, &rom.states)?),
        e_x_proj: relative_error(x, &project(emb, x)?),
        e_x_lowerbound: lowerbound(emb, x)?,
        e_y: relative_error(&fom.outputs, &rom.outputs),
        energy_error: Vec::new(),
    })
}

/// Stored energy and dissipation rate of a (full or reduced) model.
pub trait EnergyModel {
    fn energy(&self, x: &DVector<f64>) -> Result<f64>;
    /// `(R∇H)ᵀ∇H`.
    fn dissipation(&self, x: &DVector<f64>) -> Result<f64>;
}

impl EnergyModel for PhSystem {
    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim("pH state", self.dim(), x.len()));
        }
        Ok(self.hamiltonian().value(x))
    }
    fn dissipation(&self, x: &DVector<f64>) -> Result<f64> {
        PhSystem::dissipation(self, x)
    }
}

impl EnergyModel for ReducedPhSystem {
    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        self.hamiltonian_value(x)
    }
    fn dissipation(&self, x: &DVector<f64>) -> Result<f64> {
        ReducedPhSystem::dissipation(self, x)
    }
}

/// `|H(x(t_k)) − H(x(0)) − ∫₀^{t_k} yᵀu + ∫₀^{t_k} (R∇H)ᵀ∇H|` for every grid
/// point, integrals by the composite trapezoidal rule.
pub fn energy_balance_series<M: EnergyModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    input: &InputSignal,
) -> Result<Vec<f64>> {
    let np = traj.states.ncols();
    if traj.outputs.nrows() != input.ports() {
        return Err(Error::dim(
            "input signal",
            traj.outputs.nrows(),
            input.ports(),
        ));
    }
    let dt = traj.grid.dt();
    let mut energy = Vec::with_capacity(np);
    let mut rate = Vec::with_capacity(np);
    for i in 0..np {
        let x = traj.state(i);
        let u = input.eval(traj.grid.time(i));
        energy.push(model.energy(&x)?);
        rate.push(traj.output(i).dot(&u) - model.dissipation(&x)?);
    }
    let mut out = Vec::with_capacity(np);
    let mut integral = 0.0;
    out.push(0.0);
    for i in 1..np {
        integral += 0.5 * dt * (rate[i - 1] + rate[i]);
        out.push((energy[i] - energy[0] - integral).abs());
    }
    Ok(out)
}

/// The energy-balance error at time `t_end`, which must be a grid point.
pub fn energy_balance_error<M: EnergyModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    input: &InputSignal,
    t_end: f64,
) -> Result<f64> {
    let g = &traj.grid;
    let k = (t_end - g.t0) / g.dt();
    let idx = k.round();
    if idx < 0.0 || idx as usize >= g.n_points() || (k - idx).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t = {t_end} is not a grid point"
        )));
    }
    Ok(energy_balance_series(model, traj, input)?[idx as usize])
}
