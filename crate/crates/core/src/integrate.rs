//! Three-stage Gauss–Legendre (order 6) time stepping with a simplified
//! Newton solver, plus trajectory and snapshot generation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite_vector, DenseLu};
use crate::ph::{InputSignal, PhSystem};

/// Uniform grid `t_i = t0 + i·dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs finite t_end > t0 (got t0 = {t0}, t_end = {t_end})"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("time grid needs n_steps > 0".into()));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    /// Grid from a step size; `(t_end − t0)/dt` must be an integer up to rounding.
    pub fn from_step(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive (got {dt})"
            )));
        }
        let steps = (t_end - t0) / dt;
        let n = steps.round();
        if (steps - n).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} does not divide the interval [{t0}, {t_end}]"
            )));
        }
        Self::new(t0, t_end, n as usize)
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt()
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl NewtonConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "Newton configuration needs tol > 0 and max_iter > 0 (got {tol}, {max_iter})"
            )));
        }
        Ok(NewtonConfig { tol, max_iter })
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 10,
        }
    }
}

/// An autonomous-or-not first-order system `ẋ = f(t, x)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Wraps a pair of closures as an [`OdeSystem`].
pub struct FnSystem<F, G> {
    pub dim: usize,
    pub f: F,
    pub jac: G,
}

impl<F, G> OdeSystem for FnSystem<F, G>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    G: Fn(f64, &DVector<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.f)(t, x))
    }
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok((self.jac)(t, x))
    }
}

/// A full-order pH system driven by an input signal.
pub struct DrivenPh<'a> {
    pub sys: &'a PhSystem,
    pub input: &'a InputSignal,
}

impl OdeSystem for DrivenPh<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.sys.eval_rhs(x, &self.input.eval(t))
    }
    fn jacobian(&self, _t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.sys.rhs_jacobian(x)
    }
}

/// Central finite-difference Jacobian with step `1e-7·(1 + ‖x‖)`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let h = 1e-7 * (1.0 + x.norm());
    let mut jac: Option<DMatrix<f64>> = None;
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(fp.len(), n));
        jac.column_mut(j).copy_from(&((fp - fm) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

const SQRT15: f64 = 3.872_983_346_207_417;

/// Gauss–Legendre nodes.
pub const GL6_C: [f64; 3] = [0.5 - SQRT15 / 10.0, 0.5, 0.5 + SQRT15 / 10.0];
/// Gauss–Legendre weights.
pub const GL6_B: [f64; 3] = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
/// Gauss–Legendre coefficient matrix.
pub const GL6_A: [[f64; 3]; 3] = [
    [
        5.0 / 36.0,
        2.0 / 9.0 - SQRT15 / 15.0,
        5.0 / 36.0 - SQRT15 / 30.0,
    ],
    [
        5.0 / 36.0 + SQRT15 / 24.0,
        2.0 / 9.0,
        5.0 / 36.0 - SQRT15 / 24.0,
    ],
    [
        5.0 / 36.0 + SQRT15 / 30.0,
        2.0 / 9.0 + SQRT15 / 15.0,
        5.0 / 36.0,
    ],
];

/// Result of one Gauss–Legendre step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton statistics accumulated by a [`Gl6Stepper`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    pub steps: usize,
    pub iterations: usize,
    pub factorizations: usize,
}

/// Gauss–Legendre stepper with simplified Newton iterations.
///
/// The stage matrix `I − dt·(A ⊗ J_f)` uses the Jacobian at the start of the
/// step that last needed a refresh. It is kept across steps while Newton
/// contracts quickly and is rebuilt when an iteration stalls or the step
/// fails to converge.
pub struct Gl6Stepper<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    cfg: NewtonConfig,
    lu: Option<(DenseLu, f64)>,
    stale: bool,
    stats: NewtonStats,
}

/// Contraction factor above which the cached Newton matrix is considered stale.
const REFRESH_CONTRACTION: f64 = 0.5;

impl<'a, S: OdeSystem + ?Sized> Gl6Stepper<'a, S> {
    pub fn new(sys: &'a S, cfg: NewtonConfig) -> Self {
        Gl6Stepper {
            sys,
            cfg,
            lu: None,
            stale: true,
            stats: NewtonStats::default(),
        }
    }

    pub fn stats(&self) -> &NewtonStats {
        &self.stats
    }

    fn factorize(&mut self, t: f64, x: &DVector<f64>, dt: f64) -> Result<()> {
        let n = self.sys.dim();
        let jf = self.sys.jacobian(t, x)?;
        if jf.shape() != (n, n) {
            return Err(Error::dim("GL6 Jacobian", n, jf.nrows()));
        }
        let mut m = DMatrix::identity(3 * n, 3 * n);
        for i in 0..3 {
            for j in 0..3 {
                let mut block = m.view_mut((i * n, j * n), (n, n));
                block -= &jf * (dt * GL6_A[i][j]);
            }
        }
        let lu = DenseLu::new(&m, "GL6 Newton matrix")?;
        self.lu = Some((lu, dt));
        self.stale = false;
        self.stats.factorizations += 1;
        Ok(())
    }

    fn residual(
        &self,
        t: f64,
        x: &DVector<f64>,
        dt: f64,
        k: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = x.len();
        let mut res = DVector::zeros(3 * n);
        for i in 0..3 {
            let mut xi = x.clone();
            for j in 0..3 {
                xi.axpy(dt * GL6_A[i][j], &k.rows(j * n, n), 1.0);
            }
            let fi = self.sys.rhs(t + GL6_C[i] * dt, &xi)?;
            if fi.len() != n {
                return Err(Error::dim("GL6 right-hand side", n, fi.len()));
            }
            let mut r = res.rows_mut(i * n, n);
            r.copy_from(&k.rows(i * n, n));
            r -= &fi;
        }
        Ok(res)
    }

    fn newton(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        dt: f64,
    ) -> Result<(DVector<f64>, bool, usize, f64, bool)> {
        let n = x.len();
        let f0 = self.sys.rhs(t, x)?;
        let mut k = DVector::zeros(3 * n);
        for i in 0..3 {
            k.rows_mut(i * n, n).copy_from(&f0);
        }
        let mut res = self.residual(t, x, dt, &k)?;
        let mut norm = res.norm();
        let mut prev_step: Option<f64> = None;
        let mut slow = false;
        let mut it = 0;
        while norm > self.cfg.tol && it < self.cfg.max_iter {
            let (lu, _) = self.lu.as_ref().expect("factorization present");
            let delta = lu.solve_vec(&res)?;
            k -= &delta;
            it += 1;
            let step = delta.norm();
            if let Some(p) = prev_step {
                if p > 0.0 && step / p > REFRESH_CONTRACTION {
                    slow = true;
                }
            }
            prev_step = Some(step);
            res = self.residual(t, x, dt, &k)?;
            norm = res.norm();
            if !norm.is_finite() {
                break;
            }
        }
        Ok((k, norm <= self.cfg.tol, it, norm, slow))
    }

    /// Advance `x` from `t` to `t + dt`.
    pub fn step(&mut self, t: f64, x: &DVector<f64>, dt: f64) -> Result<StepOutcome> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive (got {dt})"
            )));
        }
        if x.len() != self.sys.dim() {
            return Err(Error::dim("GL6 state", self.sys.dim(), x.len()));
        }
        ensure_finite_vector(x, "GL6 state")?;
        let dt_changed = self.lu.as_ref().is_none_or(|(_, d)| *d != dt);
        let fresh = self.stale || dt_changed;
        if fresh {
            self.factorize(t, x, dt)?;
        }
        let (mut k, mut converged, mut iterations, mut residual, mut slow) =
            self.newton(t, x, dt)?;
        if !converged && !fresh {
            self.factorize(t, x, dt)?;
            let retry = self.newton(t, x, dt)?;
            iterations += retry.2;
            (k, converged, residual, slow) = (retry.0, retry.1, retry.3, retry.4);
        }
        self.stale = slow || !converged;
        self.stats.steps += 1;
        self.stats.iterations += iterations;

        let n = x.len();
        let mut next = x.clone();
        for i in 0..3 {
            next.axpy(dt * GL6_B[i], &k.rows(i * n, n), 1.0);
        }
        ensure_finite_vector(&next, "GL6 state")?;
        if !converged {
            log::warn!(
                "GL6 Newton did not converge at t = {t}: residual {residual:.3e} after {iterations} iterations"
            );
        }
        Ok(StepOutcome {
            x: next,
            converged,
            iterations,
            residual,
        })
    }
}

/// Single Gauss–Legendre step with a freshly assembled Newton matrix.
pub fn step_gl6<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    cfg: NewtonConfig,
) -> Result<StepOutcome> {
    Gl6Stepper::new(sys, cfg).step(t, x, dt)
}

/// States and outputs on a time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// One column per grid point.
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    /// Steps (1-based index of the step's end point) whose Newton solve did not converge.
    pub nonconverged_steps: Vec<usize>,
    pub newton: NewtonStats,
}

impl Trajectory {
    pub fn state(&self, i: usize) -> DVector<f64> {
        self.states.column(i).into_owned()
    }
    pub fn output(&self, i: usize) -> DVector<f64> {
        self.outputs.column(i).into_owned()
    }
}

/// Integrate `sys` over `grid` from `x0`, recording `output_fn` at every point.
pub fn simulate<S, O>(
    sys: &S,
    x0: &DVector<f64>,
    grid: TimeGrid,
    cfg: NewtonConfig,
    output_fn: O,
) -> Result<Trajectory>
where
    S: OdeSystem + ?Sized,
    O: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    ensure_finite_vector(x0, "initial condition")?;
    if x0.len() != sys.dim() {
        return Err(Error::dim("initial condition", sys.dim(), x0.len()));
    }
    let n = x0.len();
    let np = grid.n_points();
    let y0 = output_fn(x0)?;
    let m = y0.len();
    let mut states = DMatrix::zeros(n, np);
    let mut outputs = DMatrix::zeros(m, np);
    states.column_mut(0).copy_from(x0);
    outputs.column_mut(0).copy_from(&y0);

    let dt = grid.dt();
    let mut stepper = Gl6Stepper::new(sys, cfg);
    let mut x = x0.clone();
    let mut nonconverged = Vec::new();
    for i in 1..np {
        let out = stepper.step(grid.time(i - 1), &x, dt)?;
        if !out.converged {
            nonconverged.push(i);
        }
        x = out.x;
        let y = output_fn(&x)?;
        ensure_finite_vector(&y, "trajectory output")?;
        states.column_mut(i).copy_from(&x);
        outputs.column_mut(i).copy_from(&y);
    }
    if !nonconverged.is_empty() {
        log::warn!(
            "Newton failed to converge at {} of {} steps (first at step {})",
            nonconverged.len(),
            grid.n_steps,
            nonconverged[0]
        );
    }
    Ok(Trajectory {
        grid,
        states,
        outputs,
        nonconverged_steps: nonconverged,
        newton: stepper.stats().clone(),
    })
}

/// Simulate a full-order pH system under `input`.
pub fn simulate_fom(
    sys: &PhSystem,
    input: &InputSignal,
    grid: TimeGrid,
    cfg: NewtonConfig,
) -> Result<Trajectory> {
    if input.ports() != sys.ports() {
        return Err(Error::dim("input signal", sys.ports(), input.ports()));
    }
    let driven = DrivenPh { sys, input };
    simulate(&driven, sys.x0(), grid, cfg, |x| sys.eval_output(x))
}

/// `(X, X_Q)` with `X_Q[:, i] = q(x_i)`.
pub fn snapshot_matrices(
    sys: &PhSystem,
    traj: &Trajectory,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.dim();
    if traj.states.nrows() != n {
        return Err(Error::dim("snapshot matrices", n, traj.states.nrows()));
    }
    let pot = sys.hamiltonian().potential();
    let mut xq = DMatrix::zeros(n, traj.states.ncols());
    if !pot.is_zero() {
        for (i, col) in traj.states.column_iter().enumerate() {
            xq.column_mut(i).copy_from(&pot.gradient(&col.into_owned()));
        }
    }
    Ok((traj.states.clone(), xq))
}

/// Columns `∇H(x_i)`.
pub fn gradient_snapshots(sys: &PhSystem, states: &DMatrix<f64>) -> DMatrix<f64> {
    let h = sys.hamiltonian();
    let mut g = DMatrix::zeros(states.nrows(), states.ncols());
    for (i, col) in states.column_iter().enumerate() {
        g.column_mut(i).copy_from(&h.grad(&col.into_owned()));
    }
    g
}
