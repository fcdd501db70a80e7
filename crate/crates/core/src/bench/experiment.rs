//! Sweeps over reduction methods and reduced dimensions.
//!
//! The full-order model is simulated once; its snapshots, the DEIM model,
//! the POD bases and the factorisation of `J − R` are shared read-only by all
//! `(method, r)` cells, which are independent and may run concurrently.

use nalgebra::DMatrix;

use crate::bench::metrics::{
    compute_metrics, energy_balance_series, project, relative_error, MetricsReport,
};
use crate::bench::models::{
    build_linear_msd, build_nonlinear_msd, LinearMsdConfig, NonlinearMsdConfig,
};
use crate::deim::DeimModel;
use crate::embed::{DeflatedPod, Embedding};
use crate::error::{Error, Result};
use crate::integrate::{
    gradient_snapshots, simulate_fom, snapshot_matrices, NewtonConfig, TimeGrid, Trajectory,
};
use crate::numerics::{thin_svd, Svd};
use crate::parallel::{self, Execution};
use crate::ph::{InputSignal, PhSystem};
use crate::rom::{
    build_gmg_pod_rom, build_gmg_qm_rom, build_sp1_rom_from_basis, build_sp2_rom_from_bases,
    simulate_rom, GmgContext, ReducedPhSystem, RomMethod,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    LinearMsd(LinearMsdConfig),
    /// Simulated in elongation coordinates.
    NonlinearMsd(NonlinearMsdConfig),
}

impl ModelSpec {
    pub fn build(&self) -> Result<PhSystem> {
        match self {
            ModelSpec::LinearMsd(cfg) => build_linear_msd(cfg),
            ModelSpec::NonlinearMsd(cfg) => Ok(build_nonlinear_msd(cfg)?.0),
        }
    }
}

/// Regularisation of the quadratic fit for reduced dimension `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// `max(factor·e_proj(r), floor)` with `e_proj` the projection error of
    /// the linear part `[B, V̄₁]`.
    ProjectionScaled {
        factor: f64,
        floor: f64,
    },
}

impl LambdaRule {
    pub fn lambda(&self, e_proj: f64) -> f64 {
        match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::ProjectionScaled { factor, floor } => (factor * e_proj).max(floor),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub input: InputSignal,
    pub methods: Vec<RomMethod>,
    pub r_values: Vec<usize>,
    /// Lifting order of the quadratic embedding.
    pub r_n: usize,
    pub lambda: LambdaRule,
    pub deim_tol: f64,
    pub newton: NewtonConfig,
}

/// Everything the cells share.
#[derive(Debug)]
pub struct Offline {
    pub sys: PhSystem,
    pub input: InputSignal,
    pub fom: Trajectory,
    pub deim: DeimModel,
    pub pod: DeflatedPod,
    pod_x: Svd,
    pod_grad: Option<Svd>,
    ctx: GmgContext,
    newton: NewtonConfig,
}

impl Offline {
    /// Simulate the FOM and build every shared reduction ingredient.
    /// `with_gradient_pod` enables the SP2 baseline.
    pub fn prepare(
        sys: PhSystem,
        input: InputSignal,
        grid: TimeGrid,
        newton: NewtonConfig,
        deim_tol: f64,
        with_gradient_pod: bool,
    ) -> Result<Self> {
        let fom = simulate_fom(&sys, &input, grid, newton)?;
        if !fom.nonconverged_steps.is_empty() {
            log::warn!(
                "FOM: {} unconverged Newton steps",
                fom.nonconverged_steps.len()
            );
        }
        let (x, x_q) = snapshot_matrices(&sys, &fom)?;
        let deim = DeimModel::build(sys.hamiltonian(), &x_q, deim_tol)?;
        log::info!("DEIM dimension {} of {}", deim.dim(), sys.dim());
        let pod = DeflatedPod::new(&x, sys.b())?;
        let pod_x = thin_svd(&x)?;
        let pod_grad = if with_gradient_pod {
            Some(thin_svd(&gradient_snapshots(&sys, &x))?)
        } else {
            None
        };
        let ctx = GmgContext::new(&sys)?;
        Ok(Offline {
            sys,
            input,
            fom,
            deim,
            pod,
            pod_x,
            pod_grad,
            ctx,
            newton,
        })
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        Self::prepare(
            spec.model.build()?,
            spec.input.clone(),
            spec.grid,
            spec.newton,
            spec.deim_tol,
            spec.methods.contains(&RomMethod::Sp2),
        )
    }

    pub fn snapshots(&self) -> &DMatrix<f64> {
        &self.fom.states
    }

    /// Relative projection error of the port-aligned linear basis of size `r`.
    pub fn projection_error(&self, r: usize) -> Result<f64> {
        let emb = Embedding::Linear(self.pod.linear_embedding(r)?);
        Ok(relative_error(
            self.snapshots(),
            &project(&emb, self.snapshots())?,
        ))
    }

    pub fn build_rom(
        &self,
        method: RomMethod,
        r: usize,
        r_n: usize,
        lambda: LambdaRule,
    ) -> Result<ReducedPhSystem> {
        match method {
            RomMethod::Sp1 => build_sp1_rom_from_basis(&self.sys, &self.pod_x.leading(r)?),
            RomMethod::Sp2 => {
                let grad = self.pod_grad.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("SP2 needs the gradient snapshot POD".into())
                })?;
                build_sp2_rom_from_bases(
                    &self.sys,
                    &self.pod_x.leading(r)?,
                    &grad.leading(r)?,
                    &self.deim,
                )
            }
            RomMethod::GmgPod => build_gmg_pod_rom(
                &self.sys,
                &self.pod.linear_embedding(r)?,
                &self.deim,
                &self.ctx,
            ),
            RomMethod::GmgQm => {
                let lam = match lambda {
                    LambdaRule::Fixed(l) => l,
                    rule => rule.lambda(self.projection_error(r)?),
                };
                log::debug!("GMG-QM r = {r}: lambda = {lam:e}");
                let emb = self
                    .pod
                    .quadratic_embedding(self.snapshots(), r, r_n, lam)?;
                build_gmg_qm_rom(&self.sys, &emb, &self.deim, &self.ctx)
            }
        }
    }

    /// Build, simulate and score one reduced model.
    pub fn run_cell(
        &self,
        method: RomMethod,
        r: usize,
        r_n: usize,
        lambda: LambdaRule,
    ) -> Result<MetricsReport> {
        let rom = self.build_rom(method, r, r_n, lambda)?;
        let traj = simulate_rom(&rom, &self.input, self.fom.grid, self.newton)?;
        if !traj.nonconverged_steps.is_empty() {
            log::warn!(
                "{method} r = {r}: {} unconverged Newton steps",
                traj.nonconverged_steps.len()
            );
        }
        let mut report = compute_metrics(&self.fom, &traj, rom.embedding())?;
        report.energy_error = energy_balance_series(&rom, &traj, &self.input)?;
        Ok(report)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub method: RomMethod,
    pub r: usize,
    pub result: std::result::Result<MetricsReport, Error>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub fom: Trajectory,
    pub fom_energy: Vec<f64>,
    /// Sorted by `(method, r)`.
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentResult {
    pub fn row(&self, method: RomMethod, r: usize) -> Option<&ExperimentRow> {
        self.rows
            .iter()
            .find(|row| row.method == method && row.r == r)
    }

    pub fn metrics(&self, method: RomMethod, r: usize) -> Option<&MetricsReport> {
        self.row(method, r).and_then(|row| row.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&ExperimentRow, &Error)> {
        self.rows
            .iter()
            .filter_map(|row| row.result.as_ref().err().map(|e| (row, e)))
    }
}

pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    let offline = Offline::from_spec(spec)?;
    sweep(&offline, spec, exec)
}

/// Run every `(method, r)` cell of `spec` against prepared offline data.
pub fn sweep(
    offline: &Offline,
    spec: &ExperimentSpec,
    exec: Execution,
) -> Result<ExperimentResult> {
    let fom_energy = energy_balance_series(&offline.sys, &offline.fom, &offline.input)?;

    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let mut r_values = spec.r_values.clone();
    r_values.sort_unstable();
    r_values.dedup();
    let cells: Vec<(RomMethod, usize)> = methods
        .iter()
        .flat_map(|&m| r_values.iter().map(move |&r| (m, r)))
        .collect();

    let rows = parallel::map(&cells, exec, |&(method, r)| {
        let result = offline.run_cell(method, r, spec.r_n, spec.lambda);
        if let Err(e) = &result {
            log::warn!("{method} r = {r} failed: {e}");
        }
        ExperimentRow { method, r, result }
    });
    Ok(ExperimentResult {
        fom: offline.fom.clone(),
        fom_energy,
        rows,
    })
}
