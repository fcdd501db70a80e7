//! Command-line front end for the phrom experiments.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phrom::bench::{energy_balance_series, run_experiment, Offline};
use phrom::embed::Embedding;
use phrom::parallel::Execution;

use crate::config::{load_config, ConfigError, ExperimentConfig};
use crate::output::{
    energy_table, errors_table, failures_table, matrix_table, trajectory_table, write_csv, Table,
    WriteError,
};

#[derive(Debug, Parser)]
#[command(
    name = "phrom",
    version,
    about = "Structure-preserving model reduction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the full-order model and write its trajectory.
    SimulateFom(Common),
    /// Run the (method, r) sweep and write error and energy tables.
    RunExperiment(Common),
    /// Write the embedding basis and reduced operators of each configured method.
    ExportEmbedding {
        #[command(flatten)]
        common: Common,
        /// Reduced dimension (defaults to rom.energy_r).
        #[arg(long)]
        r: Option<usize>,
    },
    /// Check the structural hypotheses of the configured model.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the sweep; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for the randomised self-tests of `validate`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{operation}: {source}")]
    Numerical {
        operation: &'static str,
        source: phrom::Error,
    },
    #[error(transparent)]
    Io(#[from] WriteError),
    #[error("validation failed: {0} check(s) did not pass")]
    Checks(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical { .. } | CliError::Checks(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn numerical(operation: &'static str) -> impl FnOnce(phrom::Error) -> CliError {
    move |source| CliError::Numerical { operation, source }
}

/// Parse `argv` (including the program name), run and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SimulateFom(c) => simulate_fom(&c),
        Command::RunExperiment(c) => run(&c),
        Command::ExportEmbedding { common, r } => export_embedding(&common, r),
        Command::Validate(c) => validate(&c),
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn load(c: &Common) -> Result<Loaded, CliError> {
    let cfg = load_config(&c.config)?;
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.directory.clone());
    Ok(Loaded { cfg, out })
}

impl Loaded {
    fn write(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| WriteError {
            path: self.out.clone(),
            reason: e.to_string(),
        })?;
        let path = self.out.join(format!("{}{name}", self.cfg.output.prefix));
        write_csv(table, &path)?;
        Ok(path)
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn simulate_fom(c: &Common) -> Result<(), CliError> {
    let l = load(c)?;
    let sys = l
        .cfg
        .model_spec()?
        .build()
        .map_err(numerical("building the full-order model"))?;
    let input = l.cfg.input_signal()?;
    let traj = phrom::integrate::simulate_fom(&sys, &input, l.cfg.grid()?, l.cfg.newton_config()?)
        .map_err(numerical("simulating the full-order model"))?;
    let energy: Vec<f64> = (0..traj.states.ncols())
        .map(|i| sys.hamiltonian().value(&traj.state(i)))
        .collect();
    announce(&l.write("trajectory.csv", &trajectory_table(&traj, &energy))?);
    Ok(())
}

fn run(c: &Common) -> Result<(), CliError> {
    let l = load(c)?;
    let spec = l.cfg.experiment_spec()?;
    let res = run_experiment(&spec, Execution::from_jobs(c.jobs))
        .map_err(numerical("running the experiment"))?;
    announce(&l.write("errors.csv", &errors_table(&res))?);
    announce(&l.write("energy.csv", &energy_table(&res, l.cfg.rom.energy_r))?);
    let failures = failures_table(&res);
    let failures_path = l.out.join(format!("{}failures.csv", l.cfg.output.prefix));
    if failures.rows.is_empty() {
        // a stale file from an earlier run would be misleading
        let _ = std::fs::remove_file(&failures_path);
    } else {
        eprintln!("{} sweep cell(s) failed", failures.rows.len());
        announce(&l.write("failures.csv", &failures)?);
    }
    Ok(())
}

fn export_embedding(c: &Common, r: Option<usize>) -> Result<(), CliError> {
    let l = load(c)?;
    let spec = l.cfg.experiment_spec()?;
    let r = r.unwrap_or(l.cfg.rom.energy_r);
    let offline = Offline::from_spec(&spec).map_err(numerical("preparing snapshots"))?;
    for method in spec.methods {
        let rom = offline
            .build_rom(method, r, spec.r_n, spec.lambda)
            .map_err(numerical("building a reduced model"))?;
        let stem = format!(
            "{}_r{r}",
            method.name().to_ascii_lowercase().replace('-', "_")
        );
        let s = rom
            .structure_at(rom.x0())
            .map_err(numerical("evaluating reduced operators"))?;
        let mut tables = vec![
            ("basis", matrix_table(rom.embedding().basis())),
            ("j", matrix_table(&s.j)),
            ("r", matrix_table(&s.r)),
            ("b", matrix_table(&s.b)),
        ];
        if let Embedding::Quadratic(q) = rom.embedding() {
            tables.push(("m", matrix_table(q.m())));
        }
        for (name, table) in tables {
            announce(&l.write(&format!("{stem}_{name}.csv"), &table)?);
        }
    }
    Ok(())
}

fn validate(c: &Common) -> Result<(), CliError> {
    let l = load(c)?;
    let sys = match l.cfg.model_spec()?.build() {
        Ok(s) => s,
        Err(phrom::Error::InvalidStructure(msg)) => {
            println!("FAIL structure: {msg}");
            return Err(CliError::Checks(1));
        }
        Err(e) => return Err(numerical("building the full-order model")(e)),
    };
    let report = sys
        .structure_report()
        .map_err(numerical("checking structure"))?;
    let mut failed = 0;
    for (name, pass, detail) in report.checks() {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }

    // Power balance at random states and inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let n = sys.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(sys.ports(), |_, _| rng.random_range(-1.0..1.0));
        let g = sys.hamiltonian().grad(&x);
        let scale = 1.0 + (sys.j_minus_r() * &g).norm() * g.norm() + g.norm() * u.norm();
        let res = sys
            .power_balance_residual(&x, &u)
            .map_err(numerical("power balance"))?;
        worst = worst.max(res.abs() / scale);
    }
    let pass = worst <= 1e-10;
    println!(
        "{} power_balance: max relative residual {worst:.3e} over 10 random states (seed {})",
        if pass { "PASS" } else { "FAIL" },
        c.seed
    );
    failed += usize::from(!pass);

    let input = l.cfg.input_signal()?;
    let short = phrom::integrate::TimeGrid::new(0.0, 10.0 * l.cfg.time.dt, 10)
        .map_err(numerical("grid"))?;
    let traj = phrom::integrate::simulate_fom(&sys, &input, short, l.cfg.newton_config()?)
        .map_err(numerical("short simulation"))?;
    let energy = energy_balance_series(&sys, &traj, &input).map_err(numerical("energy balance"))?;
    println!(
        "INFO energy_balance: {:.3e} after 10 steps",
        energy.last().copied().unwrap_or(0.0)
    );

    if failed > 0 {
        return Err(CliError::Checks(failed));
    }
    Ok(())
}
