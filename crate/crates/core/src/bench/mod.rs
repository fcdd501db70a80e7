//! Mass-spring-damper benchmarks, error metrics and the experiment driver.

pub mod experiment;
pub mod metrics;
pub mod models;

pub use experiment::{
    run_experiment, sweep, ExperimentResult, ExperimentRow, ExperimentSpec, LambdaRule, ModelSpec,
    Offline,
};
pub use metrics::{
    compute_metrics, energy_balance_error, energy_balance_series, EnergyModel, MetricsReport,
};
pub use models::{
    build_linear_msd, build_nonlinear_msd, build_nonlinear_msd_original, LinearMsdConfig,
    NonlinearMsdConfig,
};
