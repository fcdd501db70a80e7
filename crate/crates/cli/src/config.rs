//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use phrom::bench::{ExperimentSpec, LambdaRule, LinearMsdConfig, ModelSpec, NonlinearMsdConfig};
use phrom::integrate::{NewtonConfig, TimeGrid};
use phrom::ph::InputSignal;
use phrom::rom::RomMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub time: TimeConfig,
    pub input: InputConfig,
    pub rom: RomConfig,
    pub newton: NewtonSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Uniform chain; state dimension `2·n_masses`.
    LinearMsd {
        n_masses: usize,
        mass: f64,
        stiffness: f64,
        damping: f64,
    },
    NonlinearMsd {
        n_masses: usize,
        k1: f64,
        k2: f64,
        mass: f64,
        damping: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    Constant {
        amplitude: f64,
    },
    /// `amplitude·sin(frequency·t)`, frequency in rad/s.
    Sine {
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaRuleConfig {
    pub factor: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub methods: Vec<String>,
    pub r_min: usize,
    pub r_max: usize,
    #[serde(default = "one")]
    pub r_step: usize,
    #[serde(default = "default_r_n")]
    pub r_n: usize,
    #[serde(default)]
    pub lambda_reg: Option<f64>,
    #[serde(default)]
    pub lambda_rule: Option<LambdaRuleConfig>,
    #[serde(default = "default_deim_tol")]
    pub deim_tol: f64,
    /// Reduced dimension whose energy-balance errors go to `energy.csv`.
    #[serde(default = "default_energy_r")]
    pub energy_r: usize,
}

fn one() -> usize {
    1
}
fn default_r_n() -> usize {
    8
}
fn default_deim_tol() -> f64 {
    1e-8
}
fn default_energy_r() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default)]
    pub prefix: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            prefix: String::new(),
        }
    }
}

/// Schema or value error, always naming the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("invalid config '{path}': {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("invalid value for '{field}': {reason}")]
    Value { field: &'static str, reason: String },
}

fn value_err(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        field,
        reason: reason.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(value_err(
            field,
            format!("must be positive and finite (got {v})"),
        ))
    }
}

fn finite(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(value_err(field, format!("must be finite (got {v})")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(value_err(
            field,
            format!("must be finite and non-negative (got {v})"),
        ))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_spec()?;
        self.grid()?;
        self.input_signal()?;
        self.newton_config()?;
        self.methods()?;
        self.lambda_rule()?;
        positive("rom.deim_tol", self.rom.deim_tol)?;
        if self.rom.r_step == 0 {
            return Err(value_err("rom.r_step", "must be at least 1"));
        }
        if self.rom.r_n == 0 {
            return Err(value_err("rom.r_n", "must be at least 1"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        match self.model {
            ModelConfig::LinearMsd {
                n_masses,
                mass,
                stiffness,
                damping,
            } => {
                if n_masses == 0 {
                    return Err(value_err("model.n_masses", "must be at least 1"));
                }
                Ok(ModelSpec::LinearMsd(LinearMsdConfig::uniform(
                    n_masses,
                    positive("model.mass", mass)?,
                    positive("model.stiffness", stiffness)?,
                    positive("model.damping", damping)?,
                )))
            }
            ModelConfig::NonlinearMsd {
                n_masses,
                k1,
                k2,
                mass,
                damping,
            } => {
                if n_masses == 0 {
                    return Err(value_err("model.n_masses", "must be at least 1"));
                }
                Ok(ModelSpec::NonlinearMsd(NonlinearMsdConfig {
                    n_masses,
                    k1: positive("model.k1", k1)?,
                    k2: positive("model.k2", k2)?,
                    mass: positive("model.mass", mass)?,
                    damping: positive("model.damping", damping)?,
                }))
            }
        }
    }

    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        let t = &self.time;
        let t0 = finite("time.t0", t.t0)?;
        let t_end = finite("time.t_end", t.t_end)?;
        let dt = positive("time.dt", t.dt)?;
        TimeGrid::from_step(t0, t_end, dt).map_err(|e| value_err("time", e.to_string()))
    }

    pub fn input_signal(&self) -> Result<InputSignal, ConfigError> {
        Ok(match self.input {
            InputConfig::Constant { amplitude } => {
                InputSignal::constant(1, finite("input.amplitude", amplitude)?)
            }
            InputConfig::Sine {
                amplitude,
                frequency,
            } => InputSignal::sine(
                1,
                finite("input.amplitude", amplitude)?,
                finite("input.frequency", frequency)?,
            ),
        })
    }

    pub fn newton_config(&self) -> Result<NewtonConfig, ConfigError> {
        positive("newton.tol", self.newton.tol)?;
        NewtonConfig::new(self.newton.tol, self.newton.max_iter)
            .map_err(|e| value_err("newton", e.to_string()))
    }

    pub fn methods(&self) -> Result<Vec<RomMethod>, ConfigError> {
        self.rom
            .methods
            .iter()
            .map(|m| {
                m.parse()
                    .map_err(|e: phrom::Error| value_err("rom.methods", e.to_string()))
            })
            .collect()
    }

    pub fn r_values(&self) -> Vec<usize> {
        if self.rom.r_max < self.rom.r_min {
            return Vec::new();
        }
        (self.rom.r_min..=self.rom.r_max)
            .step_by(self.rom.r_step.max(1))
            .collect()
    }

    pub fn lambda_rule(&self) -> Result<LambdaRule, ConfigError> {
        match (&self.rom.lambda_reg, &self.rom.lambda_rule) {
            (Some(_), Some(_)) => Err(value_err(
                "rom.lambda_reg",
                "give either lambda_reg or lambda_rule, not both",
            )),
            (Some(l), None) => Ok(LambdaRule::Fixed(non_negative("rom.lambda_reg", *l)?)),
            (None, Some(rule)) => Ok(LambdaRule::ProjectionScaled {
                factor: positive("rom.lambda_rule.factor", rule.factor)?,
                floor: non_negative("rom.lambda_rule.floor", rule.floor)?,
            }),
            (None, None) => {
                if self
                    .rom
                    .methods
                    .iter()
                    .any(|m| m.parse::<RomMethod>() == Ok(RomMethod::GmgQm))
                {
                    Err(value_err(
                        "rom.lambda_reg",
                        "GMG-QM needs lambda_reg or lambda_rule",
                    ))
                } else {
                    Ok(LambdaRule::Fixed(0.0))
                }
            }
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, ConfigError> {
        Ok(ExperimentSpec {
            model: self.model_spec()?,
            grid: self.grid()?,
            input: self.input_signal()?,
            methods: self.methods()?,
            r_values: self.r_values(),
            r_n: self.rom.r_n,
            lambda: self.lambda_rule()?,
            deim_tol: self.rom.deim_tol,
            newton: self.newton_config()?,
        })
    }
}
