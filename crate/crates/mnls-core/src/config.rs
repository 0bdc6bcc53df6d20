//! TOML run configuration.
//!
//! One file describes the grid, the model, and whichever of the solver,
//! stepper, evolution and experiment sections the subcommand needs. Missing
//! sections take the desk-scale defaults (N = 1, n = 1024, L = 40).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::StepperConfig;
use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, ExperimentSpec};
use crate::grid::GridSpec;
use crate::groundstate::{ConstraintSpec, FlowConfig, Initializer};
use crate::model::{Coupling, ModelParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    pub model: ModelSection,
    #[serde(default)]
    pub constraint: Option<ConstraintSection>,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub evolve: Option<EvolveSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub points: Vec<usize>,
    pub box_length: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            points: vec![1024],
            box_length: vec![40.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub p: f64,
    pub coupling: Vec<Vec<f64>>,
    #[serde(default)]
    pub reg_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSection {
    /// "total-mass" or "per-component".
    pub kind: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowSection {
    pub tau: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub mass_floor: f64,
    /// "sech", "gaussian" or "random".
    pub initializer: String,
    pub seed: u64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            tau: d.tau,
            max_iter: d.max_iter,
            tol: d.tol,
            mass_floor: d.mass_floor,
            initializer: "sech".into(),
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperSection {
    pub dt: f64,
    pub t_end: f64,
    pub dt_min: f64,
    pub blowup_gradient_factor: f64,
    pub tail_tolerance: f64,
    pub record_stride: usize,
}

impl Default for StepperSection {
    fn default() -> Self {
        let d = StepperConfig::default();
        Self {
            dt: d.dt,
            t_end: d.t_end,
            dt_min: d.dt_min,
            blowup_gradient_factor: d.blowup_gradient_factor,
            tail_tolerance: d.tail_tolerance,
            record_stride: d.record_stride,
        }
    }
}

/// Initial data for the `evolve` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveSection {
    /// "groundstate" computes one first; "snapshot" loads `snapshot`.
    pub initial: String,
    pub snapshot: Option<String>,
    /// Amplitude factor applied to the initial state.
    pub amplitude: f64,
    /// Mass-preserving dilation applied to the initial state.
    pub dilation: f64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            initial: "groundstate".into(),
            snapshot: None,
            amplitude: 1.0,
            dilation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    /// stability | percomponent-stability | supercritical-blowup |
    /// critical-blowup | identities | gn
    pub kind: String,
    pub epsilon: f64,
    pub threshold: f64,
    pub lambda: f64,
    pub amplitude: f64,
    pub subsystem: Vec<usize>,
    pub bc_variant: bool,
    pub r_variant: bool,
    pub random_fields: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: "identities".into(),
            epsilon: 0.01,
            threshold: 5.0,
            lambda: 1.1,
            amplitude: 1.05,
            subsystem: Vec::new(),
            bc_variant: false,
            r_variant: false,
            random_fields: 1000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn grid(&self) -> Result<Arc<GridSpec>> {
        GridSpec::new(&self.grid.points, &self.grid.box_length)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let coupling = Coupling::new(&self.model.coupling)?;
        let mut params = ModelParams::new(self.model.p, self.grid.points.len(), coupling)?;
        params.reg_eps = self.model.reg_eps;
        Ok(params)
    }

    pub fn constraint(&self) -> Result<ConstraintSpec> {
        let section = self.constraint.as_ref().ok_or_else(|| {
            Error::InvalidConstraint("missing [constraint] section".into())
        })?;
        match section.kind.as_str() {
            "total-mass" => {
                if section.values.len() != 1 {
                    return Err(Error::InvalidConstraint(
                        "total-mass takes exactly one value".into(),
                    ));
                }
                Ok(ConstraintSpec::TotalMass(section.values[0]))
            }
            "per-component" => Ok(ConstraintSpec::PerComponentMass(section.values.clone())),
            other => Err(Error::InvalidConstraint(format!(
                "unknown constraint kind '{other}'"
            ))),
        }
    }

    pub fn flow(&self) -> Result<FlowConfig> {
        let initializer = match self.flow.initializer.as_str() {
            "sech" => Initializer::SechProfile,
            "gaussian" => Initializer::Gaussian,
            "random" => Initializer::Random,
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown initializer '{other}'"
                )))
            }
        };
        Ok(FlowConfig {
            tau: self.flow.tau,
            max_iter: self.flow.max_iter,
            tol: self.flow.tol,
            mass_floor: self.flow.mass_floor,
            initializer,
            seed: self.flow.seed,
        })
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.stepper.dt,
            t_end: self.stepper.t_end,
            dt_min: self.stepper.dt_min,
            blowup_gradient_factor: self.stepper.blowup_gradient_factor,
            tail_tolerance: self.stepper.tail_tolerance,
            record_stride: self.stepper.record_stride,
        }
    }

    /// Assemble the experiment spec; the CLI may override the seed.
    pub fn experiment(&self, seed_override: Option<u64>) -> Result<ExperimentSpec> {
        let section = self.experiment.clone().unwrap_or_default();
        let seed = seed_override.unwrap_or(section.seed);
        let kind = match section.kind.as_str() {
            "stability" => ExperimentKind::Stability {
                epsilon: section.epsilon,
                threshold: section.threshold,
            },
            "percomponent-stability" => ExperimentKind::PerComponentStability {
                subsystem: section.subsystem.clone(),
                epsilon: section.epsilon,
                threshold: section.threshold,
                bc_variant: section.bc_variant,
            },
            "supercritical-blowup" => ExperimentKind::SupercriticalBlowup {
                lambda: section.lambda,
                r_variant: section.r_variant,
            },
            "critical-blowup" => ExperimentKind::CriticalBlowup {
                amplitude: section.amplitude,
            },
            "identities" => ExperimentKind::IdentitySuite {
                random_fields: section.random_fields,
            },
            "gn" => ExperimentKind::GnSuite {
                random_fields: section.random_fields,
            },
            other => {
                return Err(Error::BadExperiment(format!(
                    "unknown experiment kind '{other}'"
                )))
            }
        };
        let mut flow = self.flow()?;
        flow.seed = seed;
        Ok(ExperimentSpec {
            kind,
            grid: self.grid()?,
            params: self.params()?,
            flow,
            stepper: self.stepper(),
            seed,
        })
    }
}
