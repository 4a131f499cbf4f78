use std::path::{Path, PathBuf};

use ddrhc::consistency::SystemPair;
use ddrhc::polytope::HPolytope;
use ddrhc::simulator::{Mode, NoiseMode, TruePlant};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported config schema {0} (expected {SCHEMA})")]
    Schema(u32),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub plant: PlantConfig,
    pub constraints: Constraints,
    pub training: TrainingConfig,
    #[serde(default)]
    pub invariant: InvariantConfig,
    pub simulation: SimulationConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub noise: NoiseMode,
    /// Seed of the simulation noise.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub x: SetSpec,
    pub u: SetSpec,
}

/// Either a centred ∞-ball or an explicit H-representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Box {
        #[serde(rename = "box")]
        radius: f64,
    },
    HRep {
        #[serde(rename = "F")]
        normals: Vec<Vec<f64>>,
        g: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    pub max_iter: usize,
    #[serde(default = "default_certify_samples")]
    pub certify_samples: usize,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            max_iter: ddrhc::invariant::DEFAULT_MAX_ITER,
            certify_samples: default_certify_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub x0: Vec<f64>,
    pub steps: usize,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub grace_after_uub: Option<usize>,
    #[serde(default = "default_timing")]
    pub timing: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_certify_samples() -> usize {
    100
}

fn default_timing() -> bool {
    true
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::Invalid(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl SetSpec {
    pub fn to_polytope(&self, dim: usize, what: &str) -> Result<HPolytope, ConfigError> {
        let p = match self {
            SetSpec::Box { radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(ConfigError::Invalid(format!("{what}: box radius must be positive")));
                }
                HPolytope::inf_ball(dim, *radius)
            }
            SetSpec::HRep { normals, g } => {
                let p = HPolytope::from_rows(dim, normals, g).map_err(|e| ConfigError::Invalid(format!("{what}: {e}")))?;
                if p.dim() != dim {
                    return Err(ConfigError::Invalid(format!("{what}: expected dimension {dim}")));
                }
                p
            }
        };
        if !p.is_gauge_carrier() {
            return Err(ConfigError::Invalid(format!("{what} must contain the origin in its interior")));
        }
        Ok(p)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA {
            return Err(ConfigError::Schema(self.schema));
        }
        let system = self.system()?;
        let n = system.state_dim();
        self.plant()?;
        self.state_set()?;
        self.input_set()?;
        if self.simulation.x0.len() != n {
            return Err(ConfigError::Invalid(format!("x0 has length {}, expected {n}", self.simulation.x0.len())));
        }
        if self.simulation.modes.is_empty() {
            return Err(ConfigError::Invalid("no simulation modes requested".into()));
        }
        if self.training.samples == 0 {
            return Err(ConfigError::Invalid("training.samples must be positive".into()));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemPair, ConfigError> {
        let a = matrix(&self.plant.a, "plant.a")?;
        let b = matrix(&self.plant.b, "plant.b")?;
        SystemPair::new(a, b).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn plant(&self) -> Result<TruePlant, ConfigError> {
        TruePlant::new(self.system()?, self.plant.epsilon, self.plant.noise.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn state_dim(&self) -> usize {
        self.plant.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.b.first().map_or(0, Vec::len)
    }

    pub fn state_set(&self) -> Result<HPolytope, ConfigError> {
        self.constraints.x.to_polytope(self.state_dim(), "constraints.x")
    }

    pub fn input_set(&self) -> Result<HPolytope, ConfigError> {
        self.constraints.u.to_polytope(self.input_dim(), "constraints.u")
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.simulation.x0)
    }
}
