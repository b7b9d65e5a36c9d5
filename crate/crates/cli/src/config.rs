//! Experiment configuration: JSON schema, parsing and validation.

use std::path::{Path, PathBuf};

use qvix_core::extremal::Extremal;
use qvix_core::obstacle::{ObstacleMapHandle, PlateauParams};
use qvix_core::sensitivity::{DEFAULT_S_LIST, MIN_FD_STEP};
use qvix_core::{
    BoundaryCondition, DualElement, EllipticOperator, GScalar, Grid, InverseEllipticMap,
    NodalFunction, PlateauMap, ThermoformingMap,
};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// A validation failure tied to the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub grid: GridConfig,
    pub operator: OperatorConfig,
    pub map: MapConfig,
    pub forcing: NodalExpr,
    #[serde(default)]
    pub direction: DirectionConfig,
    pub run: RunMode,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_nodes: usize,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub c: f64,
    pub bc: BoundaryCondition,
}

/// Obstacle map parameters, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Plateau {
        levels: Vec<f64>,
        eps: f64,
    },
    InverseElliptic {
        c: f64,
        bc: BoundaryCondition,
        g: GScalar,
    },
    Thermoforming {
        k: f64,
        max_heat: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        mould: NodalExpr,
    },
}

fn default_gamma() -> f64 {
    0.1
}

impl MapConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            MapConfig::Plateau { .. } => "plateau",
            MapConfig::InverseElliptic { .. } => "inverse_elliptic",
            MapConfig::Thermoforming { .. } => "thermoforming",
        }
    }
}

/// A function given by a closed-form expression in the node coordinate `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodalExpr {
    Constant(f64),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Constant {
        value: f64,
    },
    /// `Σ coeffs[k] x^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `offset + amplitude · sin(frequency · x + phase)`.
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl NodalExpr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            NodalExpr::Constant(v) | NodalExpr::Expr(Expr::Constant { value: v }) => *v,
            NodalExpr::Expr(Expr::Polynomial { coeffs }) => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            NodalExpr::Expr(Expr::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            }) => offset + amplitude * (frequency * x + phase).sin(),
        }
    }

    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&x| self.eval(x)).collect()
    }

    fn check(&self, path: &str) -> Result<(), ConfigError> {
        let finite = match self {
            NodalExpr::Constant(v) | NodalExpr::Expr(Expr::Constant { value: v }) => v.is_finite(),
            NodalExpr::Expr(Expr::Polynomial { coeffs }) => {
                !coeffs.is_empty() && coeffs.iter().all(|c| c.is_finite())
            }
            NodalExpr::Expr(Expr::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            }) => [offset, amplitude, frequency, phase].iter().all(|v| v.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(ConfigError::new(path, "expression parameters must be finite"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Nonnegative,
    Nonpositive,
}

impl Sign {
    /// The extremal map whose derivative this sign allows.
    pub fn extremal(self) -> Extremal {
        match self {
            Sign::Nonnegative => Extremal::Min,
            Sign::Nonpositive => Extremal::Max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub sign: Sign,
    pub value: NodalExpr,
}

impl Default for DirectionConfig {
    fn default() -> Self {
        Self {
            sign: Sign::Nonnegative,
            value: NodalExpr::Constant(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Min,
    Max,
    Both,
}

impl RunMode {
    pub fn extremals(self) -> Vec<Extremal> {
        match self {
            RunMode::Min => vec![Extremal::Min],
            RunMode::Max => vec![Extremal::Max],
            RunMode::Both => vec![Extremal::Min, Extremal::Max],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub enabled: bool,
    #[serde(default = "default_s_list")]
    pub s_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_tol: Option<f64>,
}

fn default_s_list() -> Vec<f64> {
    DEFAULT_S_LIST.to_vec()
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            s_list: default_s_list(),
            fd_tol: None,
        }
    }
}

/// Everything needed to run the pipelines, built from a validated config.
pub struct Problem {
    pub grid: Grid,
    pub op: EllipticOperator,
    pub map: ObstacleMapHandle,
    pub forcing: DualElement,
    pub direction: DualElement,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(
                if path.is_empty() || path == "." { "<root>".into() } else { path },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The extremal map whose sensitivity is computed, if enabled.
    pub fn sensitivity_target(&self) -> Option<Extremal> {
        self.sensitivity
            .enabled
            .then(|| self.direction.sign.extremal())
    }

    /// Checks every field and builds the problem data.
    pub fn validate(&self) -> Result<Problem, ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::new(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        let [a, b] = self.grid.interval;
        let grid = Grid::new(self.grid.n_nodes, a, b).map_err(|e| {
            let field = if self.grid.n_nodes < 2 {
                "grid.n_nodes"
            } else {
                "grid.interval"
            };
            ConfigError::new(field, e.to_string())
        })?;
        let op = EllipticOperator::assemble(grid, self.operator.c, self.operator.bc)
            .map_err(|e| ConfigError::new("operator", e.to_string()))?;

        let map = match &self.map {
            MapConfig::Plateau { levels, eps } => ObstacleMapHandle::Plateau(
                PlateauMap::new(PlateauParams {
                    levels: levels.clone(),
                    eps: *eps,
                })
                .map_err(|e| ConfigError::new("map", e.to_string()))?,
            ),
            MapConfig::InverseElliptic { c, bc, g } => {
                let l = EllipticOperator::assemble(grid, *c, *bc)
                    .map_err(|e| ConfigError::new("map", e.to_string()))?;
                if !l.is_m_matrix() {
                    return Err(ConfigError::new("map", "operator is not an M-matrix"));
                }
                ObstacleMapHandle::InverseElliptic(
                    InverseEllipticMap::new(l, *g)
                        .map_err(|e| ConfigError::new("map.g", e.to_string()))?,
                )
            }
            MapConfig::Thermoforming {
                k,
                max_heat,
                gamma,
                mould,
            } => {
                mould.check("map.mould")?;
                let mould = NodalFunction::new(grid, mould.values(&grid))
                    .map_err(|e| ConfigError::new("map.mould", e.to_string()))?;
                ObstacleMapHandle::Thermoforming(
                    ThermoformingMap::new(*k, *max_heat, *gamma, mould)
                        .map_err(|e| ConfigError::new("map", e.to_string()))?,
                )
            }
        };

        self.forcing.check("forcing")?;
        let forcing = DualElement::new(grid, self.forcing.values(&grid))
            .map_err(|e| ConfigError::new("forcing", e.to_string()))?;

        self.direction.value.check("direction.value")?;
        let direction = DualElement::new(grid, self.direction.value.values(&grid))
            .map_err(|e| ConfigError::new("direction.value", e.to_string()))?;
        let sign_ok = match self.direction.sign {
            Sign::Nonnegative => direction.is_nonnegative(),
            Sign::Nonpositive => direction.is_nonpositive(),
        };
        if !sign_ok {
            return Err(ConfigError::new(
                "direction.value",
                format!(
                    "values do not match the declared sign {:?}",
                    self.direction.sign
                ),
            ));
        }

        if self.sensitivity.enabled {
            let target = self.direction.sign.extremal();
            if !self.run.extremals().contains(&target) {
                return Err(ConfigError::new(
                    "direction.sign",
                    format!(
                        "a {:?} direction differentiates the {} solution, which run mode {:?} does not compute",
                        self.direction.sign,
                        target.label(),
                        self.run
                    ),
                ));
            }
            let s = &self.sensitivity.s_list;
            if s.is_empty() {
                return Err(ConfigError::new("sensitivity.s_list", "must not be empty"));
            }
            if s.iter().any(|v| !(v.is_finite() && *v >= MIN_FD_STEP)) {
                return Err(ConfigError::new(
                    "sensitivity.s_list",
                    format!("steps must be finite and at least {MIN_FD_STEP}"),
                ));
            }
            if s.windows(2).any(|w| w[1] >= w[0]) {
                return Err(ConfigError::new(
                    "sensitivity.s_list",
                    "steps must be strictly decreasing",
                ));
            }
            if let Some(tol) = self.sensitivity.fd_tol {
                if !(tol.is_finite() && tol > 0.0) {
                    return Err(ConfigError::new("sensitivity.fd_tol", "must be positive"));
                }
            }
        }

        Ok(Problem {
            grid,
            op,
            map,
            forcing,
            direction,
        })
    }
}
