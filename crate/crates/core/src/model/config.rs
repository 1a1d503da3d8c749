//! Experiment configuration: a TOML document with explicit path counts, seeds,
//! fractional orders and bump sizes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{builtin, BuiltinOverrides};
use super::coeffs::{CoefficientSet, ScalarMap};
use super::payoff::PayoffSpec;
use super::{InitialCurve, Model, RoughVolModel, SveModel};
use crate::direction::DirectionSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.t_end, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Builtin {
        name: String,
        #[serde(default)]
        overrides: BuiltinOverrides,
    },
    Sve {
        coefficients: CoefficientSet,
        kernel_b: KernelSpec,
        kernel_sigma: KernelSpec,
        initial: InitialCurve,
    },
    RoughVol {
        coefficients: CoefficientSet,
        kernel_b: KernelSpec,
        kernel_sigma: KernelSpec,
        initial: InitialCurve,
        zeta: ScalarMap,
        rho: f64,
    },
}

impl ModelConfig {
    pub fn builtin(name: &str) -> Self {
        ModelConfig::Builtin {
            name: name.into(),
            overrides: BuiltinOverrides::default(),
        }
    }

    pub fn build(&self) -> Result<Model> {
        let model = match self {
            ModelConfig::Builtin { name, overrides } => return builtin(name, overrides),
            ModelConfig::Sve {
                coefficients,
                kernel_b,
                kernel_sigma,
                initial,
            } => Model::Sve(SveModel {
                name: "custom".into(),
                coeffs: coefficients.clone(),
                kernel_b: *kernel_b,
                kernel_sigma: *kernel_sigma,
                initial: initial.clone(),
            }),
            ModelConfig::RoughVol {
                coefficients,
                kernel_b,
                kernel_sigma,
                initial,
                zeta,
                rho,
            } => Model::RoughVol(RoughVolModel {
                name: "custom-rough-vol".into(),
                variance: SveModel {
                    name: "custom-rough-vol/variance".into(),
                    coeffs: coefficients.clone(),
                    kernel_b: *kernel_b,
                    kernel_sigma: *kernel_sigma,
                    initial: initial.clone(),
                },
                zeta: zeta.clone(),
                rho: *rho,
            }),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Direction families, stated against the diffusion kernel of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionConfig {
    /// `A (t - t0)^(gamma - 1/2)`; `gamma = H` gives the kernel direction `K(t, t0)`.
    PowerLaw { gamma: f64, amplitude: Vec<f64> },
    Constant { level: Vec<f64> },
    /// `A (delta v (t - t0))^(gamma - 1/2)`
    TruncatedPowerLaw {
        gamma: f64,
        amplitude: Vec<f64>,
        delta: f64,
    },
}

impl DirectionConfig {
    pub fn build(&self, hurst: f64, alpha_weight: Option<f64>) -> Result<DirectionSpec> {
        match self {
            DirectionConfig::PowerLaw { gamma, amplitude } => {
                DirectionSpec::power_law(*gamma, amplitude.clone(), hurst, alpha_weight)
            }
            DirectionConfig::Constant { level } => {
                DirectionSpec::constant(level.clone(), hurst, alpha_weight)
            }
            DirectionConfig::TruncatedPowerLaw {
                gamma,
                amplitude,
                delta,
            } => DirectionSpec::truncated_power_law(
                *gamma,
                amplitude.clone(),
                *delta,
                hurst,
                alpha_weight,
            ),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            DirectionConfig::PowerLaw { gamma, .. }
            | DirectionConfig::TruncatedPowerLaw { gamma, .. } => Some(*gamma),
            DirectionConfig::Constant { .. } => None,
        }
    }

    pub fn amplitude(&self) -> &[f64] {
        match self {
            DirectionConfig::PowerLaw { amplitude, .. }
            | DirectionConfig::TruncatedPowerLaw { amplitude, .. } => amplitude,
            DirectionConfig::Constant { level } => level,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |v: &[f64]| v.iter().map(|a| a * factor).collect();
        match self {
            DirectionConfig::PowerLaw { gamma, amplitude } => DirectionConfig::PowerLaw {
                gamma: *gamma,
                amplitude: scale(amplitude),
            },
            DirectionConfig::Constant { level } => DirectionConfig::Constant {
                level: scale(level),
            },
            DirectionConfig::TruncatedPowerLaw {
                gamma,
                amplitude,
                delta,
            } => DirectionConfig::TruncatedPowerLaw {
                gamma: *gamma,
                amplitude: scale(amplitude),
                delta: *delta,
            },
        }
    }

    /// The truncation of a power-law direction at `delta`.
    pub fn truncated(&self, delta: f64) -> Result<Self> {
        match self {
            DirectionConfig::PowerLaw { gamma, amplitude } => {
                Ok(DirectionConfig::TruncatedPowerLaw {
                    gamma: *gamma,
                    amplitude: amplitude.clone(),
                    delta,
                })
            }
            _ => Err(Error::Config(
                "delta truncation needs a power-law direction".into(),
            )),
        }
    }
}

/// Which discretisation of the fractional martingale derivative is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackVariant {
    #[default]
    Increments,
    Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Bel {
        #[serde(default)]
        control_variate: bool,
    },
    Fractional {
        alpha: f64,
        inner_budget: usize,
        #[serde(default)]
        variant: TrackVariant,
    },
    FractionalSingular {
        alpha: f64,
        inner_budget: usize,
        deltas: Vec<f64>,
    },
    Additive {
        /// Shape `u` of the normalising function `a`, in shifted time; `u = 1` if absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u: Option<ScalarMap>,
    },
    SecondOrder,
    RoughVol {
        #[serde(default)]
        control_variate: bool,
    },
    Fd {
        epsilon: f64,
    },
    ChainRule,
}

impl EstimatorConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorConfig::Bel { .. } => "bel",
            EstimatorConfig::Fractional { .. } => "fractional",
            EstimatorConfig::FractionalSingular { .. } => "fractional_singular",
            EstimatorConfig::Additive { .. } => "additive",
            EstimatorConfig::SecondOrder => "second_order",
            EstimatorConfig::RoughVol { .. } => "rough_vol",
            EstimatorConfig::Fd { .. } => "fd",
            EstimatorConfig::ChainRule => "chain_rule",
        }
    }

    /// Weight used to classify the direction, if any.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            EstimatorConfig::Fractional { alpha, .. }
            | EstimatorConfig::FractionalSingular { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// `key=value` pairs joined by `;`.
    pub fn parameters(&self) -> String {
        match self {
            EstimatorConfig::Bel { control_variate } | EstimatorConfig::RoughVol { control_variate } => {
                format!("control_variate={control_variate}")
            }
            EstimatorConfig::Fractional {
                alpha,
                inner_budget,
                variant,
            } => format!("alpha={alpha};inner_budget={inner_budget};variant={variant:?}").to_lowercase(),
            EstimatorConfig::FractionalSingular {
                alpha,
                inner_budget,
                ..
            } => format!("alpha={alpha};inner_budget={inner_budget}"),
            EstimatorConfig::Additive { u } => match u {
                Some(_) => "u=custom".into(),
                None => "u=1".into(),
            },
            EstimatorConfig::Fd { epsilon } => format!("epsilon={epsilon}"),
            EstimatorConfig::SecondOrder | EstimatorConfig::ChainRule => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    /// Fractional estimate over a grid of orders.
    AlphaSweep { alphas: Vec<f64>, inner_budget: usize },
    /// Fractional estimate over horizons `T - t0`, with the log-log slope.
    MaturityScaling {
        horizons: Vec<f64>,
        alpha: f64,
        inner_budget: usize,
    },
    /// Truncated directions approaching a singular power-law direction.
    DeltaLimit {
        deltas: Vec<f64>,
        alpha: f64,
        inner_budget: usize,
    },
    /// BEL weight spread against the direction norm for scaled directions.
    VarianceProfile { scales: Vec<f64> },
    /// `E|M_t - M_t0|^2` over the first nodes of the grid, with the log-log slope.
    Regularity { inner_budget: usize, nodes: usize },
}

impl StudyConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            StudyConfig::AlphaSweep { .. } => "alpha_sweep",
            StudyConfig::MaturityScaling { .. } => "maturity_scaling",
            StudyConfig::DeltaLimit { .. } => "delta_limit",
            StudyConfig::VarianceProfile { .. } => "variance_profile",
            StudyConfig::Regularity { .. } => "regularity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub payoff: PayoffSpec,
    pub direction: DirectionConfig,
    /// Second direction `g` for the second-order estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_direction: Option<DirectionConfig>,
    #[serde(default)]
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
