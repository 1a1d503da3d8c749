//! Named, documented model instances.

use serde::{Deserialize, Serialize};

use super::coeffs::{CoefficientSet, ScalarMap};
use super::{InitialCurve, Model, RoughVolModel, SveModel};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

pub struct BuiltinModel {
    pub name: &'static str,
    pub description: &'static str,
    pub model: Model,
}

/// Parameters a configuration may change on a builtin model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCurve>,
    /// Mean-reversion speed of "additive-ou".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Diffusion level of "gaussian" and "additive-ou".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    /// Price/variance correlation of "rough-vol-1d".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Volatility map of "rough-vol-1d".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<ScalarMap>,
}

pub const BUILTIN_NAMES: [&str; 4] = ["gaussian", "tanh-drift", "additive-ou", "rough-vol-1d"];

fn zero_curve() -> InitialCurve {
    InitialCurve::Constant { value: vec![0.0] }
}

fn power_law_pair(hurst: f64) -> Result<(KernelSpec, KernelSpec)> {
    let k = KernelSpec::power_law(hurst)?;
    Ok((k, k))
}

/// Builds a builtin model with overrides applied.
pub fn builtin(name: &str, o: &BuiltinOverrides) -> Result<Model> {
    let unused = |field: &str, present: bool| -> Result<()> {
        if present {
            Err(Error::Config(format!("model \"{name}\" has no parameter `{field}`")))
        } else {
            Ok(())
        }
    };
    let model = match name {
        "gaussian" => {
            unused("kappa", o.kappa.is_some())?;
            unused("rho", o.rho.is_some())?;
            unused("zeta", o.zeta.is_some())?;
            let (kb, ks) = power_law_pair(o.hurst.unwrap_or(0.25))?;
            Model::Sve(SveModel {
                name: name.into(),
                coeffs: CoefficientSet::scalar(
                    ScalarMap::constant(0.0),
                    ScalarMap::constant(o.sigma0.unwrap_or(1.0)),
                )?,
                kernel_b: kb,
                kernel_sigma: ks,
                initial: o.initial.clone().unwrap_or_else(zero_curve),
            })
        }
        "tanh-drift" => {
            unused("kappa", o.kappa.is_some())?;
            unused("sigma0", o.sigma0.is_some())?;
            unused("rho", o.rho.is_some())?;
            unused("zeta", o.zeta.is_some())?;
            let (kb, ks) = power_law_pair(o.hurst.unwrap_or(0.25))?;
            Model::Sve(SveModel {
                name: name.into(),
                coeffs: CoefficientSet::scalar(
                    ScalarMap::Tanh {
                        amplitude: 0.5,
                        rate: 1.0,
                    },
                    ScalarMap::Sum {
                        terms: vec![
                            ScalarMap::constant(1.0),
                            ScalarMap::Sin {
                                amplitude: 0.3,
                                frequency: 1.0,
                            },
                        ],
                    },
                )?,
                kernel_b: kb,
                kernel_sigma: ks,
                initial: o.initial.clone().unwrap_or_else(zero_curve),
            })
        }
        "additive-ou" => {
            unused("rho", o.rho.is_some())?;
            unused("zeta", o.zeta.is_some())?;
            let (kb, ks) = power_law_pair(o.hurst.unwrap_or(0.25))?;
            Model::Sve(SveModel {
                name: name.into(),
                coeffs: CoefficientSet::scalar(
                    ScalarMap::Affine {
                        intercept: 0.0,
                        slope: -o.kappa.unwrap_or(1.0),
                    },
                    ScalarMap::constant(o.sigma0.unwrap_or(1.0)),
                )?,
                kernel_b: kb,
                kernel_sigma: ks,
                initial: o.initial.clone().unwrap_or_else(zero_curve),
            })
        }
        "rough-vol-1d" => {
            unused("kappa", o.kappa.is_some())?;
            unused("sigma0", o.sigma0.is_some())?;
            let (kb, ks) = power_law_pair(o.hurst.unwrap_or(0.1))?;
            Model::RoughVol(RoughVolModel {
                name: name.into(),
                variance: SveModel {
                    name: format!("{name}/variance"),
                    coeffs: CoefficientSet::scalar(
                        ScalarMap::Affine {
                            intercept: 0.0,
                            slope: -1.0,
                        },
                        ScalarMap::constant(1.0),
                    )?,
                    kernel_b: kb,
                    kernel_sigma: ks,
                    initial: o.initial.clone().unwrap_or_else(zero_curve),
                },
                zeta: o.zeta.clone().unwrap_or(ScalarMap::Sum {
                    terms: vec![
                        ScalarMap::constant(0.2),
                        ScalarMap::Tanh {
                            amplitude: 0.1,
                            rate: 1.0,
                        },
                    ],
                }),
                rho: o.rho.unwrap_or(-0.7),
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown builtin model \"{other}\"; expected one of {BUILTIN_NAMES:?}"
            )))
        }
    };
    model.validate()?;
    Ok(model)
}

/// All builtin models with default parameters.
pub fn builtin_models() -> Vec<BuiltinModel> {
    let describe = |name| match name {
        "gaussian" => {
            "b = 0, sigma = 1, K = (t-s)^(H-1/2), H = 0.25. X_T is Gaussian with variance \
             (T-t0)^(2H)/(2H); for phi(y) = y the derivative along h is h(T)."
        }
        "tanh-drift" => {
            "b(x) = 0.5 tanh(x), sigma(x) = 1 + 0.3 sin(x), K_b = K_sigma = K_H, H = 0.25. \
             Smooth, bounded, Lipschitz, uniformly elliptic (0.7 <= sigma <= 1.3)."
        }
        "additive-ou" => {
            "b(x) = -kappa x with kappa = 1, sigma = sigma0 = 1, K_b = K_sigma = K_H, H = 0.25. \
             Additive noise: every square-integrable direction is admissible for the \
             additive-noise weight."
        }
        _ => {
            "Log-price X with zeta(v) = 0.2 + 0.1 tanh(v) driven by W; variance factor \
             V = v + K*(-V) + K*dB with H = 0.1, B = rho_bar W_bar + rho W, rho = -0.7, v = 0."
        }
    };
    BUILTIN_NAMES
        .iter()
        .map(|&name| BuiltinModel {
            name,
            description: describe(name),
            model: builtin(name, &BuiltinOverrides::default()).expect("builtin defaults are valid"),
        })
        .collect()
}

/// `Var X_T = sigma0^2 (T - t0)^(2H) / (2H)` for the "gaussian" model.
pub fn gaussian_terminal_variance(hurst: f64, sigma0: f64, horizon: f64) -> f64 {
    sigma0 * sigma0 * horizon.powf(2.0 * hurst) / (2.0 * hurst)
}
