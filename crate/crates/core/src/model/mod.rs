//! Declarative model definitions: coefficients, kernels, initial curves,
//! payoffs, the rough-volatility extension and experiment configuration.

pub mod catalog;
pub mod coeffs;
pub mod config;
pub mod payoff;
pub mod validate;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::kernel::KernelSpec;

pub use catalog::{builtin, builtin_models, BuiltinModel, BuiltinOverrides};
pub use coeffs::{CoefficientBounds, CoefficientSet, Diffusion, ScalarMap};
pub use config::{
    DirectionConfig, EstimatorConfig, ExperimentConfig, GridConfig, ModelConfig, StudyConfig, TrackVariant,
};
pub use payoff::PayoffSpec;
pub use validate::validate_config;

/// Deterministic initial curve `x(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCurve {
    Constant { value: Vec<f64> },
    /// `intercept + slope (t - t0)`
    Linear { intercept: Vec<f64>, slope: Vec<f64> },
}

impl InitialCurve {
    pub fn dim(&self) -> usize {
        match self {
            InitialCurve::Constant { value } => value.len(),
            InitialCurve::Linear { intercept, .. } => intercept.len(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let ok = match self {
            InitialCurve::Constant { value } => value.len() == d,
            InitialCurve::Linear { intercept, slope } => intercept.len() == d && slope.len() == d,
        };
        if !ok {
            return invalid(format!("initial curve must have dimension {d}"));
        }
        Ok(())
    }

    pub fn on_grid(&self, grid: &TimeGrid) -> GridFunction {
        let d = self.dim();
        let mut values = Vec::with_capacity((grid.steps() + 1) * d);
        for t in grid.nodes() {
            match self {
                InitialCurve::Constant { value } => values.extend_from_slice(value),
                InitialCurve::Linear { intercept, slope } => values.extend(
                    intercept
                        .iter()
                        .zip(slope)
                        .map(|(a, b)| a + b * (t - grid.t0())),
                ),
            }
        }
        GridFunction::new(*grid, d, values).expect("shape matches by construction")
    }
}

/// `X_t = x(t) + int K_b(t,s) b(X_s) ds + int K_sigma(t,s) sigma(X_s) dW_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SveModel {
    pub name: String,
    pub coeffs: CoefficientSet,
    pub kernel_b: KernelSpec,
    pub kernel_sigma: KernelSpec,
    pub initial: InitialCurve,
}

impl SveModel {
    pub fn validate(&self) -> Result<()> {
        self.kernel_b.validate()?;
        self.kernel_sigma.validate()?;
        self.initial.validate(self.coeffs.dim())
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coeffs.noise_dim()
    }

    /// Roughness exponent of the diffusion kernel.
    pub fn hurst(&self) -> Option<f64> {
        self.kernel_sigma.hurst()
    }

    pub fn kernels_coincide(&self) -> bool {
        self.kernel_b == self.kernel_sigma
    }
}

/// Log-price `X` driven by `W` with volatility `zeta(V)`; variance factor `V`
/// driven by `B = rho_bar W_bar + rho W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughVolModel {
    pub name: String,
    pub variance: SveModel,
    pub zeta: ScalarMap,
    pub rho: f64,
}

impl RoughVolModel {
    pub fn validate(&self) -> Result<()> {
        self.variance.validate()?;
        if self.variance.dim() != 1 {
            return invalid("the rough-volatility factor must be one-dimensional");
        }
        if !(self.rho.abs() <= 1.0) {
            return invalid(format!("correlation must lie in [-1, 1], got {}", self.rho));
        }
        Ok(())
    }

    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Sve(SveModel),
    RoughVol(RoughVolModel),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Sve(m) => &m.name,
            Model::RoughVol(m) => &m.name,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Sve(m) => m.validate(),
            Model::RoughVol(m) => m.validate(),
        }
    }

    /// The process whose initial curve is perturbed.
    pub fn curve_model(&self) -> &SveModel {
        match self {
            Model::Sve(m) => m,
            Model::RoughVol(m) => &m.variance,
        }
    }

    /// Stable 64-bit digest of the model definition.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_of(self)
    }
}

pub(crate) fn fingerprint_of<T: Serialize>(value: &T) -> u64 {
    let json = serde_json::to_vec(value).expect("model types serialise");
    let digest = Sha256::digest(&json);
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
