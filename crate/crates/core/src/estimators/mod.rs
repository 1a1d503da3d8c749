//! Sensitivity estimators and their reference oracles.
//!
//! Every estimator reduces to per-path samples; [`Estimate`] holds their mean
//! and standard error. Per-path records can be concatenated across path
//! chunks before the final reduction, which is always a fixed-order sum.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CoefficientSet, PayoffSpec};
use crate::path::{mean_var, PathBatch};

pub mod additive;
pub mod bel;
pub mod fractional;
pub mod oracles;
pub mod rough_vol;
pub mod second_order;

pub use additive::{additive_samples, additive_weight, estimate_additive};
pub use bel::{bel_samples, bel_weight, estimate_bel};
pub use fractional::{
    cell_terms, estimate_fractional, estimate_fractional_singular, estimate_from_tracks, fractional_weights,
    singular_preimages, singular_report, FractionalOptions, NestedTracks, SingularReport, TruncationPoint,
};
pub use oracles::{
    bump_direction, chain_rule_oracle, chain_rule_samples, fd_oracle, fd_oracle_uncoupled, fd_samples,
};
pub use rough_vol::{estimate_rough_vol_greek, rough_vol_samples, rough_vol_weight};
pub use second_order::{estimate_second_order, second_order_samples};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Sample mean of the weight, when the estimator has one.
    pub weight_mean: Option<f64>,
    /// Sample variance of the weight, when the estimator has one.
    pub weight_variance: Option<f64>,
    /// Estimator-specific extras.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimator: String,
    pub value: f64,
    /// Sample standard deviation over `sqrt(n_paths)`.
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub fn from_samples(estimator: &str, samples: &[f64], seed: u64) -> Self {
        let (mean, var) = mean_var(samples);
        Self {
            estimator: estimator.to_string(),
            value: mean,
            std_error: (var / samples.len() as f64).sqrt(),
            n_paths: samples.len(),
            seed,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_weight(mut self, weights: &[f64]) -> Self {
        let (m, v) = mean_var(weights);
        self.diagnostics.weight_mean = Some(m);
        self.diagnostics.weight_variance = Some(v);
        self
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.extra.insert(key.to_string(), value);
        self
    }

    /// `|self - other| / sqrt(se_1^2 + se_2^2)`.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        (self.value - other.value).abs() / combined_se(self.std_error, other.std_error)
    }

    /// `|value - target| / std_error`.
    pub fn z_to(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }
}

pub fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Per-path Malliavin weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTrack {
    pub weights: Vec<f64>,
}

impl WeightTrack {
    pub fn mean_var(&self) -> (f64, f64) {
        mean_var(&self.weights)
    }

    /// `|mean| / SE`.
    pub fn zero_mean_z(&self) -> f64 {
        let (m, v) = self.mean_var();
        m.abs() / (v / self.weights.len() as f64).sqrt()
    }
}

/// Payoff values and weights per path; the estimate is the mean of `phi * weight`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedSamples {
    pub phi: Vec<f64>,
    pub weight: Vec<f64>,
}

impl WeightedSamples {
    pub fn extend(&mut self, other: WeightedSamples) {
        self.phi.extend(other.phi);
        self.weight.extend(other.weight);
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// With `control_variate`, the payoff is centred on its sample mean first;
    /// this is unbiased up to `O(1/N)` because the weight has mean zero.
    pub fn estimate(&self, estimator: &str, seed: u64, control_variate: bool) -> Estimate {
        let shift = if control_variate { mean_var(&self.phi).0 } else { 0.0 };
        let samples: Vec<f64> = self
            .phi
            .iter()
            .zip(&self.weight)
            .map(|(f, w)| (f - shift) * w)
            .collect();
        Estimate::from_samples(estimator, &samples, seed).with_weight(&self.weight)
    }
}

/// `phi` of local path `p`: state payoffs read `X_T`, path payoffs the first coordinate path.
pub(crate) fn payoff_of(payoff: &PayoffSpec, batch: &PathBatch, p: usize) -> f64 {
    if payoff.is_state() {
        payoff.eval_state(batch.terminal(p)[0])
    } else {
        payoff.eval_path(&batch.coordinate_path(p, 0))
    }
}

pub(crate) fn payoff_values(payoff: &PayoffSpec, batch: &PathBatch) -> Vec<f64> {
    (0..batch.n_paths())
        .into_par_iter()
        .map(|p| payoff_of(payoff, batch, p))
        .collect()
}

/// `sum_j <xi(X_j) v_j, dW_j>` for local path `p`, with `v` cell-major (`n * d`)
/// and the state read from coordinates `state_offset..state_offset + d`.
pub(crate) fn ito_sum(
    coeffs: &CoefficientSet,
    batch: &PathBatch,
    p: usize,
    v: &[f64],
    state_offset: usize,
    noise_offset: usize,
    buf: &mut [f64],
) -> f64 {
    let d = coeffs.dim();
    let m = coeffs.noise_dim();
    let n = batch.grid().steps();
    let mut acc = 0.0;
    for j in 0..n {
        let vj = &v[j * d..(j + 1) * d];
        if vj.iter().all(|x| *x == 0.0) {
            continue;
        }
        let x = &batch.state(p, j)[state_offset..state_offset + d];
        coeffs.xi_apply(x, vj, buf);
        let dw = &batch.increment(p, j)[noise_offset..noise_offset + m];
        acc += buf.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}
