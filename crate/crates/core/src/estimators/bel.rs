//! Bismut-Elworthy-Li weights for Cameron-Martin directions.

use rayon::prelude::*;

use super::{ito_sum, payoff_values, Estimate, WeightTrack, WeightedSamples};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Result};
use crate::model::{PayoffSpec, SveModel};
use crate::path::PathBatch;

/// `pi = sum_j <xi(X_j) h*_j, dW_j>` per path, with `hstar_cells` the exact
/// cell averages of the preimage (`n * d`, cell-major).
pub fn bel_weight(batch: &PathBatch, model: &SveModel, hstar_cells: &[f64]) -> Result<WeightTrack> {
    let n = batch.grid().steps();
    if hstar_cells.len() != n * model.dim() || batch.state_dim() != model.dim() {
        return invalid("preimage cells do not match the batch");
    }
    let m = model.noise_dim();
    let weights = (0..batch.n_paths())
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, p| ito_sum(&model.coeffs, batch, p, hstar_cells, 0, 0, buf),
        )
        .collect();
    Ok(WeightTrack { weights })
}

/// Payoffs and BEL weights for one batch of paths.
pub fn bel_samples(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    hstar_cells: &[f64],
) -> Result<WeightedSamples> {
    let w = bel_weight(batch, model, hstar_cells)?;
    Ok(WeightedSamples {
        phi: payoff_values(payoff, batch),
        weight: w.weights,
    })
}

/// `D Phi(x)(h) ~ mean(phi(X) pi)`.
pub fn estimate_bel(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    control_variate: bool,
) -> Result<Estimate> {
    let hstar = dir.preimage_cell_averages(&model.kernel_sigma, batch.grid())?;
    let s = bel_samples(batch, model, payoff, &hstar)?;
    Ok(s.estimate("bel", batch.seed().master_seed, control_variate))
}
