//! Sensitivity to the initial variance curve in the rough-volatility model.
//! The weight integrates against the factor `W_bar` orthogonal to the price noise.

use rayon::prelude::*;

use super::{payoff_values, Estimate, WeightTrack, WeightedSamples};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Result};
use crate::model::{PayoffSpec, RoughVolModel};
use crate::path::PathBatch;

/// `pi = rho_bar^{-1} sum_j xi(V_j) h*_j dW_bar_j` per path.
pub fn rough_vol_weight(batch: &PathBatch, model: &RoughVolModel, hstar_cells: &[f64]) -> Result<WeightTrack> {
    let n = batch.grid().steps();
    if hstar_cells.len() != n || batch.state_dim() != 2 || batch.noise_dim() != 2 {
        return invalid("batch is not a rough-volatility batch matching the direction");
    }
    let inv = 1.0 / model.rho_bar();
    let coeffs = &model.variance.coeffs;
    let weights = (0..batch.n_paths())
        .into_par_iter()
        .map_init(
            || [0.0],
            |buf, p| {
                let mut acc = 0.0;
                for j in 0..n {
                    if hstar_cells[j] == 0.0 {
                        continue;
                    }
                    coeffs.xi_apply(&batch.state(p, j)[1..2], &hstar_cells[j..j + 1], buf);
                    acc += buf[0] * batch.increment(p, j)[0];
                }
                inv * acc
            },
        )
        .collect();
    Ok(WeightTrack { weights })
}

pub fn rough_vol_samples(
    batch: &PathBatch,
    model: &RoughVolModel,
    payoff: &PayoffSpec,
    hstar_cells: &[f64],
) -> Result<WeightedSamples> {
    let w = rough_vol_weight(batch, model, hstar_cells)?;
    Ok(WeightedSamples {
        phi: payoff_values(payoff, batch),
        weight: w.weights,
    })
}

pub fn estimate_rough_vol_greek(
    batch: &PathBatch,
    model: &RoughVolModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    control_variate: bool,
) -> Result<Estimate> {
    let h = dir.preimage_cell_averages(&model.variance.kernel_sigma, batch.grid())?;
    let s = rough_vol_samples(batch, model, payoff, &h)?;
    Ok(s.estimate("rough_vol", batch.seed().master_seed, control_variate))
}
