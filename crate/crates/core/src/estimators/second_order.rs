//! Second-order weights: `D^2 Phi(x)(g, h) ~ mean(phi (pi_h pi_g - sum_j xi_j^2 h*_j g*_j dt))`.

use rayon::prelude::*;

use super::{bel_weight, payoff_values, Estimate, WeightedSamples};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Result};
use crate::model::{PayoffSpec, SveModel};
use crate::path::PathBatch;

/// Payoffs and second-order weights, from cell-averaged preimages of `h` and `g`.
pub fn second_order_samples(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    hstar: &[f64],
    gstar: &[f64],
) -> Result<WeightedSamples> {
    if model.dim() != 1 || model.noise_dim() != 1 {
        return invalid("the second-order formula needs d = m = 1");
    }
    let n = batch.grid().steps();
    let dt = batch.grid().dt();
    let pi_h = bel_weight(batch, model, hstar)?.weights;
    let pi_g = bel_weight(batch, model, gstar)?.weights;
    let weight = (0..batch.n_paths())
        .into_par_iter()
        .map_init(
            || [0.0],
            |buf, p| {
                let mut corr = 0.0;
                for j in 0..n {
                    model.coeffs.xi_apply(batch.state(p, j), &[1.0], buf);
                    corr += buf[0] * buf[0] * (hstar[j] * gstar[j]);
                }
                pi_h[p] * pi_g[p] - corr * dt
            },
        )
        .collect();
    Ok(WeightedSamples {
        phi: payoff_values(payoff, batch),
        weight,
    })
}

pub fn estimate_second_order(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    h: &DirectionSpec,
    g: &DirectionSpec,
) -> Result<Estimate> {
    let grid = batch.grid();
    let hs = h.preimage_cell_averages(&model.kernel_sigma, grid)?;
    let gs = g.preimage_cell_averages(&model.kernel_sigma, grid)?;
    let s = second_order_samples(batch, model, payoff, &hs, &gs)?;
    Ok(s.estimate("second_order", batch.seed().master_seed, false))
}
