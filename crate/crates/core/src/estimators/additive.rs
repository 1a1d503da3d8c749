//! Integration by parts for additive noise along square-integrable directions.
//!
//! With `sigma = sigma0` constant and `K_b = K_sigma = K`, the weight is
//! `sum_j <eta_j, dW_j>` with
//! `eta_j = sigma0^{-1} [grad b(X_j) (h_j - A_j h(T)) + a_j h(T)]`,
//! `a = u / int K(T, r) u_r dr` and `A_j = int_{t0}^{t_j} K(t_j, r) a_r dr`.

use rayon::prelude::*;

use super::{payoff_values, Estimate, WeightTrack, WeightedSamples};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::KernelSpec;
use crate::model::{PayoffSpec, ScalarMap, SveModel};
use crate::path::PathBatch;

/// Cell values of `u` at cell midpoints in shifted time; `u = 1` by default.
pub fn u_cells(grid: &TimeGrid, u: Option<&ScalarMap>) -> Vec<f64> {
    let dt = grid.dt();
    (0..grid.steps())
        .map(|j| u.map_or(1.0, |u| u.eval((j as f64 + 0.5) * dt)))
        .collect()
}

/// Discrete `int_{t0}^T K(T, r) u_r dr` with exact kernel cell masses.
pub fn normalisation(kernel: &KernelSpec, grid: &TimeGrid, u: Option<&ScalarMap>) -> Result<f64> {
    let n = grid.steps();
    let w = kernel.lag_weights(grid);
    let uc = u_cells(grid, u);
    let z: f64 = (0..n).map(|j| w[n - j] * uc[j]).sum::<f64>() * grid.dt();
    if !z.is_finite() || z == 0.0 {
        return invalid("the normalising integral of u against K(T, .) vanishes");
    }
    Ok(z)
}

/// Cell values `a_j` and node values `A_j` for `j < n`.
pub fn a_function(kernel: &KernelSpec, grid: &TimeGrid, u: Option<&ScalarMap>) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = normalisation(kernel, grid, u)?;
    let n = grid.steps();
    let dt = grid.dt();
    let w = kernel.lag_weights(grid);
    let a: Vec<f64> = u_cells(grid, u).into_iter().map(|v| v / z).collect();
    let big_a = (0..n)
        .map(|j| (0..j).map(|i| w[j - i] * a[i]).sum::<f64>() * dt)
        .collect();
    Ok((a, big_a))
}

fn check_model(model: &SveModel) -> Result<Vec<f64>> {
    let sigma = model.coeffs.constant_sigma().ok_or_else(|| {
        Error::Inadmissible("the additive-noise formula needs a constant diffusion".into())
    })?;
    if !model.kernels_coincide() {
        return Err(Error::Inadmissible(
            "the additive-noise formula needs K_b = K_sigma".into(),
        ));
    }
    Ok(sigma)
}

/// Per-path additive-noise weights for a direction with cell averages
/// `h_cells` (`n * d`) and terminal value `h_terminal`.
pub fn additive_weight(
    batch: &PathBatch,
    model: &SveModel,
    h_cells: &[f64],
    h_terminal: &[f64],
    u: Option<&ScalarMap>,
) -> Result<WeightTrack> {
    check_model(model)?;
    let grid = *batch.grid();
    let (n, d, m) = (grid.steps(), model.dim(), model.noise_dim());
    if h_cells.len() != n * d || h_terminal.len() != d || batch.state_dim() != d {
        return invalid("direction does not match the batch");
    }
    let (a, big_a) = a_function(&model.kernel_sigma, &grid, u)?;
    let coeffs = &model.coeffs;
    let weights = (0..batch.n_paths())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d], vec![0.0; m]),
            |(v, jv, eta), p| {
                let mut acc = 0.0;
                for j in 0..n {
                    let x = batch.state(p, j);
                    for c in 0..d {
                        v[c] = h_cells[j * d + c] - big_a[j] * h_terminal[c];
                    }
                    coeffs.drift_jacobian_apply(x, v, jv);
                    for c in 0..d {
                        jv[c] += a[j] * h_terminal[c];
                    }
                    coeffs.xi_apply(x, jv, eta);
                    acc += eta.iter().zip(batch.increment(p, j)).map(|(e, w)| e * w).sum::<f64>();
                }
                acc
            },
        )
        .collect();
    Ok(WeightTrack { weights })
}

/// Payoffs and additive-noise weights for one batch.
pub fn additive_samples(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    u: Option<&ScalarMap>,
) -> Result<WeightedSamples> {
    if !payoff.is_state() {
        return Err(Error::Inadmissible(
            "the additive-noise formula needs a state payoff".into(),
        ));
    }
    let grid = batch.grid();
    let h = dir.cell_averages(&model.kernel_sigma, grid)?;
    let ht = dir.terminal(&model.kernel_sigma, grid)?;
    let w = additive_weight(batch, model, &h, &ht, u)?;
    Ok(WeightedSamples {
        phi: payoff_values(payoff, batch),
        weight: w.weights,
    })
}

pub fn estimate_additive(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    u: Option<&ScalarMap>,
) -> Result<Estimate> {
    let s = additive_samples(batch, model, payoff, dir, u)?;
    Ok(s.estimate("additive", batch.seed().master_seed, false))
}
