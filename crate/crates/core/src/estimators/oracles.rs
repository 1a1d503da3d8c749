//! Reference values: central finite differences with common random numbers,
//! and the chain rule along the tangent process.

use rayon::prelude::*;

use super::{payoff_of, Estimate};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::model::{Model, PayoffSpec, SveModel};
use crate::path::{simulate_rough_vol_with_curve, simulate_tangent, simulate_with_curve, PathBatch, TangentBatch};
use crate::rng::SeedSpec;

fn simulate_curve(model: &Model, curve: &GridFunction, first: usize, count: usize, seed: SeedSpec) -> Result<PathBatch> {
    match model {
        Model::Sve(m) => simulate_with_curve(m, curve, first, count, seed),
        Model::RoughVol(m) => simulate_rough_vol_with_curve(m, curve, first, count, seed),
    }
}

/// The direction on the grid nodes; bumps need finite values.
pub fn bump_direction(model: &Model, dir: &DirectionSpec, grid: &TimeGrid) -> Result<GridFunction> {
    let h = dir.values(&model.curve_model().kernel_sigma, grid)?;
    if h.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Inadmissible(
            "finite-difference bumps need a direction that is finite on the grid".into(),
        ));
    }
    Ok(h)
}

fn bumped(model: &Model, h: &GridFunction, eps: f64) -> Result<GridFunction> {
    let base = model.curve_model().initial.on_grid(h.grid());
    let v = base.values().iter().zip(h.values()).map(|(x, y)| x + eps * y).collect();
    GridFunction::new(*h.grid(), h.dim(), v)
}

#[allow(clippy::too_many_arguments)]
fn fd_samples_seeded(
    model: &Model,
    payoff: &PayoffSpec,
    h: &GridFunction,
    eps: f64,
    first: usize,
    count: usize,
    seed_plus: SeedSpec,
    seed_minus: SeedSpec,
) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("epsilon must be positive, got {eps}"));
    }
    let up = simulate_curve(model, &bumped(model, h, eps)?, first, count, seed_plus)?;
    let down = simulate_curve(model, &bumped(model, h, -eps)?, first, count, seed_minus)?;
    Ok((0..count)
        .into_par_iter()
        .map(|p| (payoff_of(payoff, &up, p) - payoff_of(payoff, &down, p)) / (2.0 * eps))
        .collect())
}

/// Per-path central differences for paths `first..first + count`, both sides
/// driven by the same streams.
pub fn fd_samples(
    model: &Model,
    payoff: &PayoffSpec,
    h: &GridFunction,
    eps: f64,
    first: usize,
    count: usize,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    fd_samples_seeded(model, payoff, h, eps, first, count, seed, seed)
}

/// `(Phi(x + eps h) - Phi(x - eps h)) / (2 eps)` with common random numbers.
pub fn fd_oracle(
    model: &Model,
    grid: &TimeGrid,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    eps: f64,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<Estimate> {
    let h = bump_direction(model, dir, grid)?;
    let s = fd_samples(model, payoff, &h, eps, 0, n_paths, seed)?;
    Ok(Estimate::from_samples("fd", &s, seed.master_seed).with_extra("epsilon", eps))
}

/// The same difference with independent streams on the two sides; its
/// variance grows like `eps^-2` and it exists only as a comparison.
#[allow(clippy::too_many_arguments)]
pub fn fd_oracle_uncoupled(
    model: &Model,
    grid: &TimeGrid,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    eps: f64,
    n_paths: usize,
    seed: SeedSpec,
    other_seed: SeedSpec,
) -> Result<Estimate> {
    let h = bump_direction(model, dir, grid)?;
    let s = fd_samples_seeded(model, payoff, &h, eps, 0, n_paths, seed, other_seed)?;
    Ok(Estimate::from_samples("fd", &s, seed.master_seed).with_extra("epsilon", eps))
}

/// `D phi(X)(Y^h)` per path.
pub fn chain_rule_samples(batch: &PathBatch, tangent: &TangentBatch, payoff: &PayoffSpec) -> Result<Vec<f64>> {
    if tangent.n_paths() != batch.n_paths() || tangent.first_path() != batch.first_path() {
        return invalid("tangent batch is not aligned with the path batch");
    }
    if !payoff.has_gradient() {
        return Err(Error::MissingDerivative(format!("payoff {payoff:?} has no gradient")));
    }
    (0..batch.n_paths())
        .into_par_iter()
        .map(|p| {
            let v = if payoff.is_state() {
                payoff
                    .gradient_state(batch.terminal(p)[0])
                    .map(|g| g * tangent.terminal(p)[0])
            } else {
                payoff.derivative_path(&batch.coordinate_path(p, 0), &tangent.coordinate_path(p, 0))
            };
            v.ok_or_else(|| Error::MissingDerivative(format!("payoff {payoff:?} has no gradient")))
        })
        .collect()
}

pub fn chain_rule_oracle(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
) -> Result<Estimate> {
    let tangent = simulate_tangent(batch, model, dir)?;
    let s = chain_rule_samples(batch, &tangent, payoff)?;
    Ok(Estimate::from_samples("chain_rule", &s, batch.seed().master_seed))
}
