//! Two-factor rough-volatility scheme: the variance factor `V` follows the
//! Euler-Volterra scheme driven by `dB = rho_bar dW_bar + rho dW`, and the
//! log-price is the discrete exponential martingale
//! `X_{j+1} = X_j + zeta(V_j) dW_j - zeta(V_j)^2 dt / 2`.
//!
//! States are stored as `(X, V)` and increments as `(dW_bar, dW)`.

use rayon::prelude::*;

use super::{fill_increments, run_scheme, PathBatch, Scheme, Work};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::model::RoughVolModel;
use crate::rng::{Purpose, SeedSpec};

pub fn simulate_rough_vol(
    model: &RoughVolModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<PathBatch> {
    let curve = model.variance.initial.on_grid(grid);
    simulate_rough_vol_with_curve(model, &curve, 0, n_paths, seed)
}

/// Paths `first..first + count` from an explicit variance curve.
pub fn simulate_rough_vol_with_curve(
    model: &RoughVolModel,
    curve: &GridFunction,
    first: usize,
    count: usize,
    seed: SeedSpec,
) -> Result<PathBatch> {
    model.validate()?;
    if curve.dim() != 1 {
        return invalid("the variance curve must be scalar");
    }
    if count == 0 {
        return invalid("a batch needs at least one path");
    }
    let grid = *curve.grid();
    let n = grid.steps();
    let dt = grid.dt();
    let scheme = Scheme::new(&model.variance, &grid);
    let (rho, rho_bar) = (model.rho, model.rho_bar());
    let mut x = vec![0.0; count * (n + 1) * 2];
    let mut dw = vec![0.0; count * n * 2];
    let failures: Vec<Option<(usize, usize)>> = x
        .par_chunks_mut((n + 1) * 2)
        .zip(dw.par_chunks_mut(n * 2))
        .enumerate()
        .map_init(
            || (Work::new(n, 1), vec![0.0; n], vec![0.0; n + 1]),
            |(work, db, v), (p, (xp, dwp))| {
                let global = first + p;
                let mut stream = seed.stream(Purpose::Paths, global as u64, 0);
                fill_increments(&mut stream, dt, dwp);
                for j in 0..n {
                    db[j] = rho_bar * dwp[2 * j] + rho * dwp[2 * j + 1];
                }
                if let Err(step) =
                    run_scheme(&model.variance.coeffs, &scheme, n, curve.values(), db, v, work)
                {
                    return Some((global, step));
                }
                let mut logp = 0.0;
                for j in 0..=n {
                    xp[2 * j] = logp;
                    xp[2 * j + 1] = v[j];
                    if j < n {
                        let z = model.zeta.eval(v[j]);
                        logp += z * dwp[2 * j + 1] - 0.5 * z * z * dt;
                        if !logp.is_finite() {
                            return Some((global, j + 1));
                        }
                    }
                }
                None
            },
        )
        .collect();
    if let Some((path, step)) = failures.into_iter().flatten().next() {
        return Err(Error::NonFinite { path, step });
    }
    Ok(PathBatch {
        grid,
        first_path: first,
        n_paths: count,
        d: 2,
        m: 2,
        x,
        dw,
        fingerprint: crate::model::fingerprint_of(model),
        seed,
    })
}
