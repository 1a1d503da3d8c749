//! Tangent process `Y^h`: the derivative of the solution along a curve bump,
//! driven by the parent's increments.

use rayon::prelude::*;

use super::{PathBatch, Scheme};
use crate::direction::DirectionSpec;
use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::model::SveModel;

#[derive(Debug, Clone, PartialEq)]
pub struct TangentBatch {
    first_path: usize,
    n_paths: usize,
    steps: usize,
    d: usize,
    y: Vec<f64>,
}

impl TangentBatch {
    pub fn first_path(&self) -> usize {
        self.first_path
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let len = (self.steps + 1) * self.d;
        &self.y[p * len..(p + 1) * len]
    }

    pub fn state(&self, p: usize, j: usize) -> &[f64] {
        &self.path(p)[j * self.d..(j + 1) * self.d]
    }

    pub fn terminal(&self, p: usize) -> &[f64] {
        self.state(p, self.steps)
    }

    pub fn coordinate_path(&self, p: usize, c: usize) -> Vec<f64> {
        self.path(p).iter().skip(c).step_by(self.d).copied().collect()
    }
}

/// `Y_j = h_j + sum_{i<j} Kb(j-i) grad b(X_i) Y_i dt + Ks(j-i) (grad sigma(X_i) Y_i) dW_i`.
pub fn simulate_tangent(parent: &PathBatch, model: &SveModel, dir: &DirectionSpec) -> Result<TangentBatch> {
    let h = dir.values(&model.kernel_sigma, &parent.grid)?;
    simulate_tangent_curve(parent, model, &h)
}

/// Tangent process for an explicit, finite direction curve.
pub fn simulate_tangent_curve(parent: &PathBatch, model: &SveModel, h: &GridFunction) -> Result<TangentBatch> {
    let grid = parent.grid;
    let (n, d, m) = (grid.steps(), parent.d, parent.m);
    if h.dim() != d || h.grid() != &grid {
        return invalid("direction does not match the batch grid or dimension");
    }
    if h.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Inadmissible(
            "the tangent process needs a direction that is finite on the grid".into(),
        ));
    }
    let scheme = Scheme::new(model, &grid);
    let dt = grid.dt();
    let mut y = vec![0.0; parent.n_paths * (n + 1) * d];
    y.par_chunks_mut((n + 1) * d)
        .enumerate()
        .for_each(|(p, yp)| {
            let mut cb = vec![0.0; n * d];
            let mut cs = vec![0.0; n * d];
            let mut tb = vec![0.0; d];
            let mut ts = vec![0.0; d];
            for j in 0..=n {
                for c in 0..d {
                    let mut v = h.at(j)[c];
                    if j > 0 {
                        v += scheme.conv(&scheme.kb_rev, &cb[c * n..], j)
                            + scheme.conv(&scheme.ks_rev, &cs[c * n..], j);
                    }
                    yp[j * d + c] = v;
                }
                if j == n {
                    break;
                }
                let x = parent.state(p, j);
                let yj = &yp[j * d..(j + 1) * d];
                model.coeffs.drift_jacobian_apply(x, yj, &mut tb);
                model
                    .coeffs
                    .diffusion_derivative_apply(x, yj, &parent.dw[(p * n + j) * m..(p * n + j + 1) * m], &mut ts);
                for c in 0..d {
                    cb[c * n + j] = tb[c] * dt;
                    cs[c * n + j] = ts[c];
                }
            }
        });
    Ok(TangentBatch {
        first_path: parent.first_path,
        n_paths: parent.n_paths,
        steps: n,
        d,
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::{builtin, BuiltinOverrides};
    use crate::path::{simulate, simulate_with_curve};
    use crate::rng::SeedSpec;

    fn sve(name: &str) -> SveModel {
        builtin(name, &BuiltinOverrides::default())
            .unwrap()
            .curve_model()
            .clone()
    }

    #[test]
    fn constant_diffusion_without_drift_gives_the_direction() {
        let m = sve("gaussian");
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 3, SeedSpec::new(1)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![2.0], 0.25, None).unwrap();
        let t = simulate_tangent(&b, &m, &dir).unwrap();
        let h = dir.values(&m.kernel_sigma, &g).unwrap();
        for p in 0..3 {
            assert_eq!(t.path(p), h.values());
            assert_eq!(t.state(p, 0), h.at(0));
        }
    }

    #[test]
    fn zero_direction_gives_zero_tangent() {
        let m = sve("tanh-drift");
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 2, SeedSpec::new(1)).unwrap();
        let t = simulate_tangent_curve(&b, &m, &GridFunction::zeros(g, 1)).unwrap();
        assert!(t.path(0).iter().chain(t.path(1)).all(|v| *v == 0.0));
    }

    #[test]
    fn singular_direction_is_rejected() {
        let m = sve("tanh-drift");
        let g = TimeGrid::unit(8).unwrap();
        let b = simulate(&m, &g, 1, SeedSpec::new(1)).unwrap();
        let dir = DirectionSpec::power_law(0.25, vec![1.0], 0.25, None).unwrap();
        assert!(simulate_tangent(&b, &m, &dir).is_err());
    }

    #[test]
    fn tangent_matches_finite_differences_at_first_order() {
        let m = sve("tanh-drift");
        let g = TimeGrid::unit(32).unwrap();
        let seed = SeedSpec::new(3);
        let n_paths = 64;
        let base = simulate(&m, &g, n_paths, seed).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, None).unwrap();
        let h = dir.values(&m.kernel_sigma, &g).unwrap();
        let t = simulate_tangent(&base, &m, &dir).unwrap();
        let curve = m.initial.on_grid(&g);
        let err = |eps: f64| {
            let bumped: Vec<f64> = curve
                .values()
                .iter()
                .zip(h.values())
                .map(|(x, y)| x + eps * y)
                .collect();
            let bc = GridFunction::new(g, 1, bumped).unwrap();
            let b = simulate_with_curve(&m, &bc, 0, n_paths, seed).unwrap();
            let mut total = 0.0;
            for p in 0..n_paths {
                let worst = (0..=32)
                    .map(|j| ((b.state(p, j)[0] - base.state(p, j)[0]) / eps - t.state(p, j)[0]).abs())
                    .fold(0.0, f64::max);
                total += worst;
            }
            total / n_paths as f64
        };
        let (e1, e2) = (err(1e-2), err(1e-3));
        let ratio = e1 / e2;
        assert!(ratio > 7.0 && ratio < 13.0, "{e1} {e2}");
    }
}
