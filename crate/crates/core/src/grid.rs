//! Uniform time grids and functions sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform grid `t_j = t0 + j * dt`, `j = 0..=n`, with `t_n = T` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() || !t_end.is_finite() {
            return invalid("grid endpoints must be finite");
        }
        if t_end <= t0 {
            return invalid(format!("grid end {t_end} must exceed start {t0}"));
        }
        if n < 2 {
            return invalid(format!("grid needs at least 2 steps, got {n}"));
        }
        Ok(Self { t0, t_end, n })
    }

    /// The unit interval `[0, 1]` split into `n` steps.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t0
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n as f64
    }

    /// Node `t_j`. The last node is returned as `T` itself.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n);
        if j == self.n {
            self.t_end
        } else {
            self.t0 + j as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.node(j)).collect()
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            t0: self.t0,
            t_end: self.t_end,
            n: self.n * factor.max(1),
        }
    }
}

/// Vector-valued function sampled at every node of a grid, stored node-major.
///
/// Non-finite values mark nodes where the function is singular; sup-norm
/// comparisons skip them.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("grid function dimension must be positive");
        }
        if values.len() != (grid.steps() + 1) * dim {
            return invalid(format!(
                "expected {} values for {} nodes of dimension {dim}, got {}",
                (grid.steps() + 1) * dim,
                grid.steps() + 1,
                values.len()
            ));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self {
            grid,
            dim: 1,
            values,
        }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; (grid.steps() + 1) * dim],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// First component at node `j`.
    pub fn scalar_at(&self, j: usize) -> f64 {
        self.values[j * self.dim]
    }

    pub fn is_singular(&self, j: usize) -> bool {
        self.at(j).iter().any(|v| !v.is_finite())
    }

    /// Largest absolute difference over nodes `from..=n` where both are finite.
    pub fn sup_distance(&self, other: &GridFunction, from: usize) -> f64 {
        let n = self.grid.steps();
        let mut worst = 0.0_f64;
        for j in from..=n {
            if self.is_singular(j) || other.is_singular(j) {
                continue;
            }
            for (a, b) in self.at(j).iter().zip(other.at(j)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_exact() {
        let g = TimeGrid::new(0.1, 0.7, 3).unwrap();
        assert_eq!(g.node(3), 0.7);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 8).is_err());
        assert!(TimeGrid::new(0.0, f64::NAN, 8).is_err());
    }

    #[test]
    fn sup_distance_skips_singular_nodes() {
        let g = TimeGrid::unit(4).unwrap();
        let a = GridFunction::scalar(g, vec![f64::INFINITY, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = GridFunction::scalar(g, vec![0.0, 1.0, 2.5, 3.0, 4.0]).unwrap();
        assert_eq!(a.sup_distance(&b, 0), 0.5);
    }
}
