//! Volterra kernels and their exact cell integrals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `(t - s)^(H - 1/2)` for `t > s`.
    PowerLaw { hurst: f64 },
    Constant { level: f64 },
    Zero,
}

/// A kernel `K(t, s) = scale * k(t - s)` vanishing for `s >= t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// `x^mu - y^mu` for `x > y >= 0` without cancellation.
pub(crate) fn pow_diff(x: f64, y: f64, mu: f64) -> f64 {
    if y <= 0.0 {
        return x.powf(mu);
    }
    -x.powf(mu) * (mu * (y / x).ln()).exp_m1()
}

impl KernelSpec {
    pub fn power_law(hurst: f64) -> Result<Self> {
        Self::power_law_scaled(hurst, 1.0)
    }

    pub fn power_law_scaled(hurst: f64, scale: f64) -> Result<Self> {
        let k = Self {
            kind: KernelKind::PowerLaw { hurst },
            scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn constant(level: f64) -> Self {
        Self {
            kind: KernelKind::Constant { level },
            scale: 1.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: KernelKind::Zero,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() {
            return invalid("kernel scale must be finite");
        }
        match self.kind {
            KernelKind::PowerLaw { hurst } if !(hurst > 0.0 && hurst < 1.0) => {
                invalid(format!("power-law exponent H must lie in (0, 1), got {hurst}"))
            }
            KernelKind::Constant { level } if !level.is_finite() => {
                invalid("constant kernel level must be finite")
            }
            _ => Ok(()),
        }
    }

    /// Roughness exponent: `H` for power laws, `1/2` for constant kernels.
    pub fn hurst(&self) -> Option<f64> {
        match self.kind {
            KernelKind::PowerLaw { hurst } => Some(hurst),
            KernelKind::Constant { .. } => Some(0.5),
            KernelKind::Zero => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self.kind {
            KernelKind::Zero => true,
            KernelKind::Constant { level } => level == 0.0 || self.scale == 0.0,
            KernelKind::PowerLaw { .. } => self.scale == 0.0,
        }
    }

    /// `K(t, s)`; zero whenever `s >= t`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        match self.kind {
            KernelKind::PowerLaw { hurst } => self.scale * (t - s).powf(hurst - 0.5),
            KernelKind::Constant { level } => self.scale * level,
            KernelKind::Zero => 0.0,
        }
    }

    /// `int_a^b K(t, s) ds` for `a < b <= t`.
    pub fn cell_integral(&self, t: f64, a: f64, b: f64) -> f64 {
        match self.kind {
            KernelKind::PowerLaw { hurst } => {
                let mu = hurst + 0.5;
                self.scale * pow_diff(t - a, (t - b).max(0.0), mu) / mu
            }
            KernelKind::Constant { level } => self.scale * level * (b - a),
            KernelKind::Zero => 0.0,
        }
    }

    /// Mean of `K(t, .)` over `[a, b]`.
    pub fn cell_average(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return invalid(format!("cell [{a}, {b}] is empty"));
        }
        if b > t {
            return invalid(format!("cell end {b} lies beyond evaluation time {t}"));
        }
        Ok(self.cell_integral(t, a, b) / (b - a))
    }

    /// Cell averages by lag on a uniform grid: entry `l` (for `l >= 1`) is the
    /// mean of `K(t_j, .)` over `[t_{j-l}, t_{j-l+1}]`. Entry 0 is zero.
    pub fn lag_weights(&self, grid: &TimeGrid) -> Vec<f64> {
        let n = grid.steps();
        let dt = grid.dt();
        let mut w = vec![0.0; n + 1];
        match self.kind {
            KernelKind::PowerLaw { hurst } => {
                let mu = hurst + 0.5;
                let pre = self.scale * dt.powf(hurst - 0.5) / mu;
                for (l, wl) in w.iter_mut().enumerate().skip(1) {
                    *wl = pre * pow_diff(l as f64, (l - 1) as f64, mu);
                }
            }
            KernelKind::Constant { level } => {
                for wl in w.iter_mut().skip(1) {
                    *wl = self.scale * level;
                }
            }
            KernelKind::Zero => {}
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let k = KernelSpec::power_law(0.3).unwrap();
        assert_relative_eq!(k.eval(1.0, 0.75), 1.319_507_910_772_894, max_relative = 1e-14);
        assert_eq!(k.eval(0.5, 0.5), 0.0);
        assert_eq!(KernelSpec::constant(2.0).eval(1.0, 0.0), 2.0);
        assert_eq!(KernelSpec::constant(2.0).eval(1.0, 1.5), 0.0);
    }

    #[test]
    fn cell_average_examples() {
        let k = KernelSpec::power_law(0.5).unwrap();
        assert_relative_eq!(k.cell_average(1.0, 0.0, 0.5).unwrap(), 1.0, max_relative = 1e-15);
        let k = KernelSpec::power_law(0.25).unwrap();
        assert_relative_eq!(
            k.cell_average(1.0, 0.75, 1.0).unwrap(),
            1.885_618_083_164_126_7,
            max_relative = 1e-14
        );
        assert_eq!(KernelSpec::zero().cell_average(1.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(k.cell_average(1.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn lag_weights_match_cell_averages() {
        let g = TimeGrid::new(0.2, 1.4, 12).unwrap();
        let k = KernelSpec::power_law_scaled(0.1, 1.7).unwrap();
        let w = k.lag_weights(&g);
        let j = 12;
        for l in 1..=j {
            let direct = k.cell_average(g.node(j), g.node(j - l), g.node(j - l + 1)).unwrap();
            assert_relative_eq!(w[l], direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_exponent() {
        assert!(KernelSpec::power_law(0.0).is_err());
        assert!(KernelSpec::power_law(1.0).is_err());
    }
}
