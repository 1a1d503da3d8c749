//! Discrete right Riemann-Liouville operators and the fractional derivative of
//! a martingale track at the start of the grid.
//!
//! Grid functions are read as piecewise linear between nodes and every power
//! weight is integrated exactly on each cell.

use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::kernel::pow_diff;

/// One realisation of `t -> M_t` at the grid nodes; the last entry is the payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTrack {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl MartingaleTrack {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return invalid(format!(
                "track needs {} values, got {}",
                grid.steps() + 1,
                values.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.steps()]
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if !(0.0..0.5).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1/2), got {alpha}"));
    }
    Ok(())
}

fn check_unit_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// `int_u0^u1 u^(mu - 1) du` with `u0 >= 0`.
fn power_cell(u0: f64, u1: f64, mu: f64) -> f64 {
    pow_diff(u1, u0, mu) / mu
}

/// `(1/Gamma(alpha)) int_t^T (s - t)^(alpha - 1) f(s) ds` at node `j`.
pub fn rl_integral_right(f: &GridFunction, alpha: f64, j: usize) -> Result<f64> {
    check_unit_order(alpha)?;
    let grid = f.grid();
    let n = grid.steps();
    if j > n {
        return invalid(format!("node {j} is outside the grid"));
    }
    let t = grid.node(j);
    let dt = grid.dt();
    let mut acc = 0.0;
    for i in j..n {
        let (u0, u1) = (grid.node(i) - t, grid.node(i + 1) - t);
        let (f0, f1) = (f.scalar_at(i), f.scalar_at(i + 1));
        let slope = (f1 - f0) / dt;
        let m0 = power_cell(u0, u1, alpha);
        let m1 = power_cell(u0, u1, alpha + 1.0);
        acc += f0 * m0 + slope * (m1 - u0 * m0);
    }
    Ok(acc / gamma(alpha))
}

/// Right Riemann-Liouville derivative at node `j < n`.
///
/// The grid function is split as `f(T) + c (T - s)^alpha + r(s)` with `c` fixed
/// by the last two nodes, so `r` vanishes on the last cell. The first two parts
/// have exact derivatives; `r` is read as piecewise linear and differentiated in
/// Marchaud form `(1/Gamma(1-alpha)) [r(t)/(T-t)^alpha + alpha int_t^T (r(t) - r(s))/(s-t)^(1+alpha) ds]`.
/// The split resolves the `(T - s)^alpha` boundary layer carried by every
/// fractional integral.
pub fn rl_derivative_right(f: &GridFunction, alpha: f64, j: usize) -> Result<f64> {
    check_unit_order(alpha)?;
    let grid = f.grid();
    let n = grid.steps();
    if j >= n {
        return invalid(format!("derivative needs a node before T, got {j}"));
    }
    let t_end = grid.t_end();
    let dt = grid.dt();
    let f_end = f.scalar_at(n);
    let c = (f.scalar_at(n - 1) - f_end) / dt.powf(alpha);
    let rest = |i: usize| f.scalar_at(i) - f_end - c * (t_end - grid.node(i)).powf(alpha);
    let t = grid.node(j);
    let rt = rest(j);
    let mut acc = 0.0;
    for i in j..n {
        let (u0, u1) = (grid.node(i) - t, grid.node(i + 1) - t);
        let (r0, r1) = (rest(i), rest(i + 1));
        let slope = (r1 - r0) / dt;
        // r(t) - r(s) = a - slope * u on this cell
        let a = rt - r0 + slope * u0;
        if a != 0.0 {
            acc += a * pow_diff(u0, u1, -alpha);
        }
        acc -= slope * alpha * power_cell(u0, u1, 1.0 - alpha);
    }
    let tail = t_end - t;
    let marchaud = (rt / tail.powf(alpha) + acc) / gamma(1.0 - alpha);
    let head = f_end / (tail.powf(alpha) * gamma(1.0 - alpha));
    Ok(head + c * gamma(1.0 + alpha) + marchaud)
}

/// `sum_j w_j (M_{j+1} - M_j)` with `w_j` the cell mean of `(s - t0)^(-alpha)`.
pub fn frac_derivative_at_start_increments(track: &MartingaleTrack, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    let grid = track.grid();
    let weights = start_weights(grid, alpha);
    Ok(track
        .values
        .windows(2)
        .zip(&weights)
        .map(|(m, w)| w * (m[1] - m[0]))
        .sum())
}

/// Cell means of `(s - t0)^(-alpha)` over each grid cell.
pub fn start_weights(grid: &TimeGrid, alpha: f64) -> Vec<f64> {
    let dt = grid.dt();
    let t0 = grid.t0();
    (0..grid.steps())
        .map(|j| {
            let (u0, u1) = (grid.node(j) - t0, grid.node(j + 1) - t0);
            power_cell(u0, u1, 1.0 - alpha) / dt
        })
        .collect()
}

/// `(1/Gamma(1-alpha)) [(M_T - M_t0)/(T-t0)^alpha + alpha int (M_t - M_t0)/(t-t0)^(1+alpha) dt]`.
pub fn frac_derivative_at_start_representation(
    track: &MartingaleTrack,
    alpha: f64,
) -> Result<f64> {
    check_order(alpha)?;
    let grid = track.grid();
    let n = grid.steps();
    let dt = grid.dt();
    let t0 = grid.t0();
    let m0 = track.start();
    let mut acc = 0.0;
    for i in 0..n {
        let (u0, u1) = (grid.node(i) - t0, grid.node(i + 1) - t0);
        let (y0, y1) = (track.values[i] - m0, track.values[i + 1] - m0);
        let b = (y1 - y0) / dt;
        let a = y0 - b * u0;
        // alpha * int u^(-1-alpha) (a + b u) du, with the 1/alpha cancelled
        if i > 0 && a != 0.0 {
            acc += a * pow_diff(u0, u1, -alpha);
        }
        acc += alpha * b * power_cell(u0, u1, 1.0 - alpha);
    }
    let head = (track.terminal() - m0) / grid.horizon().powf(alpha);
    Ok((head + acc) / gamma(1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::unit(n).unwrap()
    }

    fn linear_track(n: usize) -> MartingaleTrack {
        let g = grid(n);
        MartingaleTrack::new(g, g.nodes()).unwrap()
    }

    #[test]
    fn integral_of_one() {
        let g = grid(64);
        let one = GridFunction::from_fn(g, |_| 1.0);
        let v = rl_integral_right(&one, 0.5, 0).unwrap();
        assert_relative_eq!(v, 2.0 / std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        let zero = GridFunction::zeros(g, 1);
        assert_eq!(rl_integral_right(&zero, 0.5, 3).unwrap(), 0.0);
    }

    #[test]
    fn derivative_inverts_integral() {
        let n = 512;
        let g = grid(n);
        let f = GridFunction::from_fn(g, |s| s * s);
        let alpha = 0.4;
        let ia: Vec<f64> = (0..=n).map(|j| rl_integral_right(&f, alpha, j).unwrap()).collect();
        let ia = GridFunction::scalar(g, ia).unwrap();
        let mut worst = 0.0_f64;
        for j in 0..n {
            let d = rl_derivative_right(&ia, alpha, j).unwrap();
            worst = worst.max((d - f.scalar_at(j)).abs());
        }
        assert!(worst <= 5e-3, "sup error {worst}");
    }

    #[test]
    fn increments_examples() {
        let g = grid(16);
        let flat = MartingaleTrack::new(g, vec![0.3; 17]).unwrap();
        assert_eq!(frac_derivative_at_start_increments(&flat, 0.25).unwrap(), 0.0);
        assert_eq!(frac_derivative_at_start_representation(&flat, 0.25).unwrap(), 0.0);

        let lin = linear_track(512);
        assert_relative_eq!(
            frac_derivative_at_start_increments(&lin, 0.25).unwrap(),
            4.0 / 3.0,
            max_relative = 1e-3
        );

        let vals: Vec<f64> = (0..=16).map(|j| ((j * 7) % 5) as f64).collect();
        let track = MartingaleTrack::new(g, vals.clone()).unwrap();
        assert_relative_eq!(
            frac_derivative_at_start_increments(&track, 0.0).unwrap(),
            vals[16] - vals[0],
            epsilon = 1e-14
        );
        assert!(frac_derivative_at_start_increments(&track, 0.5).is_err());
        assert!(frac_derivative_at_start_representation(&track, 0.6).is_err());
    }

    #[test]
    fn representation_matches_closed_form() {
        let lin = linear_track(512);
        let expected = 4.0 / 3.0 / gamma(0.75);
        assert_relative_eq!(
            frac_derivative_at_start_representation(&lin, 0.25).unwrap(),
            expected,
            max_relative = 1e-3
        );
    }

    #[test]
    fn representation_small_alpha_limit() {
        let g = grid(64);
        let vals: Vec<f64> = g.nodes().iter().map(|t| (4.0 * t).sin() + t).collect();
        let track = MartingaleTrack::new(g, vals.clone()).unwrap();
        let target = vals[64] - vals[0];
        let e1 = (frac_derivative_at_start_representation(&track, 0.01).unwrap() - target).abs();
        let e2 = (frac_derivative_at_start_representation(&track, 0.001).unwrap() - target).abs();
        assert!(e2 < e1 && e2 < 0.02, "{e1} {e2}");
    }
}
