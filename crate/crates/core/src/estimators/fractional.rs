//! Fractional integration by parts with nested conditional expectations.
//!
//! Each outer path carries a martingale track `M_{t_k} = E[phi(X_T) | F_{t_k}]`,
//! estimated by `inner_budget` inner paths restarted from the shifted curve at
//! `t_k`; `M_{t0}` is the pooled outer mean and `M_T = phi(X_T)`. The estimate
//! is the mean of `F * pi_alpha` where
//!
//! * `F = sum_j w_j (M_{j+1} - M_j)` with `w_j` the cell mean of
//!   `(s - t0)^{-alpha}` (the martingale derivative at `t0`), and
//! * `pi_alpha = sum_j <xi(X_j) h*_j, dW_j> / w_j`.
//!
//! Dividing the cell terms by the same `w_j` makes the discrete product
//! reproduce the discrete BEL estimator in expectation for every `alpha`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::{payoff_of, Estimate};
use crate::direction::{DirectionKind, DirectionSpec};
use crate::error::{invalid, Error, Result};
use crate::frac::{
    frac_derivative_at_start_increments, frac_derivative_at_start_representation, start_weights,
    MartingaleTrack,
};
use crate::grid::TimeGrid;
use crate::model::{PayoffSpec, SveModel, TrackVariant};
use crate::path::{fill_increments, mean_var, run_scheme_lanes, LaneWork, PathBatch, Scheme, ShiftedTracker};
use crate::rng::Purpose;

/// Inner-noise share of `var(F)` above which a run is flagged as under-budgeted.
pub const DEFAULT_UNDERFLOW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalOptions {
    pub variant: TrackVariant,
    pub underflow_threshold: f64,
}

impl Default for FractionalOptions {
    fn default() -> Self {
        Self {
            variant: TrackVariant::Increments,
            underflow_threshold: DEFAULT_UNDERFLOW_THRESHOLD,
        }
    }
}

/// Martingale tracks of a set of outer paths.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedTracks {
    grid: TimeGrid,
    inner_budget: usize,
    /// `(n + 1)` values per path; slot 0 is unused until [`NestedTracks::track`].
    values: Vec<f64>,
    /// Sample variance of the inner payoffs per node, `(n + 1)` per path.
    inner_var: Vec<f64>,
    phi: Vec<f64>,
}

impl NestedTracks {
    /// Runs the inner simulations for every path of `batch`.
    pub fn build(batch: &PathBatch, model: &SveModel, payoff: &PayoffSpec, inner_budget: usize) -> Result<Self> {
        if !payoff.is_state() {
            return Err(Error::Inadmissible(
                "the fractional formula needs a state payoff".into(),
            ));
        }
        if inner_budget < 2 {
            return invalid("inner_budget must be at least 2");
        }
        let grid = *batch.grid();
        let (n, d, m) = (grid.steps(), model.dim(), model.noise_dim());
        if batch.state_dim() != d {
            return invalid("batch does not match the model");
        }
        let scheme = Scheme::new(model, &grid);
        let curve = model.initial.on_grid(&grid);
        let coeffs = &model.coeffs;
        let seed = batch.seed();
        let b = inner_budget;
        // Zero drift with constant scalar diffusion: X_T given F_{t_k} is
        // Gaussian around the shifted curve at T.
        let gaussian_sd: Option<Vec<f64>> = match coeffs.constant_sigma() {
            Some(s) if coeffs.drift_is_zero() && d == 1 && m == 1 => {
                let mut sd = vec![0.0; n + 1];
                let mut acc = 0.0;
                for k in (0..n).rev() {
                    acc += scheme.ks[n - k] * scheme.ks[n - k];
                    sd[k] = s[0].abs() * (acc * grid.dt()).sqrt();
                }
                Some(sd)
            }
            _ => None,
        };
        let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..batch.n_paths())
            .into_par_iter()
            .map_init(
                || {
                    (
                        LaneWork::new(n, d, m, b),
                        vec![0.0; n * m],
                        vec![0.0; n * m * b],
                        vec![0.0; d * b],
                    )
                },
                |(work, dw, lanes, terminal), p| {
                    let global = (batch.first_path() + p) as u64;
                    let mut track = vec![0.0; n + 1];
                    let mut var = vec![0.0; n + 1];
                    track[n] = payoff_of(payoff, batch, p);
                    let mut tracker = ShiftedTracker::new(&scheme, coeffs, curve.values());
                    let mut samples = vec![0.0; b];
                    for k in 1..n {
                        tracker.advance(k - 1, batch.state(p, k - 1), batch.increment(p, k - 1));
                        let base = tracker.curve_from(k);
                        let steps = n - k;
                        let stream = |r: usize| seed.stream(Purpose::Inner, global, (k * b + r) as u64);
                        match &gaussian_sd {
                            Some(sd) => {
                                for (r, y) in samples.iter_mut().enumerate() {
                                    *y = payoff.eval_state(base[steps] + sd[k] * stream(r).normal());
                                }
                            }
                            None => {
                                let len = steps * m;
                                for r in 0..b {
                                    fill_increments(&mut stream(r), grid.dt(), &mut dw[..len]);
                                    for (i, v) in dw[..len].iter().enumerate() {
                                        lanes[i * b + r] = *v;
                                    }
                                }
                                run_scheme_lanes(coeffs, &scheme, steps, base, lanes, terminal, work).map_err(
                                    |step| Error::NonFinite {
                                        path: global as usize,
                                        step: k + step,
                                    },
                                )?;
                                for (y, x) in samples.iter_mut().zip(&terminal[..b]) {
                                    *y = payoff.eval_state(*x);
                                }
                            }
                        }
                        let (mean, v) = mean_var(&samples);
                        track[k] = mean;
                        var[k] = v;
                    }
                    Ok((track, var))
                },
            )
            .collect();
        let mut values = Vec::with_capacity(batch.n_paths() * (n + 1));
        let mut inner_var = Vec::with_capacity(batch.n_paths() * (n + 1));
        let mut phi = Vec::with_capacity(batch.n_paths());
        for row in rows {
            let (t, v) = row?;
            phi.push(t[n]);
            values.extend(t);
            inner_var.extend(v);
        }
        Ok(Self {
            grid,
            inner_budget,
            values,
            inner_var,
            phi,
        })
    }

    /// Appends the tracks of a later chunk of paths.
    pub fn extend(&mut self, other: NestedTracks) -> Result<()> {
        if other.grid != self.grid || other.inner_budget != self.inner_budget {
            return invalid("tracks were built on different grids or budgets");
        }
        self.values.extend(other.values);
        self.inner_var.extend(other.inner_var);
        self.phi.extend(other.phi);
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn inner_budget(&self) -> usize {
        self.inner_budget
    }

    pub fn n_paths(&self) -> usize {
        self.phi.len()
    }

    /// Pooled outer estimate of `Phi`, used as `M_{t0}` on every path.
    pub fn start_value(&self) -> f64 {
        mean_var(&self.phi).0
    }

    pub fn terminal_payoffs(&self) -> &[f64] {
        &self.phi
    }

    /// The full track of path `p`.
    pub fn track(&self, p: usize) -> MartingaleTrack {
        self.track_from(p, self.start_value())
    }

    fn track_from(&self, p: usize, start: f64) -> MartingaleTrack {
        let n = self.grid.steps();
        let mut v = self.values[p * (n + 1)..(p + 1) * (n + 1)].to_vec();
        v[0] = start;
        MartingaleTrack::new(self.grid, v).expect("track length matches the grid")
    }

    /// `M_{t_k}` on path `p`; `k = 0` gives the pooled start value.
    pub fn node_value(&self, p: usize, k: usize) -> f64 {
        if k == 0 {
            self.start_value()
        } else {
            self.values[p * (self.grid.steps() + 1) + k]
        }
    }

    /// Sample variance of the inner payoffs behind `M_{t_k}` on path `p`.
    pub fn inner_variance(&self, p: usize, k: usize) -> f64 {
        self.inner_var[p * (self.grid.steps() + 1) + k]
    }

    /// Ensemble mean of `M_{t_k}` for every `k`.
    pub fn node_means(&self) -> Vec<f64> {
        let n = self.grid.steps();
        let start = self.start_value();
        (0..=n)
            .map(|k| {
                if k == 0 {
                    start
                } else {
                    (0..self.n_paths()).map(|p| self.values[p * (n + 1) + k]).sum::<f64>()
                        / self.n_paths() as f64
                }
            })
            .collect()
    }
}

/// `q_{p,j} = <xi(X_j) h*_j, dW_j>` for every path (`n` per path).
pub fn cell_terms(batch: &PathBatch, model: &SveModel, hstar_cells: &[f64]) -> Result<Vec<f64>> {
    let n = batch.grid().steps();
    let d = model.dim();
    if hstar_cells.len() != n * d {
        return invalid("preimage cells do not match the grid");
    }
    let m = model.noise_dim();
    let rows: Vec<Vec<f64>> = (0..batch.n_paths())
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, p| {
                (0..n)
                    .map(|j| ito_sum_cell(model, batch, p, j, &hstar_cells[j * d..(j + 1) * d], buf))
                    .collect()
            },
        )
        .collect();
    Ok(rows.concat())
}

fn ito_sum_cell(model: &SveModel, batch: &PathBatch, p: usize, j: usize, v: &[f64], buf: &mut [f64]) -> f64 {
    if v.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    model.coeffs.xi_apply(batch.state(p, j), v, buf);
    buf.iter().zip(batch.increment(p, j)).map(|(a, b)| a * b).sum()
}

/// Per-path `F_p` for every path of `tracks`.
fn martingale_derivatives(tracks: &NestedTracks, alpha: f64, variant: TrackVariant) -> Result<Vec<f64>> {
    let scale = gamma(1.0 - alpha);
    let start = tracks.start_value();
    (0..tracks.n_paths())
        .map(|p| {
            let t = tracks.track_from(p, start);
            match variant {
                TrackVariant::Increments => frac_derivative_at_start_increments(&t, alpha),
                TrackVariant::Representation => {
                    frac_derivative_at_start_representation(&t, alpha).map(|v| v * scale)
                }
            }
        })
        .collect()
}

/// `pi_alpha` per path from cell terms.
pub fn fractional_weights(q: &[f64], grid: &TimeGrid, alpha: f64) -> Vec<f64> {
    let n = grid.steps();
    let w = start_weights(grid, alpha);
    q.chunks(n)
        .map(|row| row.iter().zip(&w).map(|(qj, wj)| qj / wj).sum())
        .collect()
}

/// Variance of `F` attributable to inner noise, averaged over paths.
fn inner_noise_variance(tracks: &NestedTracks, alpha: f64) -> f64 {
    let n = tracks.grid.steps();
    let w = start_weights(&tracks.grid, alpha);
    let b = tracks.inner_budget as f64;
    let total: f64 = (0..tracks.n_paths())
        .map(|p| {
            (1..n)
                .map(|k| (w[k - 1] - w[k]).powi(2) * tracks.inner_variance(p, k) / b)
                .sum::<f64>()
        })
        .sum();
    total / tracks.n_paths() as f64
}

/// Combines tracks and cell terms into the fractional estimate.
pub fn estimate_from_tracks(
    tracks: &NestedTracks,
    q: &[f64],
    alpha: f64,
    options: FractionalOptions,
    seed: u64,
) -> Result<Estimate> {
    let n = tracks.grid.steps();
    if q.len() != tracks.n_paths() * n {
        return invalid("cell terms do not match the tracks");
    }
    let f = martingale_derivatives(tracks, alpha, options.variant)?;
    let pi = fractional_weights(q, &tracks.grid, alpha);
    let samples: Vec<f64> = f.iter().zip(&pi).map(|(a, b)| a * b).collect();
    let (_, var_f) = mean_var(&f);
    let noise = inner_noise_variance(tracks, alpha);
    let ratio = if var_f > 0.0 { noise / var_f } else { 0.0 };
    Ok(Estimate::from_samples("fractional", &samples, seed)
        .with_weight(&pi)
        .with_extra("alpha", alpha)
        .with_extra("inner_budget", tracks.inner_budget as f64)
        .with_extra("inner_noise_ratio", ratio)
        .with_extra(
            "inner_budget_underflow",
            if ratio > options.underflow_threshold { 1.0 } else { 0.0 },
        ))
}

fn check_alpha(alpha: f64, payoff: &PayoffSpec) -> Result<()> {
    let beta = payoff.holder_beta();
    if !(alpha > 0.0 && alpha < beta / 2.0) {
        return Err(Error::Inadmissible(format!(
            "alpha = {alpha} must satisfy 0 < alpha < beta/2 = {}",
            beta / 2.0
        )));
    }
    Ok(())
}

fn check_direction(dir: &DirectionSpec, alpha: f64) -> Result<()> {
    if !dir.admissible_for(alpha) {
        return Err(Error::Inadmissible(format!(
            "direction is not in the weighted space for alpha = {alpha}"
        )));
    }
    Ok(())
}

pub fn estimate_fractional(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    alpha: f64,
    inner_budget: usize,
    options: FractionalOptions,
) -> Result<Estimate> {
    check_alpha(alpha, payoff)?;
    check_direction(dir, alpha)?;
    let hstar = dir.preimage_cell_averages(&model.kernel_sigma, batch.grid())?;
    let tracks = NestedTracks::build(batch, model, payoff, inner_budget)?;
    let q = cell_terms(batch, model, &hstar)?;
    estimate_from_tracks(&tracks, &q, alpha, options, batch.seed().master_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPoint {
    pub delta: f64,
    pub estimate: Estimate,
    /// `estimate(h^delta) - estimate(h)` on the same paths.
    pub difference: f64,
    pub difference_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularReport {
    pub direct: Estimate,
    pub truncated: Vec<TruncationPoint>,
}

/// Preimage cell averages of a power-law direction and of its truncations at each `delta`.
pub fn singular_preimages(
    model: &SveModel,
    grid: &TimeGrid,
    dir: &DirectionSpec,
    alpha: f64,
    deltas: &[f64],
) -> Result<(Vec<f64>, Vec<(f64, Vec<f64>)>)> {
    let (gamma_exp, amplitude) = match dir.kind() {
        DirectionKind::PowerLaw { gamma, amplitude } => (*gamma, amplitude.clone()),
        _ => return invalid("the singular limit needs a power-law direction"),
    };
    check_direction(dir, alpha)?;
    let kernel = &model.kernel_sigma;
    let direct = dir.preimage_cell_averages(kernel, grid)?;
    let truncated = deltas
        .iter()
        .map(|&delta| {
            let td = DirectionSpec::truncated_power_law(gamma_exp, amplitude.clone(), delta, dir.hurst(), Some(alpha))?;
            Ok((delta, td.preimage_cell_averages(kernel, grid)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((direct, truncated))
}

/// Estimates for the direction (cell terms `q_direct`) and its truncations
/// (`(delta, q_delta)`), all on the same tracks.
pub fn singular_report(
    tracks: &NestedTracks,
    q_direct: &[f64],
    q_truncated: &[(f64, Vec<f64>)],
    alpha: f64,
    options: FractionalOptions,
    seed: u64,
) -> Result<SingularReport> {
    let grid = tracks.grid;
    let f = martingale_derivatives(tracks, alpha, options.variant)?;
    let products = |q: &[f64]| -> Vec<f64> {
        let pi = fractional_weights(q, &grid, alpha);
        f.iter().zip(&pi).map(|(a, b)| a * b).collect()
    };
    let mut direct = estimate_from_tracks(tracks, q_direct, alpha, options, seed)?;
    direct.estimator = "fractional_singular".into();
    let base = products(q_direct);
    let mut truncated = Vec::with_capacity(q_truncated.len());
    for (delta, q) in q_truncated {
        let mut e = estimate_from_tracks(tracks, q, alpha, options, seed)?.with_extra("delta", *delta);
        e.estimator = "fractional_singular".into();
        let diff: Vec<f64> = products(q).iter().zip(&base).map(|(a, b)| a - b).collect();
        let (dm, dv) = mean_var(&diff);
        truncated.push(TruncationPoint {
            delta: *delta,
            estimate: e,
            difference: dm,
            difference_se: (dv / diff.len() as f64).sqrt(),
        });
    }
    Ok(SingularReport { direct, truncated })
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_fractional_singular(
    batch: &PathBatch,
    model: &SveModel,
    payoff: &PayoffSpec,
    dir: &DirectionSpec,
    alpha: f64,
    inner_budget: usize,
    deltas: &[f64],
    options: FractionalOptions,
) -> Result<SingularReport> {
    check_alpha(alpha, payoff)?;
    check_direction(dir, alpha)?;
    let (direct, truncated) = singular_preimages(model, batch.grid(), dir, alpha, deltas)?;
    let tracks = NestedTracks::build(batch, model, payoff, inner_budget)?;
    let q = cell_terms(batch, model, &direct)?;
    let qt = truncated
        .iter()
        .map(|(d, h)| Ok((*d, cell_terms(batch, model, h)?)))
        .collect::<Result<Vec<_>>>()?;
    singular_report(&tracks, &q, &qt, alpha, options, batch.seed().master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::bel::estimate_bel;
    use crate::model::{builtin, BuiltinOverrides};
    use crate::path::simulate;
    use crate::rng::SeedSpec;

    fn sve(name: &str, h: Option<f64>) -> SveModel {
        let o = BuiltinOverrides {
            hurst: h,
            ..Default::default()
        };
        builtin(name, &o).unwrap().curve_model().clone()
    }

    #[test]
    fn constant_payoff_gives_exactly_zero() {
        let m = sve("tanh-drift", None);
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 50, SeedSpec::new(1)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, Some(0.2)).unwrap();
        let e = estimate_fractional(
            &b,
            &m,
            &PayoffSpec::Constant { value: 3.0 },
            &dir,
            0.2,
            4,
            FractionalOptions::default(),
        )
        .unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn variants_agree() {
        let m = sve("tanh-drift", None);
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 40, SeedSpec::new(2)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, Some(0.1)).unwrap();
        let h = dir.preimage_cell_averages(&m.kernel_sigma, &g).unwrap();
        let tracks = NestedTracks::build(&b, &m, &PayoffSpec::Identity, 8).unwrap();
        let q = cell_terms(&b, &m, &h).unwrap();
        let inc = estimate_from_tracks(&tracks, &q, 0.1, FractionalOptions::default(), 2).unwrap();
        let rep = estimate_from_tracks(
            &tracks,
            &q,
            0.1,
            FractionalOptions {
                variant: TrackVariant::Representation,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        assert!((inc.value - rep.value).abs() <= 1e-6 * inc.value.abs().max(1e-12), "{inc:?} {rep:?}");
    }

    #[test]
    fn tracks_end_at_the_payoff_and_compose_across_chunks() {
        let m = sve("tanh-drift", None);
        let g = TimeGrid::unit(8).unwrap();
        let seed = SeedSpec::new(3);
        let all = simulate(&m, &g, 6, seed).unwrap();
        let t_all = NestedTracks::build(&all, &m, &PayoffSpec::Sin, 4).unwrap();
        for p in 0..6 {
            assert_eq!(t_all.track(p).terminal(), PayoffSpec::Sin.eval_state(all.terminal(p)[0]));
        }
        let first = crate::path::simulate_range(&m, &g, 0, 2, seed).unwrap();
        let rest = crate::path::simulate_range(&m, &g, 2, 4, seed).unwrap();
        let mut t = NestedTracks::build(&first, &m, &PayoffSpec::Sin, 4).unwrap();
        t.extend(NestedTracks::build(&rest, &m, &PayoffSpec::Sin, 4).unwrap()).unwrap();
        assert_eq!(t, t_all);
    }

    #[test]
    fn cell_terms_sum_to_the_bel_weight() {
        let m = sve("tanh-drift", None);
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 5, SeedSpec::new(4)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, None).unwrap();
        let h = dir.preimage_cell_averages(&m.kernel_sigma, &g).unwrap();
        let q = cell_terms(&b, &m, &h).unwrap();
        let w = crate::estimators::bel_weight(&b, &m, &h).unwrap();
        for p in 0..5 {
            let s: f64 = q[p * 16..(p + 1) * 16].iter().sum();
            assert!((s - w.weights[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_fast_path_tracks_are_martingales() {
        let m = sve("gaussian", None);
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 4000, SeedSpec::new(5)).unwrap();
        let tracks = NestedTracks::build(&b, &m, &PayoffSpec::Square, 8).unwrap();
        let means = tracks.node_means();
        let (_, var) = mean_var(tracks.terminal_payoffs());
        let se = (var / 4000.0).sqrt();
        for mk in &means {
            assert!((mk - means[0]).abs() < 4.0 * se, "{means:?}");
        }
    }

    #[test]
    fn agrees_with_bel_on_a_smooth_case() {
        let m = sve("tanh-drift", None);
        let g = TimeGrid::unit(16).unwrap();
        let b = simulate(&m, &g, 3000, SeedSpec::new(6)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, Some(0.1)).unwrap();
        let bel = estimate_bel(&b, &m, &PayoffSpec::Identity, &dir, false).unwrap();
        let fr = estimate_fractional(&b, &m, &PayoffSpec::Identity, &dir, 0.1, 8, FractionalOptions::default())
            .unwrap();
        assert!(fr.z_score(&bel) < 3.0, "{fr:?} {bel:?}");
    }

    #[test]
    fn inadmissible_orders_are_rejected() {
        let m = sve("gaussian", None);
        let g = TimeGrid::unit(8).unwrap();
        let b = simulate(&m, &g, 2, SeedSpec::new(1)).unwrap();
        let dir = DirectionSpec::power_law(1.0, vec![1.0], 0.25, Some(0.3)).unwrap();
        let half = PayoffSpec::AbsPower { center: 0.0, beta: 0.5 };
        assert!(estimate_fractional(&b, &m, &half, &dir, 0.3, 4, FractionalOptions::default()).is_err());
        let boundary = DirectionSpec::power_law(0.5, vec![1.0], 0.25, None).unwrap();
        assert!(estimate_fractional_singular(
            &b,
            &m,
            &PayoffSpec::Identity,
            &boundary,
            0.25,
            4,
            &[0.1],
            FractionalOptions::default()
        )
        .is_err());
    }
}
