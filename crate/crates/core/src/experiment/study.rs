use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::runner::elapsed_ms;
use super::{Provenance, Runner, StudyResult};
use crate::direction::DirectionSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    bel_samples, estimate_from_tracks, singular_preimages, singular_report, Diagnostics, Estimate,
    FractionalOptions, WeightedSamples,
};
use crate::grid::TimeGrid;
use crate::model::{DirectionConfig, StudyConfig};
use crate::path::mean_var;

/// Weighted least-squares slope of `ln|y|` against `ln x`, with `ln|y|`
/// weighted by `(|y| / se)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub slope: f64,
    pub std_error: f64,
}

/// Points with `y = 0` or a non-positive `x` are skipped; a zero standard
/// error falls back to ordinary least squares.
pub fn log_log_slope(x: &[f64], y: &[f64], se: &[f64]) -> Result<Slope> {
    let pts: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .zip(se)
        .filter(|((x, y), _)| **x > 0.0 && **y != 0.0 && y.is_finite())
        .map(|((x, y), s)| (x.ln(), y.abs().ln(), *s / y.abs()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("a slope needs at least two usable points".into()));
    }
    let weighted = pts.iter().all(|p| p.2 > 0.0 && p.2.is_finite());
    let w: Vec<f64> = pts
        .iter()
        .map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("a slope needs at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let std_error = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let dof = (pts.len() as f64 - 2.0).max(1.0);
        let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (rss / dof / sxx).sqrt()
    };
    Ok(Slope { slope, std_error })
}

fn plain(estimator: &str, value: f64, std_error: f64, n_paths: usize, seed: u64) -> Estimate {
    Estimate {
        estimator: estimator.into(),
        value,
        std_error,
        n_paths,
        seed,
        diagnostics: Diagnostics::default(),
    }
}

/// Runs the configured study; `kind`, when given, must match it.
pub fn run_study(runner: &Runner, kind: Option<&str>) -> Result<StudyResult> {
    let cfg = runner.config();
    let study = cfg
        .study
        .as_ref()
        .ok_or_else(|| Error::Config("the configuration has no [study] table".into()))?;
    if let Some(k) = kind {
        if k != study.tag() {
            return Err(Error::Config(format!(
                "study kind {k} requested but the configuration declares {}",
                study.tag()
            )));
        }
    }
    let mut result = StudyResult::new(Provenance::new(cfg, &format!("study {}", study.tag()))?);
    let start = Instant::now();
    let mut rows: Vec<(String, Estimate)> = Vec::new();
    let mut summary = Vec::new();
    match study {
        StudyConfig::AlphaSweep { alphas, inner_budget } => {
            alpha_sweep(runner, alphas, *inner_budget, &mut rows)?;
            let bel = &rows[0].1;
            for (p, e) in &rows[1..] {
                summary.push(format!(
                    "fractional [{p}]: {:.6} +/- {:.6} (z to bel {:.2})",
                    e.value,
                    e.std_error,
                    e.z_score(bel)
                ));
            }
        }
        StudyConfig::MaturityScaling {
            horizons,
            alpha,
            inner_budget,
        } => {
            let (slope, predicted) = maturity_scaling(runner, horizons, *alpha, *inner_budget, &mut rows)?;
            summary.push(format!(
                "slope {:.4} +/- {:.4}, predicted {predicted:.4}",
                slope.slope, slope.std_error
            ));
        }
        StudyConfig::DeltaLimit {
            deltas,
            alpha,
            inner_budget,
        } => {
            delta_limit(runner, deltas, *alpha, *inner_budget, &mut rows)?;
            for (p, e) in rows.iter().filter(|(_, e)| e.estimator == "difference") {
                summary.push(format!("difference [{p}]: {:.6} +/- {:.6}", e.value, e.std_error));
            }
        }
        StudyConfig::VarianceProfile { scales } => {
            variance_profile(runner, scales, &mut rows)?;
            for (p, e) in rows.iter().filter(|(_, e)| e.estimator == "weight_std") {
                summary.push(format!("weight_std [{p}]: {:.6}", e.value));
            }
        }
        StudyConfig::Regularity { inner_budget, nodes } => {
            let (slope, predicted) = regularity(runner, *inner_budget, *nodes, &mut rows)?;
            summary.push(format!(
                "slope {:.4} +/- {:.4}, declared beta {predicted:.4}",
                slope.slope, slope.std_error
            ));
        }
    }
    let ms = elapsed_ms(start);
    for (p, e) in &rows {
        result.push(&cfg.name, p, e, ms);
    }
    result.summary = summary;
    Ok(result)
}

fn alpha_sweep(runner: &Runner, alphas: &[f64], inner_budget: usize, rows: &mut Vec<(String, Estimate)>) -> Result<()> {
    let cfg = runner.config();
    let m = runner.sve()?;
    for a in alphas {
        let dir = runner.direction(&cfg.direction, Some(*a))?;
        if !dir.admissible_for(*a) {
            return Err(Error::Inadmissible(format!("direction is not admissible for alpha = {a}")));
        }
    }
    // The preimage does not depend on the order; one set of tracks serves every alpha.
    let hs = runner
        .direction(&cfg.direction, Some(alphas[0]))?
        .preimage_cell_averages(&m.kernel_sigma, runner.grid())?;
    let (tracks, q) = runner.tracks(m, inner_budget, &[hs])?;
    let q = &q[0];
    let n = runner.grid().steps();
    let bel: Vec<f64> = tracks
        .terminal_payoffs()
        .iter()
        .enumerate()
        .map(|(p, phi)| phi * q[p * n..(p + 1) * n].iter().sum::<f64>())
        .collect();
    rows.push(("alpha=0".into(), Estimate::from_samples("bel", &bel, cfg.seed)));
    for a in alphas {
        let e = estimate_from_tracks(&tracks, q, *a, FractionalOptions::default(), cfg.seed)?;
        rows.push((format!("alpha={a};inner_budget={inner_budget}"), e));
    }
    Ok(())
}

/// `gamma - 1/2 + H (beta - 1)`; a constant direction counts as `gamma = 1/2`.
fn predicted_maturity_slope(dir: &DirectionConfig, hurst: f64, beta: f64) -> Option<f64> {
    let gamma = match dir {
        DirectionConfig::PowerLaw { gamma, .. } => *gamma,
        DirectionConfig::Constant { .. } => 0.5,
        DirectionConfig::TruncatedPowerLaw { .. } => return None,
    };
    Some(gamma - 0.5 + hurst * (beta - 1.0))
}

fn maturity_scaling(
    runner: &Runner,
    horizons: &[f64],
    alpha: f64,
    inner_budget: usize,
    rows: &mut Vec<(String, Estimate)>,
) -> Result<(Slope, f64)> {
    let cfg = runner.config();
    let m = runner.sve()?;
    let dir = runner.direction(&cfg.direction, Some(alpha))?;
    let t0 = runner.grid().t0();
    let mut values = Vec::new();
    let mut ses = Vec::new();
    for h in horizons {
        let grid = TimeGrid::new(t0, t0 + h, runner.grid().steps())?;
        let hs = dir.preimage_cell_averages(&m.kernel_sigma, &grid)?;
        let (tracks, q) = runner.tracks_on(&grid, m, inner_budget, &[hs])?;
        let e = estimate_from_tracks(&tracks, &q[0], alpha, FractionalOptions::default(), cfg.seed)?;
        values.push(e.value);
        ses.push(e.std_error);
        rows.push((format!("horizon={h};alpha={alpha};inner_budget={inner_budget}"), e));
    }
    let slope = log_log_slope(horizons, &values, &ses)?;
    let predicted =
        predicted_maturity_slope(&cfg.direction, runner.hurst(), cfg.payoff.holder_beta()).unwrap_or(f64::NAN);
    rows.push((
        format!("predicted={}", (predicted * 1e12).round() / 1e12),
        plain("slope", slope.slope, slope.std_error, cfg.n_paths, cfg.seed),
    ));
    Ok((slope, predicted))
}

fn delta_limit(
    runner: &Runner,
    deltas: &[f64],
    alpha: f64,
    inner_budget: usize,
    rows: &mut Vec<(String, Estimate)>,
) -> Result<()> {
    let cfg = runner.config();
    let m = runner.sve()?;
    let dir = runner.direction(&cfg.direction, Some(alpha))?;
    let (direct, truncated) = singular_preimages(m, runner.grid(), &dir, alpha, deltas)?;
    let mut hs = vec![direct];
    hs.extend(truncated.into_iter().map(|(_, h)| h));
    let (tracks, mut q) = runner.tracks(m, inner_budget, &hs)?;
    let qt: Vec<(f64, Vec<f64>)> = deltas.iter().copied().zip(q.drain(1..)).collect();
    let report = singular_report(&tracks, &q[0], &qt, alpha, FractionalOptions::default(), cfg.seed)?;
    rows.push(("delta=0".into(), report.direct));
    for t in report.truncated {
        let p = format!("delta={}", t.delta);
        let n = t.estimate.n_paths;
        rows.push((p.clone(), t.estimate));
        rows.push((p, plain("difference", t.difference, t.difference_se, n, cfg.seed)));
    }
    Ok(())
}

fn variance_profile(runner: &Runner, scales: &[f64], rows: &mut Vec<(String, Estimate)>) -> Result<()> {
    let cfg = runner.config();
    let m = runner.sve()?;
    let dirs: Vec<DirectionSpec> = scales
        .iter()
        .map(|s| runner.direction(&cfg.direction.scaled(*s), None))
        .collect::<Result<_>>()?;
    let hs: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| d.preimage_cell_averages(&m.kernel_sigma, runner.grid()))
        .collect::<Result<_>>()?;
    let mut samples = vec![WeightedSamples::default(); scales.len()];
    for (first, count) in runner.chunks() {
        let batch = runner.simulate_chunk(runner.grid(), first, count)?;
        for (s, h) in samples.iter_mut().zip(&hs) {
            s.extend(bel_samples(&batch, m, &cfg.payoff, h)?);
        }
    }
    for ((scale, dir), s) in scales.iter().zip(&dirs).zip(&samples) {
        let norm = dir.norm(0.0, &m.kernel_sigma, runner.grid())?;
        let p = format!("scale={scale};norm={norm}");
        let e = s.estimate("bel", cfg.seed, false);
        let (_, var) = mean_var(&s.weight);
        let n = s.len();
        let sd = var.sqrt();
        rows.push((p.clone(), e));
        rows.push((
            p,
            plain("weight_std", sd, sd / (2.0 * (n as f64 - 1.0)).sqrt(), n, cfg.seed),
        ));
    }
    Ok(())
}

/// `E|M_t - M_t0|^2` at the first `nodes` grid points, with the inner-sampling
/// variance `var_inner / B` removed from each squared increment.
fn regularity(
    runner: &Runner,
    inner_budget: usize,
    nodes: usize,
    rows: &mut Vec<(String, Estimate)>,
) -> Result<(Slope, f64)> {
    let cfg = runner.config();
    let m = runner.sve()?;
    let (tracks, _) = runner.tracks(m, inner_budget, &[])?;
    let start = tracks.start_value();
    let grid = *runner.grid();
    let b = inner_budget as f64;
    let mut times = Vec::with_capacity(nodes);
    let mut values = Vec::with_capacity(nodes);
    let mut ses = Vec::with_capacity(nodes);
    for k in 1..=nodes {
        let d: Vec<f64> = (0..tracks.n_paths())
            .map(|p| {
                let mk = tracks.node_value(p, k);
                (mk - start).powi(2) - tracks.inner_variance(p, k) / b
            })
            .collect();
        let t = grid.node(k) - grid.t0();
        let e = Estimate::from_samples("msd", &d, cfg.seed);
        times.push(t);
        values.push(e.value);
        ses.push(e.std_error);
        rows.push((format!("t={t}"), e));
    }
    let (ts, (vs, ss)): (Vec<f64>, (Vec<f64>, Vec<f64>)) = times
        .iter()
        .zip(values.iter().zip(&ses))
        .filter(|(_, (v, _))| **v > 0.0)
        .map(|(t, (v, s))| (*t, (*v, *s)))
        .unzip();
    let slope = log_log_slope(&ts, &vs, &ss)?;
    let beta = cfg.payoff.holder_beta();
    rows.push((
        format!("predicted={beta}"),
        plain("slope", slope.slope, slope.std_error, cfg.n_paths, cfg.seed),
    ));
    Ok((slope, beta))
}
