use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ensure_valid, Provenance, StudyResult, DISAGREEMENT_Z};
use crate::direction::DirectionSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    additive_samples, bel_samples, bump_direction, cell_terms, chain_rule_samples, combined_se, estimate_from_tracks,
    fd_samples, rough_vol_samples, second_order_samples, singular_preimages, singular_report, Diagnostics, Estimate,
    FractionalOptions, NestedTracks, WeightedSamples,
};
use crate::grid::TimeGrid;
use crate::model::{DirectionConfig, EstimatorConfig, ExperimentConfig, Model, RoughVolModel, SveModel};
use crate::path::dump::save_batch;
use crate::path::{simulate_rough_vol_with_curve, simulate_tangent, simulate_with_curve, PathBatch};
use crate::rng::SeedSpec;

/// Target memory of one simulated chunk.
const CHUNK_BYTES: usize = 64 << 20;

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Runner {
    cfg: ExperimentConfig,
    model: Model,
    grid: TimeGrid,
    hurst: f64,
    chunk: usize,
}

impl Runner {
    /// Validates the configuration; violations come back as [`Error::Config`].
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        ensure_valid(cfg)?;
        let model = cfg.model.build()?;
        let grid = cfg.grid.build()?;
        let hurst = model
            .curve_model()
            .kernel_sigma
            .hurst()
            .ok_or_else(|| Error::Config("directions need a power-law or constant diffusion kernel".into()))?;
        let (d, m) = match &model {
            Model::Sve(s) => (s.dim(), s.noise_dim()),
            Model::RoughVol(_) => (2, 2),
        };
        let per_path = ((grid.steps() + 1) * d + grid.steps() * m) * std::mem::size_of::<f64>();
        Ok(Self {
            cfg: cfg.clone(),
            model,
            grid,
            hurst,
            chunk: (CHUNK_BYTES / per_path).max(1),
        })
    }

    /// Overrides the number of paths simulated at once.
    pub fn with_chunk_size(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub(crate) fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.cfg.seed)
    }

    pub(crate) fn chunks(&self) -> Vec<(usize, usize)> {
        let n = self.cfg.n_paths;
        (0..n)
            .step_by(self.chunk)
            .map(|first| (first, self.chunk.min(n - first)))
            .collect()
    }

    pub(crate) fn simulate_chunk(&self, grid: &TimeGrid, first: usize, count: usize) -> Result<PathBatch> {
        match &self.model {
            Model::Sve(m) => simulate_with_curve(m, &m.initial.on_grid(grid), first, count, self.seed()),
            Model::RoughVol(m) => {
                simulate_rough_vol_with_curve(m, &m.variance.initial.on_grid(grid), first, count, self.seed())
            }
        }
    }

    pub(crate) fn sve(&self) -> Result<&SveModel> {
        match &self.model {
            Model::Sve(m) => Ok(m),
            Model::RoughVol(_) => Err(Error::Config("this estimator needs an SVE model".into())),
        }
    }

    fn rough_vol(&self) -> Result<&RoughVolModel> {
        match &self.model {
            Model::RoughVol(m) => Ok(m),
            Model::Sve(_) => Err(Error::Config("this estimator needs a rough-volatility model".into())),
        }
    }

    pub(crate) fn direction(&self, dir: &DirectionConfig, alpha: Option<f64>) -> Result<DirectionSpec> {
        dir.build(self.hurst, alpha)
    }

    /// Collects weighted samples over all chunks.
    fn weighted(
        &self,
        mut per_chunk: impl FnMut(&PathBatch) -> Result<WeightedSamples>,
    ) -> Result<WeightedSamples> {
        let mut all = WeightedSamples::default();
        for (first, count) in self.chunks() {
            let batch = self.simulate_chunk(&self.grid, first, count)?;
            all.extend(per_chunk(&batch)?);
        }
        Ok(all)
    }

    /// Runs one estimator; returns `(parameters, estimate)` rows.
    pub fn run_estimator(&self, est: &EstimatorConfig) -> Result<Vec<(String, Estimate)>> {
        let seed = self.cfg.seed;
        let payoff = &self.cfg.payoff;
        let params = est.parameters();
        let one = |e: Estimate| Ok(vec![(params.clone(), e)]);
        match est {
            EstimatorConfig::Bel { control_variate } => {
                let m = self.sve()?;
                let hs = self
                    .direction(&self.cfg.direction, None)?
                    .preimage_cell_averages(&m.kernel_sigma, &self.grid)?;
                let s = self.weighted(|b| bel_samples(b, m, payoff, &hs))?;
                one(s.estimate("bel", seed, *control_variate))
            }
            EstimatorConfig::Fractional {
                alpha,
                inner_budget,
                variant,
            } => {
                let m = self.sve()?;
                let hs = self
                    .direction(&self.cfg.direction, Some(*alpha))?
                    .preimage_cell_averages(&m.kernel_sigma, &self.grid)?;
                let (tracks, q) = self.tracks(m, *inner_budget, &[hs])?;
                let options = FractionalOptions {
                    variant: *variant,
                    ..Default::default()
                };
                one(estimate_from_tracks(&tracks, &q[0], *alpha, options, seed)?)
            }
            EstimatorConfig::FractionalSingular {
                alpha,
                inner_budget,
                deltas,
            } => {
                let m = self.sve()?;
                let dir = self.direction(&self.cfg.direction, Some(*alpha))?;
                let (direct, truncated) = singular_preimages(m, &self.grid, &dir, *alpha, deltas)?;
                let mut hs = vec![direct];
                hs.extend(truncated.iter().map(|(_, h)| h.clone()));
                let (tracks, mut q) = self.tracks(m, *inner_budget, &hs)?;
                let qt: Vec<(f64, Vec<f64>)> = deltas.iter().copied().zip(q.drain(1..)).collect();
                let report = singular_report(&tracks, &q[0], &qt, *alpha, FractionalOptions::default(), seed)?;
                let mut rows = vec![(params.clone(), report.direct)];
                for t in report.truncated {
                    let p = format!("{params};delta={}", t.delta);
                    let n = t.estimate.n_paths;
                    rows.push((p.clone(), t.estimate));
                    rows.push((
                        p,
                        Estimate {
                            estimator: "fractional_singular_difference".into(),
                            value: t.difference,
                            std_error: t.difference_se,
                            n_paths: n,
                            seed,
                            diagnostics: Diagnostics::default(),
                        },
                    ));
                }
                Ok(rows)
            }
            EstimatorConfig::Additive { u } => {
                let m = self.sve()?;
                let dir = self.direction(&self.cfg.direction, None)?;
                let s = self.weighted(|b| additive_samples(b, m, payoff, &dir, u.as_ref()))?;
                one(s.estimate("additive", seed, false))
            }
            EstimatorConfig::SecondOrder => {
                let m = self.sve()?;
                let g = self
                    .cfg
                    .second_direction
                    .as_ref()
                    .ok_or_else(|| Error::Config("second_order needs a second_direction".into()))?;
                let hs = self
                    .direction(&self.cfg.direction, None)?
                    .preimage_cell_averages(&m.kernel_sigma, &self.grid)?;
                let gs = self
                    .direction(g, None)?
                    .preimage_cell_averages(&m.kernel_sigma, &self.grid)?;
                let s = self.weighted(|b| second_order_samples(b, m, payoff, &hs, &gs))?;
                one(s.estimate("second_order", seed, false))
            }
            EstimatorConfig::RoughVol { control_variate } => {
                let m = self.rough_vol()?;
                let hs = self
                    .direction(&self.cfg.direction, None)?
                    .preimage_cell_averages(&m.variance.kernel_sigma, &self.grid)?;
                let s = self.weighted(|b| rough_vol_samples(b, m, payoff, &hs))?;
                one(s.estimate("rough_vol", seed, *control_variate))
            }
            EstimatorConfig::Fd { epsilon } => {
                let dir = self.direction(&self.cfg.direction, None)?;
                let h = bump_direction(&self.model, &dir, &self.grid)?;
                let mut s = Vec::with_capacity(self.cfg.n_paths);
                for (first, count) in self.chunks() {
                    s.extend(fd_samples(&self.model, payoff, &h, *epsilon, first, count, self.seed())?);
                }
                one(Estimate::from_samples("fd", &s, seed).with_extra("epsilon", *epsilon))
            }
            EstimatorConfig::ChainRule => {
                let m = self.sve()?;
                let dir = self.direction(&self.cfg.direction, None)?;
                let mut s = Vec::with_capacity(self.cfg.n_paths);
                for (first, count) in self.chunks() {
                    let batch = self.simulate_chunk(&self.grid, first, count)?;
                    let tangent = simulate_tangent(&batch, m, &dir)?;
                    s.extend(chain_rule_samples(&batch, &tangent, payoff)?);
                }
                one(Estimate::from_samples("chain_rule", &s, seed))
            }
        }
    }

    /// Martingale tracks and, for each preimage in `hstars`, the cell terms, over all chunks.
    pub(crate) fn tracks(
        &self,
        model: &SveModel,
        inner_budget: usize,
        hstars: &[Vec<f64>],
    ) -> Result<(NestedTracks, Vec<Vec<f64>>)> {
        self.tracks_on(&self.grid, model, inner_budget, hstars)
    }

    pub(crate) fn tracks_on(
        &self,
        grid: &TimeGrid,
        model: &SveModel,
        inner_budget: usize,
        hstars: &[Vec<f64>],
    ) -> Result<(NestedTracks, Vec<Vec<f64>>)> {
        let mut tracks: Option<NestedTracks> = None;
        let mut q = vec![Vec::new(); hstars.len()];
        for (first, count) in self.chunks() {
            let batch = self.simulate_chunk(grid, first, count)?;
            let t = NestedTracks::build(&batch, model, &self.cfg.payoff, inner_budget)?;
            match tracks.as_mut() {
                Some(all) => all.extend(t)?,
                None => tracks = Some(t),
            }
            for (qi, h) in q.iter_mut().zip(hstars) {
                qi.extend(cell_terms(&batch, model, h)?);
            }
        }
        let tracks = tracks.ok_or_else(|| Error::Config("n_paths must be positive".into()))?;
        Ok((tracks, q))
    }
}

pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn summary_line(parameters: &str, e: &Estimate) -> String {
    if parameters.is_empty() {
        format!("{}: {:.6} +/- {:.6}", e.estimator, e.value, e.std_error)
    } else {
        format!("{} [{parameters}]: {:.6} +/- {:.6}", e.estimator, e.value, e.std_error)
    }
}

fn run_listed(runner: &Runner, command: &str) -> Result<(StudyResult, Vec<(String, String, Estimate)>)> {
    let cfg = runner.config();
    let mut result = StudyResult::new(Provenance::new(cfg, command)?);
    let mut primary = Vec::new();
    for est in &cfg.estimators {
        let start = Instant::now();
        let rows = runner.run_estimator(est)?;
        let ms = elapsed_ms(start);
        for (i, (params, e)) in rows.iter().enumerate() {
            result.push(&cfg.name, params, e, ms);
            result.summary.push(summary_line(params, e));
            if i == 0 {
                primary.push((est.tag().to_string(), params.clone(), e.clone()));
            }
        }
    }
    Ok((result, primary))
}

/// Runs the single configured estimator.
pub fn run_greek(runner: &Runner) -> Result<StudyResult> {
    let n = runner.config().estimators.len();
    if n != 1 {
        return Err(Error::Config(format!("greek needs exactly one estimator, got {n}")));
    }
    Ok(run_listed(runner, "greek")?.0)
}

/// Runs every configured estimator on shared seeds and adds one row per pair:
/// estimator `a~b`, value `a - b`, the combined standard error, and
/// `z=|a - b|/SE;disagree=<z > 3>` as parameters.
pub fn run_compare(runner: &Runner) -> Result<StudyResult> {
    let n = runner.config().estimators.len();
    if n < 2 {
        return Err(Error::Config(format!("compare needs at least two estimators, got {n}")));
    }
    let (mut result, primary) = run_listed(runner, "compare")?;
    let labels: Vec<String> = primary
        .iter()
        .enumerate()
        .map(|(i, (tag, _, _))| {
            if primary.iter().filter(|(t, _, _)| t == tag).count() > 1 {
                format!("{tag}#{i}")
            } else {
                tag.clone()
            }
        })
        .collect();
    let name = runner.config().name.clone();
    for i in 0..primary.len() {
        for j in i + 1..primary.len() {
            let (a, b) = (&primary[i].2, &primary[j].2);
            let se = combined_se(a.std_error, b.std_error);
            let z = a.z_score(b);
            let disagree = z > DISAGREEMENT_Z;
            let label = format!("{}~{}", labels[i], labels[j]);
            let pair = Estimate {
                estimator: label.clone(),
                value: a.value - b.value,
                std_error: se,
                n_paths: a.n_paths.min(b.n_paths),
                seed: a.seed,
                diagnostics: Diagnostics::default(),
            };
            let params = format!("z={z:.4};disagree={disagree}");
            result.push(&name, &params, &pair, 0);
            let flag = if disagree { "DISAGREE" } else { "ok" };
            result.summary.push(format!("{label}: |delta|/SE = {z:.3} {flag}"));
            if disagree {
                result.disagreements.push(format!("{label}: z = {z:.3}"));
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub provenance: Provenance,
    pub n_paths: usize,
    pub steps: usize,
    pub terminal_mean: f64,
    pub terminal_variance: f64,
}

/// Simulates every path, writes the dump to `out` and returns the terminal moments
/// of the first coordinate.
pub fn run_simulate(runner: &Runner, out: &Path) -> Result<SimulateSummary> {
    let cfg = runner.config();
    let batch = runner.simulate_chunk(runner.grid(), 0, cfg.n_paths)?;
    save_batch(&batch, out)?;
    let (terminal_mean, terminal_variance) = batch.terminal_moments();
    Ok(SimulateSummary {
        provenance: Provenance::new(cfg, "simulate")?,
        n_paths: cfg.n_paths,
        steps: runner.grid().steps(),
        terminal_mean,
        terminal_variance,
    })
}
