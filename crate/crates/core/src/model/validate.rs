//! Mechanical checks of every estimator's hypotheses.

use super::config::{DirectionConfig, EstimatorConfig, ExperimentConfig, StudyConfig};
use super::payoff::PayoffSpec;
use super::{Model, SveModel};
use crate::direction::Space;
use crate::estimators::additive::normalisation;
use crate::grid::TimeGrid;

const PROBES: usize = 64;
const PROBE_SEED: u64 = 0x5eed;

struct Context<'a> {
    grid: TimeGrid,
    model: Model,
    payoff: &'a PayoffSpec,
    hurst: Option<f64>,
}

/// Every violated hypothesis, in a deterministic order; empty when valid.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.n_paths < 2 {
        out.push(format!("n_paths must be at least 2, got {}", cfg.n_paths));
    }
    let grid = match cfg.grid.build() {
        Ok(g) => Some(g),
        Err(e) => {
            out.push(format!("grid: {e}"));
            None
        }
    };
    let model = match cfg.model.build() {
        Ok(m) => Some(m),
        Err(e) => {
            out.push(format!("model: {e}"));
            None
        }
    };
    if let Err(e) = cfg.payoff.validate() {
        out.push(format!("payoff: {e}"));
    }
    let (Some(grid), Some(model)) = (grid, model) else {
        return out;
    };
    for v in model.curve_model().coeffs.probe_violations(PROBES, PROBE_SEED) {
        out.push(format!("coefficients: {v}"));
    }
    if let Model::RoughVol(rv) = &model {
        let bad = (0..PROBES).any(|i| !rv.zeta.eval(-10.0 + 20.0 * i as f64 / PROBES as f64).is_finite());
        if bad || rv.zeta.sup_abs().is_none() {
            out.push("rough-vol: zeta must be bounded".into());
        }
    }
    let hurst = model.curve_model().kernel_sigma.hurst();
    let ctx = Context {
        grid,
        hurst,
        model,
        payoff: &cfg.payoff,
    };
    for est in &cfg.estimators {
        for v in check_estimator(&ctx, cfg, est) {
            out.push(format!("{}: {v}", est.tag()));
        }
    }
    if let Some(study) = &cfg.study {
        for v in check_study(&ctx, cfg, study) {
            out.push(format!("study {}: {v}", study.tag()));
        }
    }
    out
}

fn sve<'a>(ctx: &'a Context, what: &str, v: &mut Vec<String>) -> Option<&'a SveModel> {
    match &ctx.model {
        Model::Sve(m) => Some(m),
        Model::RoughVol(_) => {
            v.push(format!("{what} needs an SVE model; use the rough_vol estimator"));
            None
        }
    }
}

/// Builds the direction and reports membership in the space the estimator needs.
fn check_direction(
    ctx: &Context,
    dir: &DirectionConfig,
    alpha: Option<f64>,
    need: Need,
    v: &mut Vec<String>,
) {
    let Some(h) = ctx.hurst else {
        v.push("directions need a power-law or constant diffusion kernel".into());
        return;
    };
    match dir.build(h, alpha) {
        Err(e) => v.push(format!("direction: {e}")),
        Ok(spec) => match need {
            Need::CameronMartin if spec.space() != Space::CameronMartin => {
                v.push("direction not in the Cameron-Martin space H".into())
            }
            Need::Weighted(a) if !spec.admissible_for(a) => {
                v.push(format!("direction not in H_alpha for alpha = {a}"))
            }
            Need::FiniteStart => {
                let kernel = &ctx.model.curve_model().kernel_sigma;
                match spec.values(kernel, &ctx.grid) {
                    Ok(vals) if vals.values().iter().all(|x| x.is_finite()) => {}
                    _ => v.push("direction must be finite on the grid to bump the curve".into()),
                }
            }
            _ => {}
        },
    }
}

#[derive(Clone, Copy)]
enum Need {
    CameronMartin,
    Weighted(f64),
    SquareIntegrable,
    FiniteStart,
}

fn check_alpha(ctx: &Context, alpha: f64, v: &mut Vec<String>) {
    let beta = ctx.payoff.holder_beta();
    if !(alpha > 0.0 && alpha < beta / 2.0) {
        v.push(format!(
            "fractional order alpha = {alpha} must satisfy 0 < alpha < beta/2 = {}",
            beta / 2.0
        ));
    }
    if !ctx.payoff.is_state() {
        v.push("the fractional estimator needs a state payoff".into());
    }
}

fn check_budget(inner_budget: usize, v: &mut Vec<String>) {
    if inner_budget < 2 {
        v.push(format!("inner_budget must be at least 2, got {inner_budget}"));
    }
}

fn check_estimator(ctx: &Context, cfg: &ExperimentConfig, est: &EstimatorConfig) -> Vec<String> {
    let mut v = Vec::new();
    match est {
        EstimatorConfig::Bel { .. } => {
            sve(ctx, "bel", &mut v);
            check_direction(ctx, &cfg.direction, None, Need::CameronMartin, &mut v);
        }
        EstimatorConfig::Fractional {
            alpha,
            inner_budget,
            ..
        } => {
            sve(ctx, "fractional", &mut v);
            check_alpha(ctx, *alpha, &mut v);
            check_budget(*inner_budget, &mut v);
            check_direction(ctx, &cfg.direction, Some(*alpha), Need::Weighted(*alpha), &mut v);
        }
        EstimatorConfig::FractionalSingular {
            alpha,
            inner_budget,
            deltas,
        } => {
            sve(ctx, "fractional_singular", &mut v);
            check_alpha(ctx, *alpha, &mut v);
            check_budget(*inner_budget, &mut v);
            check_singular(ctx, &cfg.direction, *alpha, deltas, &mut v);
        }
        EstimatorConfig::Additive { u } => {
            if let Some(m) = sve(ctx, "additive", &mut v) {
                if m.coeffs.constant_sigma().is_none() {
                    v.push("the additive-noise formula needs a constant diffusion sigma".into());
                }
                if !m.kernels_coincide() {
                    v.push("the additive-noise formula needs K_b = K_sigma".into());
                }
                match normalisation(&m.kernel_sigma, &ctx.grid, u.as_ref()) {
                    Ok(z) if z != 0.0 && z.is_finite() => {}
                    _ => v.push("the normalising integral of the a-function vanishes".into()),
                }
            }
            if !ctx.payoff.is_state() {
                v.push("the additive-noise estimator needs a state payoff".into());
            }
            check_direction(ctx, &cfg.direction, None, Need::SquareIntegrable, &mut v);
        }
        EstimatorConfig::SecondOrder => {
            if let Some(m) = sve(ctx, "second_order", &mut v) {
                if m.dim() != 1 {
                    v.push("the second-order formula needs d = m = 1".into());
                }
            }
            check_direction(ctx, &cfg.direction, None, Need::CameronMartin, &mut v);
            match &cfg.second_direction {
                Some(g) => check_direction(ctx, g, None, Need::CameronMartin, &mut v),
                None => v.push("the second-order formula needs a second_direction".into()),
            }
        }
        EstimatorConfig::RoughVol { .. } => {
            match &ctx.model {
                Model::RoughVol(rv) => {
                    if !(rv.rho.abs() < 1.0) {
                        v.push(format!("rho_bar is not invertible for rho = {}", rv.rho));
                    }
                }
                Model::Sve(_) => v.push("rough_vol needs a rough-volatility model".into()),
            }
            check_direction(ctx, &cfg.direction, None, Need::CameronMartin, &mut v);
        }
        EstimatorConfig::Fd { epsilon } => {
            if !(*epsilon > 0.0 && epsilon.is_finite()) {
                v.push(format!("bump size epsilon must be positive, got {epsilon}"));
            }
            check_direction(ctx, &cfg.direction, None, Need::FiniteStart, &mut v);
        }
        EstimatorConfig::ChainRule => {
            sve(ctx, "chain_rule", &mut v);
            if !ctx.payoff.has_gradient() {
                v.push("the chain-rule oracle needs a payoff gradient".into());
            }
            check_direction(ctx, &cfg.direction, None, Need::FiniteStart, &mut v);
        }
    }
    v
}

fn check_singular(
    ctx: &Context,
    dir: &DirectionConfig,
    alpha: f64,
    deltas: &[f64],
    v: &mut Vec<String>,
) {
    match (dir, ctx.hurst) {
        (DirectionConfig::PowerLaw { gamma, .. }, Some(h)) => {
            let bound = 0.5 + h - alpha;
            if *gamma <= bound {
                v.push(format!("gamma = {gamma} must exceed 1/2 + H - alpha = {bound}"));
            } else {
                check_direction(ctx, dir, Some(alpha), Need::Weighted(alpha), v);
            }
        }
        _ => v.push("singular directions must be power laws against a power-law kernel".into()),
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        v.push("deltas must be a non-empty list of positive numbers".into());
    }
}

fn check_study(ctx: &Context, cfg: &ExperimentConfig, study: &StudyConfig) -> Vec<String> {
    let mut v = Vec::new();
    match study {
        StudyConfig::AlphaSweep {
            alphas,
            inner_budget,
        } => {
            sve(ctx, "alpha_sweep", &mut v);
            if alphas.is_empty() {
                v.push("alphas must not be empty".into());
            }
            check_budget(*inner_budget, &mut v);
            for a in alphas {
                check_alpha(ctx, *a, &mut v);
                check_direction(ctx, &cfg.direction, Some(*a), Need::Weighted(*a), &mut v);
            }
        }
        StudyConfig::MaturityScaling {
            horizons,
            alpha,
            inner_budget,
        } => {
            sve(ctx, "maturity_scaling", &mut v);
            if horizons.len() < 2 || horizons.iter().any(|t| !(*t > 0.0)) {
                v.push("horizons must hold at least two positive values".into());
            }
            check_budget(*inner_budget, &mut v);
            check_alpha(ctx, *alpha, &mut v);
            check_direction(ctx, &cfg.direction, Some(*alpha), Need::Weighted(*alpha), &mut v);
        }
        StudyConfig::DeltaLimit {
            deltas,
            alpha,
            inner_budget,
        } => {
            sve(ctx, "delta_limit", &mut v);
            check_alpha(ctx, *alpha, &mut v);
            check_budget(*inner_budget, &mut v);
            check_singular(ctx, &cfg.direction, *alpha, deltas, &mut v);
        }
        StudyConfig::VarianceProfile { scales } => {
            sve(ctx, "variance_profile", &mut v);
            if scales.is_empty() || scales.iter().any(|s| !s.is_finite()) {
                v.push("scales must be a non-empty list of finite numbers".into());
            }
            check_direction(ctx, &cfg.direction, None, Need::CameronMartin, &mut v);
        }
        StudyConfig::Regularity {
            inner_budget,
            nodes,
        } => {
            sve(ctx, "regularity", &mut v);
            check_budget(*inner_budget, &mut v);
            if !ctx.payoff.is_state() {
                v.push("regularity needs a state payoff".into());
            }
            if *nodes < 2 || *nodes > ctx.grid.steps() {
                v.push(format!("nodes must lie in [2, {}], got {nodes}", ctx.grid.steps()));
            }
        }
    }
    v
}
