//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use libm::erfc;
use statrs::function::gamma::gamma;
use volterra_sens::direction::{apply_forward, preimage, DirectionSpec};
use volterra_sens::estimators::{additive_samples, Estimate};
use volterra_sens::experiment::{csv_string, run_study, with_threads, write_artifacts, Runner, StudyResult};
use volterra_sens::frac::{frac_derivative_at_start_increments, frac_derivative_at_start_representation, MartingaleTrack};
use volterra_sens::kernel::KernelSpec;
use volterra_sens::model::{
    BuiltinOverrides, DirectionConfig, EstimatorConfig, ExperimentConfig, GridConfig, InitialCurve, ModelConfig,
    PayoffSpec, ScalarMap, StudyConfig, SveModel,
};
use volterra_sens::path::simulate;
use volterra_sens::resolvent::ResolventSpec;
use volterra_sens::rng::SeedSpec;
use volterra_sens::special::mittag_leffler;
use volterra_sens::TimeGrid;

const Z: f64 = 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn builtin(name: &str, overrides: BuiltinOverrides) -> ModelConfig {
    ModelConfig::Builtin {
        name: name.into(),
        overrides,
    }
}

fn hurst(h: f64) -> BuiltinOverrides {
    BuiltinOverrides {
        hurst: Some(h),
        ..Default::default()
    }
}

fn power_law(gamma: f64) -> DirectionConfig {
    DirectionConfig::PowerLaw {
        gamma,
        amplitude: vec![1.0],
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    name: &str,
    model: ModelConfig,
    steps: usize,
    n_paths: usize,
    seed: u64,
    payoff: PayoffSpec,
    direction: DirectionConfig,
    estimators: Vec<EstimatorConfig>,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        n_paths,
        seed,
        grid: GridConfig {
            t0: 0.0,
            t_end: 1.0,
            steps,
        },
        model,
        payoff,
        direction,
        second_direction: None,
        estimators,
        study: None,
    }
}

fn first_estimate(cfg: &ExperimentConfig) -> Estimate {
    let runner = Runner::new(cfg).expect("valid configuration");
    runner.run_estimator(&cfg.estimators[0]).expect("estimator runs").remove(0).1
}

fn describe(e: &Estimate, target: f64) -> String {
    format!(
        "{} = {:.5} +/- {:.5}, target {:.5}, z = {:.2}",
        e.estimator,
        e.value,
        e.std_error,
        target,
        e.z_to(target)
    )
}

fn c1() -> Outcome {
    let cfg = config(
        "c1",
        builtin("gaussian", hurst(0.25)),
        256,
        100_000,
        101,
        PayoffSpec::Identity,
        power_law(1.0),
        vec![EstimatorConfig::Bel { control_variate: false }],
    );
    let start = Instant::now();
    let e = with_threads(1, || first_estimate(&cfg)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        e.z_to(1.0) <= Z && secs < 120.0,
        format!("{}, {secs:.1} s on one thread (limit 120 s)", describe(&e, 1.0)),
    )
}

fn c2() -> Outcome {
    let model = builtin(
        "gaussian",
        BuiltinOverrides {
            hurst: Some(0.25),
            initial: Some(InitialCurve::Constant { value: vec![0.5] }),
            ..Default::default()
        },
    );
    let cfg = config(
        "c2",
        model,
        256,
        100_000,
        102,
        PayoffSpec::Square,
        power_law(1.0),
        vec![EstimatorConfig::Bel { control_variate: false }],
    );
    let e = first_estimate(&cfg);
    outcome(e.z_to(1.0) <= Z, describe(&e, 1.0))
}

/// Derivative of `E[X_T]` for `X = x + K*(-kappa X) + K*dW` along `h = K(., t0)`:
/// `Gamma(a) T^(a-1) E_{a,a}(-kappa Gamma(a) T^a)` with `a = H + 1/2`.
fn additive_target(h: f64, kappa: f64, horizon: f64) -> f64 {
    let a = h + 0.5;
    let g = gamma(a);
    g * horizon.powf(a - 1.0) * mittag_leffler(a, a, -kappa * g * horizon.powf(a)).unwrap()
}

fn c3() -> Outcome {
    let h = 0.25;
    let mut details = Vec::new();
    let mut pass = true;
    for (kappa, seed) in [(1.0, 103), (0.0, 104)] {
        let overrides = BuiltinOverrides {
            hurst: Some(h),
            kappa: Some(kappa),
            ..Default::default()
        };
        let cfg = config(
            "c3",
            builtin("additive-ou", overrides),
            128,
            100_000,
            seed,
            PayoffSpec::Identity,
            power_law(h),
            vec![EstimatorConfig::Additive { u: None }],
        );
        let target = additive_target(h, kappa, 1.0);
        let e = first_estimate(&cfg);
        pass &= e.z_to(target) <= Z;
        details.push(format!("kappa={kappa}: {}", describe(&e, target)));
    }

    // Truncations h^delta = (max(delta, t - t0))^(H - 1/2) on common paths.
    let model = volterra_sens::model::builtin("additive-ou", &hurst(h)).unwrap();
    let sve: SveModel = model.curve_model().clone();
    let grid = TimeGrid::unit(128).unwrap();
    let batch = simulate(&sve, &grid, 40_000, SeedSpec::new(105)).unwrap();
    let base_dir = DirectionSpec::power_law(h, vec![1.0], h, None).unwrap();
    let base = additive_samples(&batch, &sve, &PayoffSpec::Identity, &base_dir, None).unwrap();
    let deltas = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let mut diffs = Vec::new();
    for delta in deltas {
        let dir = DirectionSpec::truncated_power_law(h, vec![1.0], delta, h, None).unwrap();
        let s = additive_samples(&batch, &sve, &PayoffSpec::Identity, &dir, None).unwrap();
        let d: Vec<f64> = s
            .phi
            .iter()
            .zip(s.weight.iter().zip(&base.weight))
            .map(|(phi, (w, w0))| phi * (w - w0))
            .collect();
        let e = Estimate::from_samples("difference", &d, 105);
        diffs.push((delta, e.value.abs(), e.std_error));
    }
    let shrinking = diffs.windows(2).all(|w| w[1].1 <= w[0].1 + 2.0 * w[1].2.max(w[0].2));
    let converged = diffs.last().unwrap().1 < diffs[0].1;
    pass &= shrinking && converged;
    let table: Vec<String> = diffs
        .iter()
        .map(|(d, v, s)| format!("delta={d}: |diff|={v:.5}+/-{s:.5}"))
        .collect();
    details.push(format!("truncation table [{}]", table.join(", ")));
    outcome(pass, details.join("; "))
}

fn c4() -> Outcome {
    let mut cfg = config(
        "c4",
        builtin("tanh-drift", BuiltinOverrides::default()),
        128,
        10_000,
        106,
        PayoffSpec::Identity,
        power_law(1.0),
        vec![],
    );
    cfg.study = Some(StudyConfig::AlphaSweep {
        alphas: vec![0.05, 0.1, 0.2],
        inner_budget: 64,
    });
    let start = Instant::now();
    let r = run_study(&Runner::new(&cfg).unwrap(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let bel = r.rows_of("bel").next().unwrap().clone();
    let mut pass = secs < 900.0;
    let mut parts = vec![format!("bel = {:.5} +/- {:.5}", bel.value, bel.std_error)];
    for row in r.rows_of("fractional") {
        let z = (row.value - bel.value).abs() / (row.std_error.powi(2) + bel.std_error.powi(2)).sqrt();
        pass &= z <= Z;
        parts.push(format!("[{}] {:.5} +/- {:.5} z={z:.2}", row.parameters, row.value, row.std_error));
    }
    parts.push(format!("{secs:.0} s (limit 900 s)"));
    outcome(pass, parts.join("; "))
}

fn c5() -> Outcome {
    let cfg = config(
        "c5",
        builtin("gaussian", hurst(0.1)),
        128,
        20_000,
        107,
        PayoffSpec::Identity,
        DirectionConfig::Constant { level: vec![1.0] },
        vec![EstimatorConfig::Fractional {
            alpha: 0.3,
            inner_budget: 64,
            variant: Default::default(),
        }],
    );
    let e = first_estimate(&cfg);
    outcome(e.z_to(1.0) <= Z, describe(&e, 1.0))
}

fn c6() -> Outcome {
    let mut cfg = config(
        "c6",
        builtin("gaussian", BuiltinOverrides::default()),
        128,
        100_000,
        108,
        PayoffSpec::Square,
        power_law(1.0),
        vec![EstimatorConfig::SecondOrder],
    );
    cfg.second_direction = Some(power_law(1.0));
    let e = first_estimate(&cfg);
    outcome(e.z_to(2.0) <= Z, describe(&e, 2.0))
}

fn c7() -> Outcome {
    let payoff = PayoffSpec::ExpCall { strike: 1.0 };
    let rough = EstimatorConfig::RoughVol { control_variate: true };
    let fd = EstimatorConfig::Fd { epsilon: 1e-3 };
    let cfg = config(
        "c7",
        builtin("rough-vol-1d", BuiltinOverrides::default()),
        64,
        40_000,
        109,
        payoff.clone(),
        power_law(1.0),
        vec![rough.clone(), fd.clone()],
    );
    let runner = Runner::new(&cfg).unwrap();
    let a = runner.run_estimator(&rough).unwrap().remove(0).1;
    let b = runner.run_estimator(&fd).unwrap().remove(0).1;
    let z = a.z_score(&b);
    let control = BuiltinOverrides {
        zeta: Some(ScalarMap::constant(0.2)),
        ..Default::default()
    };
    let cfg0 = config(
        "c7-control",
        builtin("rough-vol-1d", control),
        64,
        40_000,
        110,
        payoff,
        power_law(1.0),
        vec![rough],
    );
    let c = first_estimate(&cfg0);
    outcome(
        z <= Z && c.z_to(0.0) <= Z,
        format!(
            "rough_vol = {:.6} +/- {:.6}, fd = {:.6} +/- {:.6}, z = {z:.2}; constant zeta: {}",
            a.value,
            a.std_error,
            b.value,
            b.std_error,
            describe(&c, 0.0)
        ),
    )
}

fn c8() -> Outcome {
    let mut parts = Vec::new();
    // Mittag-Leffler reductions.
    let mut ml_err: f64 = 0.0;
    for i in 0..=40 {
        let x = 0.1 * i as f64;
        let checks = [
            (mittag_leffler(1.0, 1.0, -x).unwrap(), (-x).exp()),
            (mittag_leffler(2.0, 1.0, -x * x).unwrap(), x.cos()),
            (
                mittag_leffler(2.0, 2.0, -x * x).unwrap(),
                if x == 0.0 { 1.0 } else { x.sin() / x },
            ),
            (mittag_leffler(0.5, 1.0, -x).unwrap(), (x * x).exp() * erfc(x)),
            (
                mittag_leffler(1.0, 2.0, -x).unwrap(),
                if x == 0.0 { 1.0 } else { (1.0 - (-x).exp()) / x },
            ),
        ];
        for (got, want) in checks {
            ml_err = ml_err.max((got - want).abs() / want.abs().max(1e-300).max(1e-3));
        }
    }
    let ml_ok = ml_err <= 1e-10;
    parts.push(format!("Mittag-Leffler reductions max rel err {ml_err:.1e}"));

    // Resolvent identity residual under refinement.
    let mut res_ok = true;
    for h in [0.1, 0.25, 0.4] {
        let r = ResolventSpec::new(1.0, h).unwrap();
        let curve: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&n| r.identity_residual(&TimeGrid::unit(n).unwrap()).unwrap())
            .collect();
        res_ok &= curve.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!(
            "resolvent H={h} [{}]",
            curve.iter().map(|c| format!("{c:.1e}")).collect::<Vec<_>>().join(", ")
        ));
    }

    // Prefactor identity between the two fractional-derivative forms.
    let mut runner = TestRunner::new(PropConfig::with_cases(256));
    let worst = std::cell::Cell::new(0.0f64);
    let prop = runner.run(&prop::collection::vec(-5.0f64..5.0, 3..100), |values| {
        let n = values.len() - 1;
        let track = MartingaleTrack::new(TimeGrid::new(0.0, 1.0, n).unwrap(), values).unwrap();
        for alpha in [0.05, 0.2, 0.35, 0.45] {
            let inc = frac_derivative_at_start_increments(&track, alpha).unwrap();
            let rep = frac_derivative_at_start_representation(&track, alpha).unwrap();
            let rel = (inc - gamma(1.0 - alpha) * rep).abs() / inc.abs().max(1e-12);
            worst.set(worst.get().max(rel));
            prop_assert!(rel <= 1e-6);
        }
        Ok(())
    });
    let pref_ok = prop.is_ok();
    parts.push(format!("prefactor identity worst rel err {:.1e}", worst.get()));

    // Preimage round trip: forward map of the preimage against the direction.
    let h = 0.2;
    let k = KernelSpec::power_law(h).unwrap();
    let families = [
        DirectionSpec::constant(vec![1.0], h, Some(0.3)).unwrap(),
        DirectionSpec::power_law(1.0, vec![1.0], h, None).unwrap(),
        DirectionSpec::truncated_power_law(0.5, vec![1.0], 0.2, h, Some(0.3)).unwrap(),
    ];
    let mut rt_ok = true;
    for dir in &families {
        let curve: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&n| {
                let grid = TimeGrid::unit(n).unwrap();
                let hs = preimage(dir, &k, &grid).unwrap();
                let fwd = apply_forward(&hs, &k, &grid).unwrap();
                fwd.sup_distance(&dir.values(&k, &grid).unwrap(), n / 10)
            })
            .collect();
        rt_ok &= curve.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!(
            "round trip {:?} [{}]",
            dir.kind(),
            curve.iter().map(|c| format!("{c:.1e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    outcome(ml_ok && res_ok && pref_ok && rt_ok, parts.join("; "))
}

fn regularity_slope(payoff: PayoffSpec, seed: u64) -> StudyResult {
    let mut cfg = config(
        "c9",
        builtin("gaussian", BuiltinOverrides::default()),
        64,
        10_000,
        seed,
        payoff,
        power_law(1.0),
        vec![],
    );
    cfg.study = Some(StudyConfig::Regularity {
        inner_budget: 64,
        nodes: 8,
    });
    run_study(&Runner::new(&cfg).unwrap(), None).unwrap()
}

fn c9() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (beta, payoff, seed) in [
        (1.0, PayoffSpec::Identity, 111),
        (
            0.5,
            PayoffSpec::AbsPower {
                center: 0.0,
                beta: 0.5,
            },
            112,
        ),
    ] {
        let r = regularity_slope(payoff, seed);
        let s = r.rows_of("slope").next().unwrap();
        let ok = (s.value - beta).abs() <= 0.2;
        pass &= ok;
        parts.push(format!(
            "beta={beta}: slope {:.3} +/- {:.3} ({})",
            s.value,
            s.std_error,
            if ok { "ok" } else { "off" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c10() -> Outcome {
    let mut cfg = config(
        "c10",
        builtin("gaussian", hurst(0.1)),
        64,
        10_000,
        113,
        PayoffSpec::Identity,
        power_law(0.7),
        vec![],
    );
    cfg.study = Some(StudyConfig::MaturityScaling {
        horizons: vec![0.25, 0.5, 1.0],
        alpha: 0.2,
        inner_budget: 32,
    });
    let r = run_study(&Runner::new(&cfg).unwrap(), None).unwrap();
    let s = r.rows_of("slope").next().unwrap();
    let (gamma, hurst, beta) = (0.7, 0.1, 1.0);
    let predicted = gamma - 0.5 + hurst * (beta - 1.0);
    outcome(
        (s.value - predicted).abs() <= 0.3,
        format!("slope {:.4} +/- {:.4}, predicted {predicted:.4}", s.value, s.std_error),
    )
}

fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(a, _)| a).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

fn c11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut studies = Vec::new();
    let mut a = config(
        "c11-alpha",
        builtin("tanh-drift", BuiltinOverrides::default()),
        32,
        500,
        114,
        PayoffSpec::Sin,
        power_law(1.0),
        vec![],
    );
    a.study = Some(StudyConfig::AlphaSweep {
        alphas: vec![0.1, 0.2],
        inner_budget: 8,
    });
    studies.push(a.clone());
    let mut d = a.clone();
    d.name = "c11-delta".into();
    d.model = builtin("gaussian", hurst(0.1));
    d.payoff = PayoffSpec::Identity;
    d.direction = power_law(0.4);
    d.study = Some(StudyConfig::DeltaLimit {
        deltas: vec![0.25, 0.125],
        alpha: 0.3,
        inner_budget: 8,
    });
    studies.push(d);
    let mut v = a.clone();
    v.name = "c11-variance".into();
    v.study = Some(StudyConfig::VarianceProfile {
        scales: vec![0.5, 1.0, 2.0],
    });
    studies.push(v);
    let mut pass = true;
    let mut parts = Vec::new();
    for cfg in &studies {
        let mut outputs = Vec::new();
        for (i, threads) in [1usize, 2, 1].into_iter().enumerate() {
            let r = with_threads(threads, || run_study(&Runner::new(cfg).unwrap(), None))
                .unwrap()
                .unwrap();
            let out = dir.path().join(format!("{}-{i}.csv", cfg.name));
            let side = write_artifacts(&r, &out).unwrap();
            let csv = std::fs::read_to_string(&out).unwrap();
            assert_eq!(csv, csv_string(&r).unwrap());
            outputs.push((strip_timing(&csv), std::fs::read(side).unwrap()));
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        pass &= same;
        parts.push(format!(
            "{}: {}",
            cfg.name,
            if same { "identical" } else { "differs" }
        ));
    }
    outcome(pass, parts.join("; "))
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("C1", "gaussian linear payoff, BEL", c1),
        ("C2", "gaussian quadratic payoff, BEL", c2),
        ("C3", "additive-noise formula, kernel direction", c3),
        ("C4", "fractional vs BEL consistency", c4),
        ("C5", "constant direction, fractional", c5),
        ("C6", "second order", c6),
        ("C7", "rough-vol Greek vs CRN finite differences", c7),
        ("C8", "operator identities", c8),
        ("C9", "martingale regularity scaling", c9),
        ("C10", "gradient-bound maturity scaling", c10),
        ("C11", "reproducibility across thread counts", c11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {id} {title}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
