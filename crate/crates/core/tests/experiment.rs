use volterra_sens::experiment::{
    csv_string, run_compare, run_greek, run_study, with_threads, write_artifacts, Runner, CSV_COLUMNS,
};
use volterra_sens::model::{
    BuiltinOverrides, DirectionConfig, EstimatorConfig, ExperimentConfig, GridConfig, ModelConfig, PayoffSpec,
    StudyConfig,
};
use volterra_sens::Error;

fn config(model: &str, estimators: Vec<EstimatorConfig>) -> ExperimentConfig {
    ExperimentConfig {
        name: "it".into(),
        n_paths: 400,
        seed: 9,
        grid: GridConfig {
            t0: 0.0,
            t_end: 1.0,
            steps: 16,
        },
        model: ModelConfig::builtin(model),
        payoff: PayoffSpec::Identity,
        direction: DirectionConfig::PowerLaw {
            gamma: 1.0,
            amplitude: vec![1.0],
        },
        second_direction: None,
        estimators,
        study: None,
    }
}

fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(a, _)| a).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn chunking_does_not_change_results() {
    let cfg = config(
        "tanh-drift",
        vec![
            EstimatorConfig::Bel { control_variate: true },
            EstimatorConfig::Fractional {
                alpha: 0.1,
                inner_budget: 4,
                variant: Default::default(),
            },
            EstimatorConfig::Fd { epsilon: 1e-3 },
            EstimatorConfig::ChainRule,
        ],
    );
    let whole = Runner::new(&cfg).unwrap();
    let split = Runner::new(&cfg).unwrap().with_chunk_size(37);
    for est in &cfg.estimators {
        assert_eq!(whole.run_estimator(est).unwrap(), split.run_estimator(est).unwrap(), "{est:?}");
    }
}

#[test]
fn greek_needs_exactly_one_estimator() {
    let two = config(
        "gaussian",
        vec![EstimatorConfig::Bel { control_variate: false }, EstimatorConfig::ChainRule],
    );
    assert!(matches!(run_greek(&Runner::new(&two).unwrap()), Err(Error::Config(_))));
    let one = config("gaussian", vec![EstimatorConfig::Bel { control_variate: false }]);
    let r = run_greek(&Runner::new(&one).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.rows[0].std_error > 0.0);
    assert!((r.rows[0].value - 1.0).abs() < 4.0 * r.rows[0].std_error);
}

#[test]
fn compare_adds_pairwise_rows() {
    let mut cfg = config(
        "tanh-drift",
        vec![
            EstimatorConfig::Bel { control_variate: true },
            EstimatorConfig::Fd { epsilon: 1e-3 },
            EstimatorConfig::ChainRule,
        ],
    );
    cfg.payoff = PayoffSpec::Sin;
    cfg.n_paths = 4000;
    let r = run_compare(&Runner::new(&cfg).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 6);
    let pairs: Vec<_> = r.rows.iter().filter(|x| x.estimator.contains('~')).collect();
    assert_eq!(pairs.len(), 3);
    assert_eq!(pairs[0].estimator, "bel~fd");
    assert!(r.disagreements.is_empty(), "{:?}", r.rows);
    let single = config("gaussian", vec![EstimatorConfig::ChainRule]);
    assert!(matches!(run_compare(&Runner::new(&single).unwrap()), Err(Error::Config(_))));
}

#[test]
fn invalid_hypotheses_are_config_errors() {
    let mut cfg = config(
        "gaussian",
        vec![EstimatorConfig::Fractional {
            alpha: 0.3,
            inner_budget: 4,
            variant: Default::default(),
        }],
    );
    cfg.payoff = PayoffSpec::AbsPower {
        center: 0.0,
        beta: 0.5,
    };
    match Runner::new(&cfg) {
        Err(Error::Config(msg)) => assert!(msg.contains("beta/2"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_has_fixed_header_and_sidecar() {
    let cfg = config("gaussian", vec![EstimatorConfig::Bel { control_variate: false }]);
    let r = run_greek(&Runner::new(&cfg).unwrap()).unwrap();
    let csv = csv_string(&r).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let side = write_artifacts(&r, &out).unwrap();
    assert_eq!(side, dir.path().join("r.json"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
    assert_eq!(json["provenance"]["master_seed"], 9);
    assert_eq!(json["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn studies_are_reproducible_across_thread_counts() {
    let mut cfg = config("tanh-drift", vec![]);
    cfg.study = Some(StudyConfig::AlphaSweep {
        alphas: vec![0.1, 0.2],
        inner_budget: 4,
    });
    let run = |threads| {
        let r = with_threads(threads, || run_study(&Runner::new(&cfg).unwrap(), None))
            .unwrap()
            .unwrap();
        without_timing(&csv_string(&r).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn study_kind_must_match() {
    let mut cfg = config("gaussian", vec![]);
    cfg.study = Some(StudyConfig::VarianceProfile {
        scales: vec![1.0, 2.0],
    });
    let runner = Runner::new(&cfg).unwrap();
    assert!(matches!(run_study(&runner, Some("alpha_sweep")), Err(Error::Config(_))));
    let r = run_study(&runner, Some("variance_profile")).unwrap();
    let sds: Vec<f64> = r.rows_of("weight_std").map(|x| x.value).collect();
    assert_eq!(sds.len(), 2);
    // The weight is linear in the direction.
    assert!((sds[1] / sds[0] - 2.0).abs() < 1e-12);
}

#[test]
fn maturity_study_reports_a_slope_row() {
    let mut cfg = config("gaussian", vec![]);
    cfg.model = ModelConfig::Builtin {
        name: "gaussian".into(),
        overrides: BuiltinOverrides {
            hurst: Some(0.1),
            ..Default::default()
        },
    };
    cfg.direction = DirectionConfig::PowerLaw {
        gamma: 0.7,
        amplitude: vec![1.0],
    };
    cfg.study = Some(StudyConfig::MaturityScaling {
        horizons: vec![0.25, 0.5, 1.0],
        alpha: 0.2,
        inner_budget: 4,
    });
    let r = run_study(&Runner::new(&cfg).unwrap(), None).unwrap();
    let slope = r.rows_of("slope").next().unwrap();
    assert_eq!(slope.parameters, "predicted=0.2");
    assert!(slope.value.is_finite());
    assert_eq!(r.rows_of("fractional").count(), 3);
}
