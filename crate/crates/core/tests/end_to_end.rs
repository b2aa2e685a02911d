//! Small deconvolution run through the public API: files, closed forms and
//! the warm-start chain.

use regopt::datagen::{load_dataset, save_dataset, Split};
use regopt::estimators::risk_closed_form;
use regopt::experiment::{
    estimate_moments, evaluate_map, fit_optimal, load_map, save_map, DeconvSetup, FitOptions, OptimalMethod,
};
use regopt::trainer::{warm_start_chain, TrainConfig, TrainingProblem};

fn setup() -> DeconvSetup {
    DeconvSetup {
        n: 30,
        halfwidth: 3,
        train_size: 600,
        test_size: 300,
        seed: 4,
        ..DeconvSetup::default()
    }
}

#[test]
fn datasets_and_maps_survive_the_disk() {
    let s = setup();
    let a = s.operator().unwrap();
    let train = s.generate(Split::Train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.rgds");
    save_dataset(&path, &train).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!((back.x(), back.y()), (train.x(), train.y()));
    assert_eq!(back.meta, train.meta);

    let p = estimate_moments(&train, &a, Some(&s.noise_covariance().unwrap())).unwrap();
    let fit = fit_optimal(&p, OptimalMethod::Lav, &FitOptions::default()).unwrap();
    let path = dir.path().join("lav.rgmp");
    save_map(&path, "lav", &fit.map).unwrap();
    let (label, map) = load_map(&path).unwrap();
    assert_eq!(label, "lav");
    assert_eq!(map, fit.map);
}

#[test]
fn closed_forms_order_by_model_class() {
    let s = setup();
    let a = s.operator().unwrap();
    let train = s.generate(Split::Train).unwrap();
    let test = s.generate(Split::Test).unwrap();
    let p = estimate_moments(&train, &a, Some(&s.noise_covariance().unwrap())).unwrap();
    let opts = FitOptions {
        quad_pd_rel_tol: 0.0,
        ..FitOptions::default()
    };
    let risk = |m| {
        let fit = fit_optimal(&p, m, &opts).unwrap();
        let eval = evaluate_map(&fit.map, &train, &test).unwrap();
        assert!(eval.test.sum_of_squares.is_finite());
        risk_closed_form(&p, &fit.map).unwrap().total()
    };
    let (aff, lav, quad) = (risk(OptimalMethod::Lmmse), risk(OptimalMethod::Lav), risk(OptimalMethod::Quad));
    let slack = 1e-9 * aff;
    assert!(aff <= lav + slack && lav <= quad + slack, "{aff} {lav} {quad}");
}

#[test]
fn chain_handoffs_keep_the_loss() {
    let s = setup();
    let a = s.operator().unwrap();
    let train = s.generate(Split::Train).unwrap();
    let problem = TrainingProblem::new(&train, &a).unwrap();
    let config = TrainConfig {
        epochs: 3,
        initial_lr: 1e-3,
        ..TrainConfig::default()
    };
    let run = warm_start_chain(&problem, &config, None).unwrap();
    assert_eq!(run.traces.len(), 4);
    for pair in run.traces.windows(2) {
        let (prev, next) = (pair[0].final_loss, pair[1].initial_loss);
        assert!((prev - next).abs() <= 1e-8 * prev, "{:?} -> {:?}: {prev} vs {next}", pair[0].variant, pair[1].variant);
    }
    assert!(run.traces.iter().all(|t| t.final_loss.is_finite()));
}
