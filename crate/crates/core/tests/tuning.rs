use smcal::tuning::{fold_assignment, AlphaGrid, Criterion, LambdaGrid};
use smcal::{
    contrast_weights, cross_validate, fit_regime, generate, Baseline, Error, FitConfig, Init, Method, PairwiseProblem,
    PropensityModel, Scenario, ScenarioSpec, StepSize, Tuning, TuningSpec,
};

fn small_spec() -> TuningSpec {
    TuningSpec {
        lambda_grid: LambdaGrid::Relative { count: 3, min_ratio: 0.3 },
        alpha_grid: AlphaGrid::Scaled(vec![1.0, 4.0]),
        folds: 4,
        criterion: Criterion::Concordance,
        fit: FitConfig { step: StepSize::Backtracking, ..Default::default() },
    }
}

fn problem(seed: u64) -> (smcal::Dataset, smcal::ContrastWeights) {
    let (data, _) = generate(&ScenarioSpec::new(Scenario::LinearUniform, 80, seed).with_d(6)).unwrap();
    let w = contrast_weights(&data, &PropensityModel::Constant(0.5), &Baseline::ControlMean).unwrap();
    (data, w)
}

#[test]
fn single_cell_grid_returns_that_cell() {
    let (data, w) = problem(1);
    let spec = TuningSpec {
        lambda_grid: LambdaGrid::Absolute(vec![0.02]),
        alpha_grid: AlphaGrid::Absolute(vec![3.0]),
        ..small_spec()
    };
    let cv = cross_validate(&data, &w, &spec, 5).unwrap();
    assert_eq!((cv.lambda, cv.alpha), (0.02, 3.0));
    assert_eq!(cv.table.len(), 1);
    assert_eq!(cv.table[0].fold_scores.len(), 4);
}

#[test]
fn selected_cell_scores_best_and_respects_lambda_max() {
    let (data, w) = problem(2);
    let spec = small_spec();
    let cv = cross_validate(&data, &w, &spec, 9).unwrap();
    assert_eq!(cv.table.len(), 6);
    let best = cv.table.iter().find(|c| c.lambda == cv.lambda && c.alpha == cv.alpha).unwrap();
    for cell in &cv.table {
        assert!(best.mean >= cell.mean);
    }
    let p = PairwiseProblem::new(data.x().to_owned(), w.w.clone(), cv.alpha, 0.0).unwrap();
    let lmax = smcal::optimizer::lambda_max(&p, Init::Both).unwrap();
    assert!(cv.lambda <= lmax * (1.0 + 1e-12));
    let again = cross_validate(&data, &w, &spec, 9).unwrap();
    assert_eq!(cv, again);
}

#[test]
fn folds_partition_and_balance() {
    for (n, k) in [(10, 2), (23, 5), (100, 7)] {
        let folds = fold_assignment(n, k, 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        let (lo, hi) = (folds.iter().map(Vec::len).min().unwrap(), folds.iter().map(Vec::len).max().unwrap());
        assert!(hi - lo <= 1);
    }
    assert_ne!(fold_assignment(30, 3, 1), fold_assignment(30, 3, 2));
}

#[test]
fn invalid_fold_counts_are_rejected() {
    let (data, w) = problem(3);
    let spec = TuningSpec { folds: 1, ..small_spec() };
    assert!(matches!(cross_validate(&data, &w, &spec, 0), Err(Error::InvalidConfig(_))));
    let tiny = data.subset(&[0, 1, 2, 3, 4]);
    let spec = TuningSpec { folds: 3, ..small_spec() };
    assert!(matches!(cross_validate(&tiny, &w.subset(&[0, 1, 2, 3, 4]), &spec, 0), Err(Error::FoldSize { .. })));
}

#[test]
fn ipw_criterion_and_hinge_baseline_run() {
    let (data, w) = problem(4);
    let spec = TuningSpec { criterion: Criterion::IpwValue(PropensityModel::Constant(0.5)), ..small_spec() };
    let fitted = fit_regime(&data, &w, Method::Smcal, &Tuning::CrossValidate(spec.clone()), 1).unwrap();
    assert!(fitted.cv.is_some());
    assert_eq!(fitted.regime.beta.len(), 6);
    let scal = fit_regime(&data, &w, Method::Scal, &Tuning::CrossValidate(spec), 1).unwrap();
    assert_eq!(scal.regime.alpha, 0.0);
    assert!(scal.cv.unwrap().table.iter().all(|c| c.alpha == 1.0));
}

#[test]
fn full_shrinkage_leaves_anchor_only() {
    let (data, w) = problem(5);
    let tuning = Tuning::Fixed { lambda: 1e9, alpha: 2.0, fit: FitConfig::default() };
    let fitted = fit_regime(&data, &w, Method::Smcal, &tuning, 0).unwrap();
    assert!(fitted.regime.beta[1..].iter().all(|b| *b == 0.0));
    assert_eq!(fitted.regime.lambda, 1e9);
}

#[test]
fn cv_table_exports_csv() {
    let (data, w) = problem(6);
    let cv = cross_validate(&data, &w, &small_spec(), 2).unwrap();
    let mut buf = Vec::new();
    cv.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,alpha,fold1,fold2,fold3,fold4,mean");
    assert_eq!(lines.count(), 6);
}
