mod common;

use common::instance;
use smcal::optimizer::{lambda_max, Branch, CoordinateDescent};
use smcal::{fit_beta, FitConfig, Init, PairwiseProblem, StepSize};

/// Weights that rise with `x0 + 0.5 x1`, so the best direction is known.
fn two_column_problem(n: usize, alpha: f64, lambda: f64, seed: u64) -> PairwiseProblem {
    let (x, noise) = instance(n, 2, seed);
    let w: Vec<f64> = (0..n).map(|i| x[[i, 0]] + 0.5 * x[[i, 1]] + 0.1 * noise[i]).collect();
    PairwiseProblem::new(x, w, alpha, lambda).unwrap()
}

#[test]
fn two_dimensional_fit_matches_grid_search() {
    for seed in 0..5 {
        let p = two_column_problem(40, 3.0, 0.01, seed);
        let fit = fit_beta(&p, &FitConfig { init: Init::Plus, ..Default::default() }).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let mut b = -4.0;
        while b <= 4.0 {
            let l = p.loss(&[1.0, b]).unwrap();
            if l < best.0 {
                best = (l, b);
            }
            b += 1e-3;
        }
        assert!((fit.beta[1] - best.1).abs() < 0.15, "seed {seed}: {} vs grid {}", fit.beta[1], best.1);
        assert!(fit.final_loss <= best.0 + 1e-6);
    }
}

#[test]
fn negative_anchor_branch_wins_on_negated_weights() {
    let p = two_column_problem(40, 3.0, 0.01, 3);
    let negated: Vec<f64> = p.w().iter().map(|w| -w).collect();
    let q = PairwiseProblem::new(p.x().to_owned(), negated, 3.0, 0.01).unwrap();
    let fit = fit_beta(&q, &FitConfig::default()).unwrap();
    assert_eq!(fit.init_branch, Branch::Minus);
    assert_eq!(fit.beta[0], -1.0);
    assert!(fit.beta[1] < 0.0);
    let plus = fit_beta(&q, &FitConfig { init: Init::Plus, ..Default::default() }).unwrap();
    assert!(fit.final_loss < plus.final_loss);
}

#[test]
fn every_update_is_non_increasing_under_auto_step() {
    let (x, w) = instance(25, 6, 8);
    for alpha in [0.5, 4.0] {
        let p = PairwiseProblem::new(x.clone(), w.clone(), alpha, 0.02).unwrap();
        for branch in [Branch::Plus, Branch::Minus] {
            let mut cd = CoordinateDescent::new(&p, branch, None).unwrap();
            let mut prev = p.loss(cd.beta()).unwrap();
            for _ in 0..20 {
                for k in 1..6 {
                    cd.update(k).unwrap();
                    let now = p.loss(cd.beta()).unwrap();
                    assert!(now <= prev + 1e-12, "alpha {alpha}: {now} > {prev}");
                    prev = now;
                }
                cd.refresh_margins();
            }
        }
    }
}

#[test]
fn backtracking_fit_is_monotone_and_agrees_with_auto() {
    let (x, w) = instance(30, 5, 12);
    let p = PairwiseProblem::new(x, w, 2.0, 0.05).unwrap();
    let auto = fit_beta(&p, &FitConfig { max_sweeps: 20_000, tol: 1e-9, ..Default::default() }).unwrap();
    let bt = fit_beta(&p, &FitConfig { step: StepSize::Backtracking, tol: 1e-9, ..Default::default() }).unwrap();
    assert!(auto.converged && bt.converged);
    assert!(bt.sweeps <= auto.sweeps);
    assert!((auto.final_loss - bt.final_loss).abs() < 1e-6, "{} vs {}", auto.final_loss, bt.final_loss);
    // Truncated runs never end above the starting loss, and longer runs never do worse.
    let start = p.loss(&[bt.beta[0], 0.0, 0.0, 0.0, 0.0]).unwrap();
    let mut prev = start;
    for sweeps in 1..10 {
        let cfg = FitConfig {
            step: StepSize::Backtracking,
            max_sweeps: sweeps,
            init: bt.init_branch.into(),
            ..Default::default()
        };
        let f = fit_beta(&p, &cfg).unwrap();
        assert!(f.final_loss <= prev + 1e-12);
        prev = f.final_loss;
    }
}

#[test]
fn lambda_at_maximum_keeps_starting_point() {
    let (x, w) = instance(30, 8, 2);
    let p = PairwiseProblem::new(x, w, 2.0, 0.0).unwrap();
    let lmax = lambda_max(&p, Init::Both).unwrap();
    let fit = fit_beta(&p.clone().with_lambda(lmax * 1.0001).unwrap(), &FitConfig::default()).unwrap();
    assert_eq!(fit.sweeps, 1);
    assert!(fit.converged);
    assert!(fit.beta[1..].iter().all(|b| *b == 0.0));
    let below = fit_beta(&p.with_lambda(lmax * 0.5).unwrap(), &FitConfig::default()).unwrap();
    assert!(below.beta[1..].iter().any(|b| *b != 0.0));
}

#[test]
fn huge_penalty_zeroes_every_free_coordinate() {
    let (x, w) = instance(20, 6, 5);
    let p = PairwiseProblem::new(x, w, 1.0, 1e9).unwrap();
    for step in [StepSize::Auto, StepSize::Backtracking] {
        let fit = fit_beta(&p, &FitConfig { step, ..Default::default() }).unwrap();
        assert!(fit.beta[1..].iter().all(|b| *b == 0.0));
        assert_eq!(fit.beta[0].abs(), 1.0);
    }
}

#[test]
fn margin_cache_tracks_fresh_margins() {
    let (x, w) = instance(40, 10, 6);
    let p = PairwiseProblem::new(x, w, 3.0, 0.001).unwrap();
    let mut cd = CoordinateDescent::new(&p, Branch::Plus, None).unwrap();
    for _ in 0..30 {
        for k in 1..10 {
            cd.update(k).unwrap();
        }
        assert!(cd.margin_drift() < 1e-10);
        assert!((cd.cached_loss() - p.loss(cd.beta()).unwrap()).abs() < 1e-10);
        cd.refresh_margins();
        assert_eq!(cd.margin_drift(), 0.0);
    }
}

#[test]
fn anchor_update_is_rejected() {
    let (x, w) = instance(10, 3, 1);
    let p = PairwiseProblem::new(x, w, 1.0, 0.0).unwrap().with_anchor(2).unwrap();
    let mut cd = CoordinateDescent::new(&p, Branch::Plus, None).unwrap();
    assert!(cd.update(2).is_err());
    assert!(cd.update(3).is_err());
    assert_eq!(cd.beta(), &[0.0, 0.0, 1.0]);
}

#[test]
fn fixed_seedless_fit_is_reproducible() {
    let (x, w) = instance(50, 6, 31);
    let p = PairwiseProblem::new(x, w, 2.0, 0.01).unwrap();
    let a = fit_beta(&p, &FitConfig::default()).unwrap();
    let b = fit_beta(&p, &FitConfig::default()).unwrap();
    assert_eq!(a, b);
}
