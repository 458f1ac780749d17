use ndarray::Array2;
use rand::Rng as _;
use smcal::rng::rng_from_seed;
use smcal::{bootstrap_value, bootstrap_value_diff, ipw_value, Dataset, Error, PropensityModel, Regime};

/// `Y = 1 + 0.5 A + noise`, so treating everyone beats treating no one by 0.5.
fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let a: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let y = a.iter().map(|&ai| 1.0 + 0.5 * ai as f64 + rng.random_range(-1.0..1.0)).collect();
    Dataset::new(y, a, x).unwrap()
}

fn treat_all() -> Regime {
    Regime::new(vec![1.0, 0.0], -10.0)
}

fn treat_none() -> Regime {
    Regime::new(vec![1.0, 0.0], 10.0)
}

#[test]
fn matching_regime_doubles_the_mean() {
    let data = synthetic(50, 1);
    let everyone_as_observed: f64 = {
        let v: f64 = data.y().iter().sum();
        2.0 * v / 50.0
    };
    // treat_all matches the treated, treat_none the controls; together they cover everyone.
    let p = PropensityModel::Constant(0.5);
    let sum = ipw_value(&data, &p, &treat_all()).unwrap() + ipw_value(&data, &p, &treat_none()).unwrap();
    assert!((sum - everyone_as_observed).abs() < 1e-12);
}

#[test]
fn bootstrap_is_reproducible() {
    let data = synthetic(80, 2);
    let p = PropensityModel::Constant(0.5);
    let a = bootstrap_value_diff(&data, &p, &treat_all(), &treat_none(), 300, 80, 11).unwrap();
    let b = bootstrap_value_diff(&data, &p, &treat_all(), &treat_none(), 300, 80, 11).unwrap();
    assert_eq!(a, b);
    let c = bootstrap_value_diff(&data, &p, &treat_all(), &treat_none(), 300, 80, 12).unwrap();
    assert_ne!(a, c);
    assert!(a.ci_low <= a.value && a.value <= a.ci_high);
}

#[test]
fn empirical_propensity_resamples_retry_or_fail() {
    // Two treated subjects among ten: some resamples contain no treated subject.
    let mut data = synthetic(10, 3);
    data = Dataset::new(data.y().to_vec(), vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0], data.x().to_owned()).unwrap();
    let est = bootstrap_value(&data, &PropensityModel::Empirical, &treat_all(), 200, 10, 5).unwrap();
    assert!(est.retries > 0);
    let one = Dataset::new(vec![1.0, 2.0], vec![1, 0], data.x().slice(ndarray::s![..2, ..]).to_owned()).unwrap();
    let err = bootstrap_value(&one, &PropensityModel::Empirical, &treat_all(), 50, 1, 5).unwrap_err();
    assert!(matches!(err, Error::Bootstrap { .. }));
}

#[test]
fn too_few_draws_rejected() {
    let data = synthetic(20, 4);
    assert!(bootstrap_value(&data, &PropensityModel::Constant(0.5), &treat_all(), 1, 20, 0).is_err());
}
