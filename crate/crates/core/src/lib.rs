//! Smoothed concordance-assisted learning of linear treatment regimes.
//!
//! A regime `d(x) = 1(beta' x > c)` is estimated in two steps. First `beta`
//! minimizes a sigmoid-smoothed pairwise concordance loss with an L1 penalty,
//! one coordinate pinned to `+-1` for identifiability, by proximal coordinate
//! descent. Then `c` maximizes the weighted count of treated subjects with
//! positive estimated contrast.
//!
//! ```no_run
//! use smcal::{contrast_weights, fit_regime, Baseline, Method, PropensityModel, Tuning, TuningSpec};
//!
//! # fn main() -> smcal::Result<()> {
//! let data = smcal::load_dataset("trial.csv")?;
//! let w = contrast_weights(&data, &PropensityModel::Constant(0.5), &Baseline::ControlMean)?;
//! let fitted = fit_regime(&data, &w, Method::Smcal, &Tuning::CrossValidate(TuningSpec::default()), 7)?;
//! println!("{}", fitted.regime.to_json()?);
//! # Ok(())
//! # }
//! ```

pub mod concordance;
pub mod data;
pub mod error;
mod kernels;
pub mod optimizer;
pub mod regime;
pub mod rng;
pub mod simulation;
pub mod smoothing;
pub mod tuning;

pub use concordance::PairwiseProblem;
pub use data::{contrast_weights, load_dataset, Baseline, ContrastWeights, Dataset, PropensityModel, Regime};
pub use error::{Error, Result};
pub use optimizer::{auto_step, fit_beta, soft_threshold, FitConfig, FitResult, Init, StepSize};
pub use regime::{bootstrap_value, bootstrap_value_diff, decide, fit_threshold, ipw_value, ValueEstimate};
pub use simulation::{generate, run_replications, Scenario, ScenarioSpec, SimulationReport, TruthOracle};
pub use smoothing::SmoothingKernel;
pub use tuning::{cross_validate, fit_regime, Method, Tuning, TuningSpec};
