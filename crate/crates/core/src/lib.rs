//! Conditional average treatment effect estimation from a large confounded
//! observational sample and a small randomized sample.

pub mod baselines;
pub mod cornet;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod train;

pub use data::{load_csv, write_csv, CombinedData, TreatmentDataset};
pub use datagen::{DgpConfig, Scenario, SyntheticTruth};
pub use error::{Error, Result};
pub use estimator::{fit_estimators, Estimator, FitSettings, FittedModel};
pub use experiment::{load_experiment, run_experiment, ExperimentSpec, RunRecord};
pub use net::{LayerStack, Representation};
pub use train::NetConfig;
