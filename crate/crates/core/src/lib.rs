//! Kernel-based random forests (KeRF).
//!
//! Randomized partition trees, finite forest and KeRF estimates, exact
//! connection kernels of infinite centred and uniform forests, and numerical
//! checks of the associated bias and proximity bounds.

pub mod data;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod kernel;
pub mod models;
pub mod persist;
pub mod quad;
pub mod report;
pub mod rng;
pub mod table;
pub mod theory;
pub mod tree;
pub mod verify;

pub use data::{check_unit_point, empirical_risk, split_train_test, Dataset};
pub use error::{Error, Result};
pub use forest::{Forest, ForestConfig, PredictMode};
pub use kernel::{AnalyticKernel, KernelFamily, Strategy};
pub use models::SyntheticModel;
pub use report::BoundReport;
pub use rng::RandomSource;
pub use table::{minmax_scale, MinMaxScaler, RawTable};
pub use tree::{build_tree, suggest_level, LevelPolicy, PartitionTree, TreeKind, TreeSpec};
pub use experiment::{
    convergence_curve, run_experiment, ConvergenceSpec, ConvergenceTable, Estimator, ExperimentSpec, RunReport,
};
pub use persist::SavedModel;
pub use verify::{run_suite, Suite, VerifyOptions};
