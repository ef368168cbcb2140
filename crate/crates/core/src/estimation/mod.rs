//! Treatment-effect estimation: base learners, meta-learners, overlap
//! diagnostics and the multi-seed runner.

pub mod learner;
pub mod meta;
pub mod positivity;
pub mod runner;

pub use learner::{fit_predict, BaseLearner, FittedModel};
pub use meta::{ate_by_adjustment, s_learner, t_learner, x_learner, XLearnerFit, DEFAULT_TRIM};
pub use positivity::{positivity_check, PositivityReport};
pub use runner::{run_estimator, EstimationResult, EstimatorPlugin, EstimatorRegistry, MetaKind, MetaLearnerPlugin};
