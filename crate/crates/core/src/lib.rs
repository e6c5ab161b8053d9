//! Online tracking of a drifting Mahalanobis metric from pairwise
//! similarity constraints.
//!
//! A single [`ComidLearner`] runs proximal mirror descent on `(M, μ)` at a
//! fixed rate. [`SadlEnsemble`] runs one such learner per dyadic interval
//! and mixes them with multiplicative weights, so that it stays close to
//! the best learner on every interval at once. [`drift`] simulates a world
//! whose ground-truth metric rotates and switches, and [`eval`] scores a
//! learned metric and tracks regret.

pub mod comid;
pub mod drift;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod loss;
pub mod metric;
pub mod reference;
pub mod stream_csv;

pub use comid::ComidLearner;
pub use drift::{Clustering, DriftScenario, DriftSegment, RotationScope, WorldState};
pub use ensemble::{DyadicInterval, SadlConfig, SadlEnsemble, StepReport};
pub use error::{Error, Result};
pub use loss::{ClipKind, LossConfig, RegKind};
pub use metric::{ConstraintTriplet, MetricState, SymMatrix};
