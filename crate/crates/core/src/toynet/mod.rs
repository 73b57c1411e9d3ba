//! A minimal reverse-mode trainer for the toy keypoint network.

pub mod conv;
pub mod model;
pub mod params;
pub mod tape;
pub mod train;

pub use model::{Heads, LossBreakdown, Prediction, ToyNet};
pub use params::{ParamId, ParamStore, RmsPropConfig, RmsPropState};
pub use tape::{LossKind, NodeId, OpKind, Tape, TapeNode};
pub use train::{
    evaluate, heldout_scenes, train, write_metrics_csv, EvalMetrics, MetricsRow, TrainOutcome,
    PCK_TOLERANCE,
};
