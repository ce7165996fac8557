//! Histogram-based gradient boosted decision trees for binary log-loss.

mod binning;
mod ensemble;
pub(crate) mod flat;
mod grower;
mod tree;

pub use binning::BinMapper;
pub use ensemble::{sigmoid, GbdtParams, GradientBoostedEnsemble};
pub use grower::GrowthStep;
pub use tree::{Node, Tree, NO_CHILD};
