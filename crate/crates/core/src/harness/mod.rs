//! Tasks, data collection, behavior cloning, rollouts and ablations.

mod ablation;
mod collect;
mod episode;
mod rollout;
mod sensor;
mod task;
mod train;

pub use ablation::*;
pub use collect::*;
pub use episode::*;
pub use rollout::*;
pub use sensor::*;
pub use task::*;
pub use train::*;
