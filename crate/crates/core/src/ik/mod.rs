//! Kinematic chains, the log-barrier IK solver, and the scripted expert.

mod chain;
mod expert;
mod solver;

pub use chain::{reference_left_arm, reference_right_arm, ChainFrames, Joint, KinematicChain, REFERENCE_ARM};
pub use expert::*;
pub use solver::{ik_cost, solve_ik, solve_ik_restarts, solve_ik_traced, IkProblem, IkResult, IkWeights, SolverSettings, TraceStep};
