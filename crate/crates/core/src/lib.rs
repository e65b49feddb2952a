//! Planning in factored MDPs over a dynamically refined and coarsened
//! partition of the state space.

pub mod abstraction;
pub mod config;
pub mod domains;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod format;
pub mod model;
pub mod phase_loop;
pub mod planner;
pub mod proximity;
pub mod simulator;
pub mod space;
pub mod tree;
pub mod worldview;

pub use error::{ModelError, PlanError, Result, WorldviewError};
pub use model::{ActionModel, ProblemInstance, RewardRule, TransitionRule};
pub use space::{Assignment, Dimension, FactoredSpace, SpecificState, Value};
