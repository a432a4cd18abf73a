//! Online fair allocation with paid information sources.
//!
//! Each round a user arrives, the platform buys one context signal from a
//! set of priced sources, and decides whether to allocate. The objective is
//! total utility minus source prices minus a convex penalty on the average
//! allocated attribute vector. [`engine::run_episode`] runs the primal-dual
//! learner (EXP3 over sources, online gradient descent on the dual);
//! [`oracle`] computes the offline benchmark by solving the dual saddle
//! point.

pub mod bandit;
pub mod dual;
pub mod engine;
pub mod environment;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod numeric;
pub mod oracle;
pub mod parallel;
pub mod penalty;
pub mod polytope;
pub mod verify;

pub use engine::{run_episode, EngineConfig, Episode, Summary, Variant};
pub use environment::{ProblemInstance, TableModel};
pub use error::{Error, Result};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use polytope::Polytope;
