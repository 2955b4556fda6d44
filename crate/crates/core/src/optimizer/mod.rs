//! Plan search and rolling-horizon operation.

mod env;
mod learner;
mod mpc;
mod search;

pub use env::{observation_len, observe, schedule_fleets, Env, EnvConfig, EnvState, StepOutcome};
pub use learner::{
    train_learner, Approximator, CurvePoint, LearnerConfig, LearnerResult, Mlp, ObsScale, Policy,
};
pub use mpc::{operate_mpc, OperateOptions, OperationReport, SlotReport};
pub use search::{hill_climb, search_sa, SaConfig, SearchResult};
