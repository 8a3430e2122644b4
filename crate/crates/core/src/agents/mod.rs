//! Agent hierarchy: roles, the division/expert message contract, expert tool
//! bindings and the planner backends.

mod experts;
mod message;
mod planner;
mod roles;

pub use experts::{completeness, dispatch, review, ToolSettings, Toolbox, DEFAULT_BATCH_SAMPLES};
pub use message::{InputContent, InputRef, ResultStatus, Review, TaskMessage, TaskResult};
pub use planner::{
    classify, deterministic_plan, generate_plan, PlanOutcome, PlanRequest, PlanResponse, PlannerConfig, PlannerError,
};
pub use roles::{AgentRole, Tier};
