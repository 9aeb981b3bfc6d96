//! Stage 2: task learning over the frozen latent action space with
//! factorized critics.

mod adjacency;
mod critic;
mod env;
mod eval;
mod policy;
mod train;

pub use adjacency::AdjacencyMatrix;
pub use critic::FactoredCritic;
pub use env::{SkillResult, TaskEnv};
pub use eval::{evaluate, Controller, EvalProtocol, EvalReport, LatentController};
pub use policy::{PolicyDiagnostics, SelectMode, TaskPolicy, POLICY_KIND};
pub use train::{
    critic_targets, eval_seed, evaluate_policy, train_task, Stage2Config, Stage2Outcome, Stage2Record, TaskTransition,
};
