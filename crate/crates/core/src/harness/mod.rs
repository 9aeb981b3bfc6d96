//! Experiment orchestration: configuration, run dispatch, the flat baseline
//! and tabular oracle fixtures.

pub mod baseline;
pub mod config;
pub mod presets;
pub mod run;
pub mod tabular;

pub use baseline::{
    flat_policy_checkpoint, load_flat_policy, run_baseline_flat, BaselineConfig, BaselineOutcome, BaselineRecord,
    FlatController, FLAT_POLICY_KIND,
};
pub use config::{Ablations, ExperimentConfig, OracleConfig, Overrides, Stage, WorldSpec};
pub use run::{check_mdp, run, OracleRecord, RunReport, ORACLE_SHAPES};
pub use tabular::{fit_factored_critic, value_iteration, CriticFit, TabularMdp, TabularQ};
