pub mod error;
pub mod flasac;
pub mod harness;
pub mod numerics;
pub mod metrics;
pub mod sac;
pub mod skill;
pub mod world;

pub use error::{Result, SlacError};
