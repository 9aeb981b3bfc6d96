//! Dense-tensor numerics: MLPs with reverse-mode gradients, Adam,
//! distributions, seeded random streams and the parameter checkpoint format.

mod adam;
pub mod checkpoint;
mod dist;
mod fd;
mod matrix;
mod mlp;
mod rng;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{Checkpoint, NamedArray};
pub use dist::*;
pub use fd::finite_difference_gradient;
pub use matrix::{gemm, matmul, Matrix};
pub use mlp::{polyak, Linear, Mlp, MlpCache, ParamSet};
pub use rng::RngStream;
