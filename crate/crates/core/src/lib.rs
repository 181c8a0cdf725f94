//! Binary restricted Boltzmann machines with Gibbs and annealer-seeded
//! training, local-valley analysis, AIS likelihood estimation and a
//! continual-learning harness.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ais;
pub mod anneal;
pub mod bits;
pub mod classify;
pub mod continual;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod rbm;
pub mod rng;
pub mod seeds;
pub mod train;
pub mod valley;

pub use bits::{BinaryVector, JointState};
pub use data::{Dataset, LabeledPattern, Layout, SplitTag};
pub use error::{Error, Result};
pub use rbm::{GradientSet, RbmModel, UpdateRule};
