//! Isotropic Markov semigroups on ultra-metric spaces, computed exactly on
//! finite ball trees, together with their dual nearest-neighbour random
//! walks and the p-adic operators they model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balltree;
pub mod error;
pub mod padic;
pub mod scalar;
pub mod semigroup;
pub mod simulate;
pub mod spectral;
pub mod treewalk;

pub use balltree::{BallTree, Point, Sigma};
pub use error::{Error, Result};
pub use semigroup::HeatModel;
