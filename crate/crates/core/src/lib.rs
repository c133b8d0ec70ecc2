#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod acoustics;
pub mod channel;
pub mod error;
pub mod geom;
pub mod pipeline;
pub mod regress;

pub use error::{Error, Result};
