// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beable;
pub mod burgers;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod fpe;
pub mod noise;
pub mod params;
pub mod rng;
pub mod tracer;

pub use error::{Error, Result};
pub use params::{CslParameters, DerivedQuantities, Preset};
