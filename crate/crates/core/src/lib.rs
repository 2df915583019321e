// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod io;
pub mod lattice;
pub mod potts;
pub mod rng;
pub mod sampler;
pub mod spd;
pub mod synth;
pub mod tensor;
pub mod variogram;
pub mod wishart;

pub use error::{Error, Result};
pub use lattice::Lattice;
pub use potts::{Group, Label, LabelField, PottsHyper, SweepOrder};
pub use sampler::{FitConfig, ModelState, TraceStore};
pub use spd::{LowerTriangular, SpdMatrix};
pub use tensor::{Dataset, TensorField};
pub use variogram::VariogramCurve;
pub use wishart::{InvWishartParams, WishartParams};
