//! Hand-programmed networks whose relevant input pixels are known exactly,
//! synthetic datasets that match them, attribution methods, and metrics that
//! score those methods against the known relevance.

pub mod attribution;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod netforge;
pub mod rng;
pub mod suite;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ActivationTrace, BackwardRule, Layer, NetGraph, Tensor};
