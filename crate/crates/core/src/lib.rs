//! Image-complexity representation learning: complexity metrics, an
//! entropy-regularized momentum-contrast trainer and an evaluation harness.

pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod metrics;
pub mod seed;
pub mod tensor;
pub mod trainer;
pub mod views;

pub use error::{Error, Result};
