pub mod demos;
pub mod error;
pub mod iterate;
pub mod kolmogorov;
pub mod lie;
pub mod local_ops;
pub mod sequences;
pub mod series;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
