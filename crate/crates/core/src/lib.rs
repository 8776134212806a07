//! Numerical toolkit for the supercritical deformed Hermitian Yang-Mills
//! equation in complex dimension at most three.

pub mod cone;
pub mod error;
pub mod forms;
pub mod lab;
pub mod mollify;
pub mod numeric;
pub mod torus;

pub use error::{DhymError, Result};
