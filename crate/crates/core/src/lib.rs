pub mod assembly;
pub mod basis;
pub mod blaschke;
pub mod cauchy;
pub mod error;
pub mod geometry;
pub mod io;
pub mod region;
pub mod sequence;
pub mod small_width;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
