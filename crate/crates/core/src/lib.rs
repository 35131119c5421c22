pub mod area;
pub mod convexity;
pub mod error;
pub mod inequalities;
pub mod laminate;
pub mod linalg;
pub mod matrix;
pub mod mms;
pub mod reports;
pub mod sampling;
pub mod suites;

pub use error::{Error, Result};
