pub mod bundle;
pub mod error;
pub mod fibered;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod memory;
pub mod models;
pub mod naip;
pub mod operators;
pub mod propagation;
pub mod quadrature;
pub mod system;

pub use error::{LabError, Result};
