pub mod algebra;
pub mod coherent;
pub mod error;
pub mod extraction;
pub mod finite_size;
pub mod protocol;
pub mod randomness;
pub mod tomography;
pub mod worst_case;

pub use error::{Error, Result};
