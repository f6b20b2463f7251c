#![no_std]

extern crate alloc;

pub mod error;
pub mod layers;
pub mod models;
pub mod numerics;
pub mod recon;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor, Tensor};
