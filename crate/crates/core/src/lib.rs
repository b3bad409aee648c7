#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod gbdt;
pub mod costmodel;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod search;
pub mod searchspace;
pub mod supernet;

pub use error::{Error, Result};
