//! Preparation, balancing, screening and evaluation of dermoscopic lesion
//! image datasets, plus static shape checking of network architectures.

pub mod archcheck;
pub mod augment;
pub mod config;
pub mod dedup;
pub mod imaging;
pub mod manifest;
pub mod maskops;
pub mod metrics;
pub mod purify;

pub use imaging::{BinaryMask, Image};
