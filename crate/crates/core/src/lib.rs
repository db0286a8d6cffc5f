//! Differential PCA toolkit: Monte-Carlo datasets of states, payoffs and
//! pathwise differentials; classic, risk and differential PCA; differential
//! regression; and least-squares Monte-Carlo for Bermudan options.

pub mod autodiff;
pub mod bench;
pub mod config;
pub mod datagen;
pub mod dimred;
pub mod error;
pub mod instruments;
pub mod lsm;
pub mod models;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
