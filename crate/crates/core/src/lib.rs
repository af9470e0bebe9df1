//! Small-scale model of imbalanced classification: STEP-imbalanced label
//! matrices, their spectral factors, and gradient dynamics of the square-loss
//! unconstrained features model with and without loss reweighting.

pub mod dynamics;
pub mod error;
pub mod cli;
pub mod experiments;
pub mod reweight;
pub mod sel;
pub mod spectral;

pub use error::{Error, Result};
