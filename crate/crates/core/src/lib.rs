//! Bayesian nowcasting of count data subject to reporting delay.
//!
//! Delays are **1-based** throughout: delay `d = 1` means "reported in the
//! occurrence week". Internally rows and columns of a triangle are stored
//! 0-based, so delay `d` lives in column `d - 1`.

pub mod distributions;
pub mod error;
pub mod mcmc;
pub mod model;
pub mod predictive;
pub mod simulator;
pub mod special;
pub mod splines;
pub mod stats;
pub mod triangle;

pub use error::{Error, Result};
