//! Numerical core for risk-sharing between firms and a continuum of
//! mean-variance agents.

pub mod error;
pub mod game;
pub mod lp;
pub mod market;
pub mod planner;
pub mod prob;
pub mod risk;

pub use error::{Error, Result};
