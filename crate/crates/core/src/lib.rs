//! Training a DDPG agent in shadow mode next to a scripted baseline
//! controller on a 2D reach-avoid task.

pub mod baseline;
pub mod env;
pub mod error;
pub mod geometry;
pub mod nn;

pub use error::{Error, Result};
pub mod ddpg;
pub mod shadow;
pub mod config;
pub mod harness;
