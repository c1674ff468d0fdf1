//! Visual odometry transformer with modality-dropout training, built on a
//! synthetic raycast navigation world and a small reverse-mode autodiff
//! engine.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod model;
pub mod rng;
pub mod training;
pub mod world;

pub use error::{Error, Result};
