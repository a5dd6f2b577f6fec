//! Detection pruning and interpolated SORT tracking for micro-scale objects
//! in dense, low-contrast image sequences.

pub mod analytics;
pub mod assignment;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod motion;
pub mod overlay;
pub mod pipeline;
pub mod pruning;
pub mod simulation;
pub mod tracking;

pub use error::{Error, Result};
