//! Concept-based explanations for vibration fault classifiers.
//!
//! The crate simulates bearing fault vibration concepts, trains small 1D
//! convolutional classifiers and scores how sensitive their predictions are
//! to a concept via concept activation vectors.

pub mod cav;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod tcav;
pub mod tensor_net;
pub mod training;
pub mod vibration_sim;

pub use error::{Error, Result};
