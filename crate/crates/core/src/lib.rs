//! Supervised hashing with deep ReLU networks.
//!
//! The network is trained without backpropagation: every layer output and
//! every sample's copy of the layer weights becomes an auxiliary variable
//! tied back by scaled dual variables, and each outer iteration sweeps over
//! small independent subproblems. Codes are the signs of the last layer and
//! retrieval runs in Hamming space.

pub mod cli;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod model;
pub mod numerics;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
