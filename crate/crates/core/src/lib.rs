//! Joint estimation of a graph-smooth low-rank matrix and its graph from
//! grossly corrupted observations, with the inexact-graph sensitivity
//! analysis and synthetic benchmarks built on top.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod rng;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
