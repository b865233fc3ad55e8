#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Composite signal neural network (CompSNN) for trajectory analysis.
//!
//! The pipeline turns raw 2D trajectories into three representations (a
//! per-node signal on a density-adapted graph, its graph Fourier transform,
//! and a 10-channel time series), feeds them to three small networks whose
//! outputs an aggregator combines into a demographic prediction, and exports
//! the CNN's attention and feature activations as spatial maps.

pub mod demographics;
pub mod density;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod features;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod nn;
pub mod svg;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
