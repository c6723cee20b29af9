//! Graph convolutional network localization.
//!
//! Simulates 2-D ranging networks under mixed LOS/NLOS noise, builds the
//! thresholded measurement graph, trains a GCN (or an MLP reference) to
//! regress node coordinates from anchor supervision, and analyses the
//! propagation operator spectrally.
//!
//! ```text
//! scene ──► DistanceMatrix ──► ThresholdedGraph ──► train ──► PositionEstimate
//!                                     │
//!                                     └──► spectral (I − Â eigenbasis, GFT)
//! ```
//!
//! The `harness` module wires these stages into the reproducible sweeps
//! exposed by the `gcnloc` binary.

pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod rng;
pub mod scene;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::ThresholdedGraph;
pub use model::{ModelConfig, ModelKind, PositionEstimate, TrainConfig, Weights};
pub use scene::{DistanceMatrix, NoiseParams, Scene};
