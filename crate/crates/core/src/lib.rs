//! Unsupervised triplet hashing.
//!
//! Learns compact binary image descriptors from unlabeled images. A small
//! convolutional network ends in an `M`-unit hashing layer followed by ReLU;
//! its output is thresholded at 0.5 into an `M`-bit code. Training runs in two
//! phases: first a quantization + bit-balance objective over the original
//! images, then the same objective plus a triplet hinge over
//! (image, rotated image, random other image) triplets.
//!
//! This crate is `no_std` (with `alloc`). File formats, dataset loaders and the
//! command line live in the `uth` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matrix;
pub mod network;
pub mod retrieval;
pub mod training;

pub use dataset::{Dataset, Dims, ImageSample, RotationConfig, Triplet};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, PrPoint};
pub use losses::{LossReport, LossWeights, TripletConfig};
pub use matrix::FeatureMatrix;
pub use network::{Gradients, LayerSpec, NetworkParams, OptimizerState};
pub use retrieval::{CodeDatabase, HashCode, Neighbor};
pub use training::{Objective, Phase, TrainConfig, TrainLog};

/// Binarization threshold applied to hashing-layer outputs.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
