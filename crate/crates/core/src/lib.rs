//! Real-time organ labels from sparse intensity samples.
//!
//! A fixed pattern of 6561 millimetre offsets (three orthogonal planes plus
//! six cubes of increasing spacing) is read around a query voxel, normalized,
//! and classified by a small residual network. Full masks come from running
//! that point classifier on a coarse grid and refining only where labels
//! disagree.
//!
//! - [`volume`]: volumes, masks, NIfTI / `ORGV` / `ORGM` I/O and phantoms
//! - [`sampler`]: offset table, descriptor extraction and decoding
//! - [`model`]: the classifier and its `ORGC` weight format
//! - [`segmenter`]: coarse-to-fine segmentation
//! - [`dataset`]: training point sampling and the `ORGD` format
//! - [`metrics`]: Dice, accuracy and macro-F1

mod codec;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod segmenter;
pub mod volume;

pub use error::{Error, Result};
