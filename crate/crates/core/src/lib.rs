//! Pseudo-label curation for self-trained video instance segmentation.
//!
//! The crate covers everything between a segmentation model's raw output and
//! the next round's training set: run-length mask primitives, confidence
//! filtering and spatiotemporal NMS, per-frame quality selection, multi-round
//! dataset fusion, frame/source sampling, the DropLoss gate, and a
//! class-agnostic AP/AR evaluator. A seeded mock oracle stands in for the
//! neural models so the whole loop can run without them.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command-line
//! driver live in the `vistrain` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod droploss;
pub mod error;
pub mod eval;
pub mod mask;
pub mod mock;
pub mod nms;
pub mod quality;
pub mod sampler;

pub use dataset::{Provenance, StoredTrack, TrainingDataset, VideoEntry};
pub use error::{Error, Result};
pub use mask::{Bitmap, FrameMask, MaskTrack};
pub use nms::{DetectionSet, DetectionTrack};
pub use quality::{QualityConfig, Scorer};
