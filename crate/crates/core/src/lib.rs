//! Unsupervised lifelong contrastive rehearsal.
//!
//! A small differentiable encoder is adapted to a stream of unlabeled
//! domains. Each domain is pseudo-labeled with k-reciprocal Jaccard distances
//! and DBSCAN, trained with cluster and camera prototype contrastive losses,
//! and, from the second domain on, rehearsed against a memory of stored
//! samples and prototypes plus a KL constraint between the image-to-image
//! similarity distributions of the current and the frozen previous model.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! parsing and the command line live in the companion `ucr` crate.
#![allow(clippy::needless_range_loop)]

#![no_std]

extern crate alloc;

pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod losses;
pub mod memory;
pub mod pseudo_label;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use config::{BaselineVariant, BatchSpec, HyperParams, MemoryPolicy};
pub use data::{validate_stream, DatasetDomain, Domain, Sample};
pub use encoder::{EncoderParams, EncoderSet, Gradients};
pub use error::{Error, Result};
pub use eval::{EvalReport, EvalSplit};
pub use linalg::Matrix;
pub use memory::{ImageMemory, PrototypeBank};
pub use pseudo_label::{DistanceMatrix, PseudoLabeling};
pub use rng::Rng;
pub use trainer::{Ablation, MetricsLog, TrainState};
