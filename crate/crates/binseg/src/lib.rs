//! Instance segmentation for 3D point clouds by point-wise density binarization.
//!
//! The pipeline shifts every foreground point by its predicted offset toward
//! the instance centroid, splits the shifted points into high- and low-density
//! sets, groups the high-density points into preliminary instances with a
//! semantics-guided single-linkage pass, and assigns the remaining points by
//! neighbor voting. Local scenes with per-point weight masks, pluggable
//! scoring, greedy NMS and an average-precision evaluator round out the
//! pipeline. A seeded synthetic scene generator stands in for a neural
//! backbone so every stage can be driven and measured without training.
//!
//! Entry points:
//! - [`pipeline::segment`] runs the whole pipeline on a [`cloud::LabeledCloud`].
//! - [`synth::generate_scene`] produces seeded scenes with ground truth.
//! - [`eval::average_precision`] scores predictions against ground truth.
//! - [`io`] holds the cloud container, PLY interchange, results and config
//!   formats used by the CLI.

pub mod cloud;
pub mod clustering;
pub mod density;
pub mod eval;
pub mod io;
pub mod local_scene;
pub mod pipeline;
pub mod scoring;
pub mod spatial;
pub mod synth;
pub mod voting;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty instance")]
    EmptyInstance,

    #[error("cloud has no predicted offsets")]
    MissingOffsets,

    #[error("cloud has no ground-truth labels")]
    MissingGroundTruth,

    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),

    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("k must be at least 1")]
    ZeroK,

    #[error("unknown instance id {0}")]
    UnknownInstance(usize),

    #[error("class {0} has no mean size in the catalog")]
    MissingMeanSize(u32),

    #[error("no grouped points available to vote for {} unassigned points", .unassigned.len())]
    Unassignable { unassigned: Vec<usize> },

    #[error("refiner returned point {point} outside its local scene")]
    RefinerOutOfScene { point: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid cloud: {0}")]
    InvalidCloud(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}
