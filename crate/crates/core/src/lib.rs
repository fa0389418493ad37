//! Monocular 3D lane detection toolkit: camera geometry, sample-adaptive
//! anchor generation, feature sampling, an attention-based refinement head,
//! set-based losses with an equal-width regulariser, benchmark metrics, and
//! synthetic scenes to drive them.

// `!(a < b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchors;
pub mod assignment;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod geometry;
pub mod gradcheck;
pub mod head;
pub mod io;
pub mod lane;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod synth;
pub mod throughput;

pub use config::{DatasetProfile, RunConfig};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{CameraRig, FeaturePoint, GroundPoint};
pub use head::Proposal;
pub use lane::Lane3D;
