//! Mixed-supervision training for human-object interaction detection.
//!
//! A two-branch pair scorer is trained on a blend of region-level (FS),
//! image-level (WS) and unlabeled (US) images. The pieces:
//!
//! - [`world`]: reproducible synthetic detection data with long-tailed classes.
//! - [`batching`]: pair construction, cross-image element swapping, targets and schedules.
//! - [`model`]: classification/selection softmax branches and their analytical gradients.
//! - [`loss`]: region-level and image-level binary cross-entropy.
//! - [`optimizer`]: momentum SGD with shared, per-supervision or sequential momentum.
//! - [`evaluation`]: IoU-0.5 pair matching and mAP over full/rare/non-rare classes.
//! - [`pseudo_label`]: converting weak or unlabeled images into region-level targets.
//! - [`experiment`]: training loop, ablation sweeps and run artifacts.

pub mod batching;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod optimizer;
pub mod pseudo_label;
mod rng;
pub mod supervision;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{iou, pair_iou, BBox};
pub use supervision::SupervisionTag;
