//! Dense-region crop proposal for small-object detection.
//!
//! A coarse whole-image detector pass is turned into a density heatmap
//! ([`heatmap`]), the densest grid regions are merged into at most `k` crops
//! ([`scm`]), a fine detector pass runs on each letterboxed crop, and the
//! results are mapped back and merged with the coarse pass ([`fusion`]).
//! [`eval`] scores detections with the COCO box protocol, and [`simulate`]
//! provides a seeded synthetic scene plus a resolution-limited
//! pseudo-detector to exercise the whole loop without a neural network.
//!
//! Detector integration happens through COCO JSON files ([`io`]); the
//! `scmkit` binary ([`cli`]) scripts each stage.

pub mod cli;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod scm;
pub mod simulate;

pub use error::{Error, Result};
pub use eval::{coco_ap, EvalParams, EvalResult, Vocabulary};
pub use fusion::{fuse, FusionConfig};
pub use geometry::{giou, iou, nms, BoundingBox, Detection, GroundTruth};
pub use heatmap::{Heatmap, HeatmapConfig};
pub use scm::{propose, CropPlan, ScmConfig};
pub use simulate::{run_pipeline, DetectorModel, PipelineSettings, SceneSpec};
