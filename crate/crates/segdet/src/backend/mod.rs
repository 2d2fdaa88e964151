//! Pluggable inference backends.
//!
//! The engine never links an ML framework: a segmentation backend answers
//! tile queries with prediction maps and a detection backend answers window
//! queries with scored, labeled boxes. Two implementations ship here: a
//! file-based backend replaying precomputed model outputs, and synthetic
//! backends with controllable error rates used to exercise the fusion
//! properties.

pub mod file;
pub mod synthetic;

use thiserror::Error;

use crate::geometry::{BBox, Detection};
use crate::raster::{PredictionMap, RasterError};
use crate::taxonomy::TaxonomyError;

pub use file::{load_file_backend, read_detections_file, write_detections_file, FileBackend};
pub use synthetic::{
    synthetic_backends, SyntheticBackendConfig, SyntheticDetection, SyntheticSegmentation,
};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("missing prediction for tile ({0}, {1})")]
    MissingPrediction(u32, u32),
    #[error("tile ({x}, {y}) stored as {got_w}x{got_h}, query expects {want_w}x{want_h}")]
    TileSizeMismatch {
        x: u32,
        y: u32,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("backend directory {0} has no detection listing")]
    MissingDetections(String),
    #[error("cannot load backend from {path}: {reason}")]
    Load { path: String, reason: String },
    #[error("{path}:{line}: invalid detection record: {reason}")]
    InvalidDetection {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("tile key ({0}, {1}) provided twice")]
    KeyCollision(u32, u32),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Localization model contract: a tile of imagery in, a prediction map of
/// identical spatial size out. Implementations must be deterministic for
/// fixed inputs and safe to query concurrently.
pub trait SegmentationBackend: Send + Sync {
    fn segment_tile(
        &self,
        image: &PredictionMap,
        origin: (u32, u32),
        size: (u32, u32),
    ) -> Result<PredictionMap, BackendError>;
}

/// Identification model contract: an image window in, level-3 detections
/// out. Returned boxes lie entirely within the queried window; a detection
/// whose box crosses the window edge is reported only by windows that
/// contain it fully. Implementations must be deterministic and safe to
/// query concurrently.
pub trait DetectionBackend: Send + Sync {
    fn detect_region(
        &self,
        image: &PredictionMap,
        window: &BBox,
    ) -> Result<Vec<Detection>, BackendError>;
}

pub(crate) fn box_inside(b: &BBox, window: &BBox) -> bool {
    b.x_min >= window.x_min
        && b.y_min >= window.y_min
        && b.x_max <= window.x_max
        && b.y_max <= window.y_max
}
