//! Concurrent segmentation + detection fusion engine for aircraft
//! recognition in satellite imagery.
//!
//! The pipeline combines two model backends with complementary strengths:
//! a segmentation model that localizes aircraft, and a detector that
//! separates and identifies them. Segmentation output is thresholded into
//! positive regions, the detector is applied iteratively over those regions
//! with erasure of explained foreground, and leftover regions can be
//! promoted to coarse detections by size/distance rules. Backends are
//! pluggable: file-based (precomputed model outputs) and synthetic (test
//! doubles with controllable error rates).

pub mod archspec;
pub mod backend;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod ingest;
pub mod losses;
pub mod raster;
pub mod simulate;
pub mod taxonomy;

pub use geometry::{BBox, Detection, Footprint};
pub use raster::{BinaryMask, PredictionMap, Region};
pub use taxonomy::{Label, Taxonomy};
