//! The concurrent pipeline: segmentation localizes, the detector separates
//! and identifies, leftovers can be recovered by size/distance rules.
//!
//! The sequence is: tile the image, query the segmentation backend per
//! tile, stitch, threshold into positive regions, then iterate the detector
//! over a window around each region, erasing every kept detection from the
//! mask before recomputing regions. Regions still unexplained at the end
//! are either promoted to coarse level-1 detections (recovery) or reported
//! as residual.

use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendError, DetectionBackend, SegmentationBackend};
use crate::geometry::{detection_order, iou, nms, BBox, Detection, DEFAULT_NMS_THRESHOLD};
use crate::ingest::{make_grid, IngestError, DEFAULT_TILE_OVERLAP, DEFAULT_TILE_SIZE};
use crate::raster::{connected_components, erase, filter_min_size, threshold, BinaryMask, PredictionMap, Region};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("segmentation stage, tile ({x}, {y}): {source}")]
    Segmentation {
        x: u32,
        y: u32,
        #[source]
        source: BackendError,
    },
    #[error("stitch stage: {source}")]
    Stitch {
        #[source]
        source: IngestError,
    },
    #[error("detection stage, window ({x0:.0},{y0:.0})-({x1:.0},{y1:.0}): {source}")]
    Detection {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        #[source]
        source: BackendError,
    },
}

/// Threshold/size working point for both models plus the recovery switch.
/// Presets trade recall against precision; every value can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingMode {
    pub name: String,
    pub seg_threshold: f64,
    pub seg_min_size: usize,
    pub det_threshold: f64,
    /// Minimum detection box area in square pixels.
    pub det_min_size: f64,
    pub enable_recovery: bool,
}

impl OperatingMode {
    pub fn balanced() -> Self {
        OperatingMode {
            name: "balanced".to_string(),
            seg_threshold: 0.5,
            seg_min_size: 300,
            det_threshold: 0.5,
            det_min_size: 100.0,
            enable_recovery: false,
        }
    }

    pub fn recall() -> Self {
        OperatingMode {
            name: "recall".to_string(),
            seg_threshold: 0.3,
            seg_min_size: 150,
            det_threshold: 0.3,
            det_min_size: 50.0,
            enable_recovery: true,
        }
    }

    pub fn precision() -> Self {
        OperatingMode {
            name: "precision".to_string(),
            seg_threshold: 0.6,
            seg_min_size: 400,
            det_threshold: 0.6,
            det_min_size: 150.0,
            enable_recovery: false,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "balanced" => Some(Self::balanced()),
            "recall" => Some(Self::recall()),
            "precision" => Some(Self::precision()),
            _ => None,
        }
    }
}

/// Remainder-recovery rules: a residual region is promoted when its area
/// lies within `size_band` times the median detected box area and its
/// centroid is within `max_distance` pixels of a detection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryParams {
    pub size_band: (f64, f64),
    pub max_distance: f64,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            size_band: (0.5, 2.0),
            max_distance: 200.0,
        }
    }
}

/// Everything `run_pipeline` needs besides the image and the backends.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineParams {
    pub mode: OperatingMode,
    pub recovery: RecoveryParams,
    pub tile_size: u32,
    pub overlap: u32,
    pub max_iter: u32,
    pub nms_threshold: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            mode: OperatingMode::balanced(),
            recovery: RecoveryParams::default(),
            tile_size: DEFAULT_TILE_SIZE,
            overlap: DEFAULT_TILE_OVERLAP,
            max_iter: 3,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
        }
    }
}

/// Serializable region digest for traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub bbox: BBox,
    pub area: usize,
    pub centroid: (f64, f64),
}

impl From<&Region> for RegionSummary {
    fn from(region: &Region) -> Self {
        RegionSummary {
            bbox: region.bbox,
            area: region.area,
            centroid: region.centroid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub regions_queried: usize,
    pub detections_added: usize,
}

/// Per-step record of one pipeline run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FusionTrace {
    pub tiles_queried: usize,
    pub localized_regions: Vec<RegionSummary>,
    pub iterations: Vec<IterationTrace>,
    pub recovered: Vec<RegionSummary>,
    pub final_detections: usize,
}

/// Pipeline output: fused detections, regions left unexplained, and the
/// per-step trace.
#[derive(Debug)]
pub struct FusionResult {
    pub detections: Vec<Detection>,
    pub residual_regions: Vec<Region>,
    pub trace: FusionTrace,
}

/// Step 1: threshold the prediction map and keep components of sufficient
/// size.
pub fn localize(map: &PredictionMap, mode: &OperatingMode) -> Vec<Region> {
    filter_min_size(
        connected_components(&threshold(map, mode.seg_threshold)),
        mode.seg_min_size,
    )
}

/// Query window for a region: the bounding box inflated to at least
/// `tile_size` per axis, shifted to stay inside the image.
fn detection_window(bbox: &BBox, tile_size: u32, width: u32, height: u32) -> BBox {
    let (w, h) = (width as f64, height as f64);
    let want_w = bbox.width().max(tile_size as f64).min(w);
    let want_h = bbox.height().max(tile_size as f64).min(h);
    let (cx, cy) = bbox.center();
    let x0 = (cx - want_w / 2.0).clamp(0.0, w - want_w);
    let y0 = (cy - want_h / 2.0).clamp(0.0, h - want_h);
    BBox::new(x0, y0, x0 + want_w, y0 + want_h)
}

/// Step 2: iterate the detector over the positive regions. Each iteration
/// queries a window per region, keeps detections passing the mode's score
/// and size gates, suppresses duplicates, erases kept boxes from the mask
/// and recomputes regions. Stops when an iteration adds nothing or
/// `max_iter` is reached. Returns the kept detections and the residual
/// mask.
pub fn detect_iterative(
    image: &PredictionMap,
    regions: &[Region],
    det: &dyn DetectionBackend,
    params: &PipelineParams,
) -> Result<(Vec<Detection>, BinaryMask, Vec<IterationTrace>), FusionError> {
    let (width, height) = (image.width(), image.height());
    let mut mask = BinaryMask::new(width, height);
    for region in regions {
        for &(x, y) in &region.pixels {
            mask.set(x, y, true);
        }
    }

    let mode = &params.mode;
    let mut kept: Vec<Detection> = Vec::new();
    let mut iterations = Vec::new();
    let mut current: Vec<Region> = regions.to_vec();

    for _ in 0..params.max_iter {
        if current.is_empty() {
            break;
        }
        let mut fresh: Vec<Detection> = Vec::new();
        for region in &current {
            let window = detection_window(&region.bbox, params.tile_size, width, height);
            let hits = det
                .detect_region(image, &window)
                .map_err(|source| FusionError::Detection {
                    x0: window.x_min,
                    y0: window.y_min,
                    x1: window.x_max,
                    y1: window.y_max,
                    source,
                })?;
            fresh.extend(hits.into_iter().filter(|d| {
                d.score >= mode.det_threshold && d.bbox.area() >= mode.det_min_size
            }));
        }
        // Anything overlapping an already-kept detection is a re-detection.
        fresh.retain(|d| {
            kept.iter()
                .all(|k| iou(&k.bbox, &d.bbox) <= params.nms_threshold)
        });
        let added = nms(&fresh, params.nms_threshold);
        iterations.push(IterationTrace {
            regions_queried: current.len(),
            detections_added: added.len(),
        });
        if added.is_empty() {
            break;
        }
        for detection in &added {
            erase(&mut mask, &detection.bbox);
        }
        kept.extend(added);
        current = filter_min_size(connected_components(&mask), mode.seg_min_size);
    }

    kept.sort_by(detection_order);
    Ok((kept, mask, iterations))
}

/// A residual region promoted to a coarse detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub region_index: usize,
    pub detection: Detection,
}

/// Step 3: promote residual regions that look like the detected aircraft
/// (area within the size band around the median detected box area) and sit
/// near one (centroid within `max_distance` of a detection box center).
/// Recovered objects carry the level-1 label and score by mean foreground
/// probability. With no detections to compare against, nothing qualifies.
pub fn recover(
    residual_regions: &[Region],
    detections: &[Detection],
    params: &RecoveryParams,
    taxonomy: &Taxonomy,
    map: &PredictionMap,
) -> Vec<Recovered> {
    if detections.is_empty() {
        return Vec::new();
    }
    let mut areas: Vec<f64> = detections.iter().map(|d| d.bbox.area()).collect();
    areas.sort_by(|a, b| a.total_cmp(b));
    let median_area = if areas.len() % 2 == 1 {
        areas[areas.len() / 2]
    } else {
        (areas[areas.len() / 2 - 1] + areas[areas.len() / 2]) / 2.0
    };
    let (lo, hi) = (
        params.size_band.0 * median_area,
        params.size_band.1 * median_area,
    );

    let root = taxonomy.root_label();
    let mut recovered = Vec::new();
    for (region_index, region) in residual_regions.iter().enumerate() {
        let area = region.area as f64;
        if area < lo || area > hi {
            continue;
        }
        let (cx, cy) = region.centroid;
        let near = detections.iter().any(|d| {
            let (dx, dy) = d.bbox.center();
            ((dx - cx).powi(2) + (dy - cy).powi(2)).sqrt() <= params.max_distance
        });
        if !near {
            continue;
        }
        let score = region.mean_foreground(map).clamp(0.0, 1.0);
        recovered.push(Recovered {
            region_index,
            detection: Detection::new(region.bbox, score, root.clone()),
        });
    }
    recovered
}

/// Detections for evaluating the segmentation path alone: each localized
/// region's bounding box becomes a level-1 detection scored by its mean
/// foreground probability.
pub fn segmentation_standalone(
    map: &PredictionMap,
    mode: &OperatingMode,
    taxonomy: &Taxonomy,
) -> Vec<Detection> {
    let root = taxonomy.root_label();
    localize(map, mode)
        .iter()
        .map(|region| {
            Detection::new(
                region.bbox,
                region.mean_foreground(map).clamp(0.0, 1.0),
                root.clone(),
            )
        })
        .collect()
}

/// Detections for evaluating the detector alone at a mode's working point:
/// one full-image query, then the mode's score and size gates, then
/// duplicate suppression.
pub fn detection_standalone(
    image: &PredictionMap,
    det: &dyn DetectionBackend,
    mode: &OperatingMode,
    nms_threshold: f64,
) -> Result<Vec<Detection>, FusionError> {
    let window = BBox::new(0.0, 0.0, image.width() as f64, image.height() as f64);
    let hits = det
        .detect_region(image, &window)
        .map_err(|source| FusionError::Detection {
            x0: window.x_min,
            y0: window.y_min,
            x1: window.x_max,
            y1: window.y_max,
            source,
        })?;
    let gated: Vec<Detection> = hits
        .into_iter()
        .filter(|d| d.score >= mode.det_threshold && d.bbox.area() >= mode.det_min_size)
        .collect();
    Ok(nms(&gated, nms_threshold))
}

/// Runs the whole pipeline: tile, segment, stitch, localize, iterate the
/// detector, optionally recover, and apply a final global suppression.
/// Images smaller than the tile size are queried as a single full-image
/// tile.
pub fn run_pipeline(
    image: &PredictionMap,
    seg: &dyn SegmentationBackend,
    det: &dyn DetectionBackend,
    taxonomy: &Taxonomy,
    params: &PipelineParams,
) -> Result<FusionResult, FusionError> {
    let (width, height) = (image.width(), image.height());

    // Tile and segment.
    let origins: Vec<((u32, u32), (u32, u32))> =
        if width >= params.tile_size && height >= params.tile_size {
            let grid = make_grid(width, height, params.tile_size, params.overlap)
                .map_err(|source| FusionError::Stitch { source })?;
            grid.origins
                .iter()
                .map(|&o| (o, (params.tile_size, params.tile_size)))
                .collect()
        } else {
            vec![((0, 0), (width, height))]
        };
    let mut tile_maps = Vec::with_capacity(origins.len());
    for &(origin, size) in &origins {
        let map = seg
            .segment_tile(image, origin, size)
            .map_err(|source| FusionError::Segmentation {
                x: origin.0,
                y: origin.1,
                source,
            })?;
        tile_maps.push((origin, map));
    }

    let stitched = crate::ingest::stitch(&tile_maps, width, height)
        .map_err(|source| FusionError::Stitch { source })?;

    // Localization step.
    let regions = localize(&stitched, &params.mode);
    let mut trace = FusionTrace {
        tiles_queried: origins.len(),
        localized_regions: regions.iter().map(RegionSummary::from).collect(),
        ..FusionTrace::default()
    };

    // Iterative detection with erasure.
    let (kept, residual_mask, iterations) = detect_iterative(image, &regions, det, params)?;
    trace.iterations = iterations;

    let residual_regions = filter_min_size(
        connected_components(&residual_mask),
        params.mode.seg_min_size,
    );

    // Optional remainder recovery.
    let recovered = if params.mode.enable_recovery {
        recover(&residual_regions, &kept, &params.recovery, taxonomy, &stitched)
    } else {
        Vec::new()
    };
    trace.recovered = recovered
        .iter()
        .map(|r| RegionSummary::from(&residual_regions[r.region_index]))
        .collect();

    // Final global suppression over detector output plus recoveries.
    let mut all = kept;
    let recovered_indices: Vec<usize> = recovered.iter().map(|r| r.region_index).collect();
    all.extend(recovered.into_iter().map(|r| r.detection));
    let detections = nms(&all, params.nms_threshold);
    trace.final_detections = detections.len();

    let residual_regions: Vec<Region> = residual_regions
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !recovered_indices.contains(i))
        .map(|(_, r)| r)
        .collect();

    Ok(FusionResult {
        detections,
        residual_regions,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::synthetic::{synthetic_backends, SyntheticBackendConfig};
    use crate::geometry::{overlap_over_target, Footprint};
    use crate::simulate::{generate_scene, render_scene_image, SceneSpec};
    use crate::taxonomy::Label;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn noiseless_setup(
        n_aircraft: u32,
        seed: u64,
    ) -> (
        crate::ingest::Scene,
        PredictionMap,
        crate::backend::synthetic::SyntheticSegmentation,
        crate::backend::synthetic::SyntheticDetection,
    ) {
        let tax = Taxonomy::default_taxonomy();
        let spec = SceneSpec {
            n_aircraft,
            seed,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec, &tax).unwrap();
        let image = render_scene_image(&scene);
        let (seg, det) = synthetic_backends(
            &scene,
            &tax,
            &SyntheticBackendConfig::noiseless(seed),
            &SyntheticBackendConfig::noiseless(seed + 1),
            true,
        );
        (scene, image, seg, det)
    }

    #[test]
    fn localize_finds_noiseless_footprints() {
        let (scene, _, seg, _) = noiseless_setup(3, 5);
        let regions = localize(seg.full_map(), &OperatingMode::balanced());
        assert_eq!(regions.len(), 3);
        // Each region is exactly one footprint.
        for region in &regions {
            let found = scene.objects.iter().any(|o| {
                matches!(&o.footprint, Footprint::Pixels(p) if *p == region.pixels)
            });
            assert!(found, "region at {:?} matches no footprint", region.bbox);
        }
    }

    #[test]
    fn localize_on_empty_map_is_empty() {
        let mut map = PredictionMap::new(64, 64, 2);
        for y in 0..64 {
            for x in 0..64 {
                map.set(x, y, 0, 1.0);
            }
        }
        assert!(localize(&map, &OperatingMode::balanced()).is_empty());
    }

    #[test]
    fn threshold_zero_yields_full_extent_region() {
        let mut map = PredictionMap::new(64, 64, 2);
        for y in 0..64 {
            for x in 0..64 {
                map.set(x, y, 0, 1.0);
            }
        }
        let mode = OperatingMode {
            seg_threshold: 0.0,
            ..OperatingMode::balanced()
        };
        let regions = localize(&map, &mode);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].area, 64 * 64);
    }

    #[test]
    fn noiseless_iteration_detects_everything_first_pass() {
        let (scene, image, seg, det) = noiseless_setup(5, 9);
        let regions = localize(seg.full_map(), &OperatingMode::balanced());
        let params = PipelineParams::default();
        let (kept, residual, iterations) =
            detect_iterative(&image, &regions, &det, &params).unwrap();
        assert_eq!(kept.len(), scene.objects.len());
        assert_eq!(residual.count_foreground(), 0);
        assert_eq!(iterations.len(), 1);
        assert_eq!(iterations[0].detections_added, 5);
    }

    #[test]
    fn empty_region_list_queries_nothing() {
        struct Panicking(AtomicUsize);
        impl DetectionBackend for Panicking {
            fn detect_region(
                &self,
                _image: &PredictionMap,
                _window: &BBox,
            ) -> Result<Vec<Detection>, BackendError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok(vec![])
            }
        }
        let backend = Panicking(AtomicUsize::new(0));
        let image = PredictionMap::new(64, 64, 1);
        let params = PipelineParams::default();
        let (kept, _, iterations) = detect_iterative(&image, &[], &backend, &params).unwrap();
        assert!(kept.is_empty());
        assert!(iterations.is_empty());
        assert_eq!(backend.0.load(Ordering::SeqCst), 0);
    }

    /// Single-object detector: reports only the stored detection whose box
    /// center is nearest the window center. Models a detector with poor
    /// shift invariance over merged regions.
    struct NearestCenterDetector {
        candidates: Vec<Detection>,
    }

    impl DetectionBackend for NearestCenterDetector {
        fn detect_region(
            &self,
            _image: &PredictionMap,
            window: &BBox,
        ) -> Result<Vec<Detection>, BackendError> {
            let (wx, wy) = window.center();
            Ok(self
                .candidates
                .iter()
                .filter(|d| crate::backend::box_inside(&d.bbox, window))
                .min_by(|a, b| {
                    let dist = |d: &Detection| {
                        let (cx, cy) = d.bbox.center();
                        (cx - wx).powi(2) + (cy - wy).powi(2)
                    };
                    dist(a).total_cmp(&dist(b))
                })
                .into_iter()
                .cloned()
                .collect())
        }
    }

    #[test]
    fn adjacent_pair_needs_second_iteration() {
        // Two touching rectangles forming one region; the detector only
        // separates them once the first is erased and the region shrinks.
        let (w, h) = (2048u32, 2048u32);
        let mut image = PredictionMap::new(w, h, 2);
        for y in 0..h {
            for x in 0..w {
                image.set(x, y, 0, 1.0);
            }
        }
        let mut pixels_a = Vec::new();
        let mut pixels_b = Vec::new();
        for y in 1000..1020 {
            for x in 1000..1040 {
                pixels_a.push((x, y));
            }
            for x in 1040..1070 {
                pixels_b.push((x, y));
            }
        }
        for &(x, y) in pixels_a.iter().chain(&pixels_b) {
            image.set(x, y, 0, 0.05);
            image.set(x, y, 1, 0.95);
        }
        let regions = localize(&image, &OperatingMode::balanced());
        assert_eq!(regions.len(), 1, "the two rectangles must merge");

        let det_a = Detection::new(
            BBox::new(1000.0, 1000.0, 1040.0, 1020.0),
            0.9,
            Label::new("F-16", 3),
        );
        let det_b = Detection::new(
            BBox::new(1040.0, 1000.0, 1070.0, 1020.0),
            0.9,
            Label::new("Su-27", 3),
        );
        let backend = NearestCenterDetector {
            candidates: vec![det_a, det_b],
        };
        let params = PipelineParams::default();
        let (kept, residual, iterations) =
            detect_iterative(&image, &regions, &backend, &params).unwrap();
        assert_eq!(kept.len(), 2, "second iteration recovers the other airframe");
        assert_eq!(iterations.len(), 2);
        assert_eq!(iterations[0].detections_added, 1);
        assert_eq!(iterations[1].detections_added, 1);
        assert_eq!(residual.count_foreground(), 0);
    }

    fn recovery_fixture() -> (PredictionMap, Vec<Detection>) {
        let mut map = PredictionMap::new(700, 300, 2);
        for y in 0..300 {
            for x in 0..700 {
                map.set(x, y, 0, 1.0);
            }
        }
        let det = Detection::new(
            BBox::new(100.0, 100.0, 120.0, 120.0),
            0.9,
            Label::new("F-16", 3),
        );
        (map, vec![det])
    }

    fn square_region(map: &mut PredictionMap, x0: u32, y0: u32, side: u32) -> Region {
        let mut pixels = Vec::new();
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                pixels.push((x, y));
                map.set(x, y, 0, 0.1);
                map.set(x, y, 1, 0.9);
            }
        }
        let mut mask = BinaryMask::new(map.width(), map.height());
        for &(x, y) in &pixels {
            mask.set(x, y, true);
        }
        connected_components(&mask).pop().unwrap()
    }

    #[test]
    fn recovery_size_and_distance_rules() {
        let tax = Taxonomy::default_taxonomy();
        let params = RecoveryParams::default();

        // Same area as the detected aircraft, 50 px away: recovered.
        let (mut map, dets) = recovery_fixture();
        let near = square_region(&mut map, 150, 100, 20);
        let recovered = recover(&[near.clone()], &dets, &params, &tax, &map);
        assert_eq!(recovered.len(), 1);
        let detection = &recovered[0].detection;
        assert_eq!(detection.label.level, 1);
        assert_eq!(detection.label.name, "aircraft");
        assert!((detection.score - 0.9).abs() < 1e-6);
        assert_eq!(detection.bbox, near.bbox);

        // A tiny speck is excluded by the size band.
        let (mut map, dets) = recovery_fixture();
        let speck = square_region(&mut map, 150, 100, 2);
        assert!(recover(&[speck], &dets, &params, &tax, &map).is_empty());

        // Too far from every detection.
        let (mut map, dets) = recovery_fixture();
        let far = square_region(&mut map, 600, 250, 20);
        assert!(recover(&[far], &dets, &params, &tax, &map).is_empty());

        // No detections to anchor to: nothing is recovered.
        let (mut map, _) = recovery_fixture();
        let region = square_region(&mut map, 150, 100, 20);
        assert!(recover(&[region], &[], &params, &tax, &map).is_empty());
    }

    #[test]
    fn noiseless_pipeline_reproduces_ground_truth() {
        let tax = Taxonomy::default_taxonomy();
        let (scene, image, seg, det) = noiseless_setup(10, 21);
        let params = PipelineParams::default();
        let result = run_pipeline(&image, &seg, &det, &tax, &params).unwrap();

        assert_eq!(result.detections.len(), scene.objects.len());
        for object in &scene.objects {
            let bbox = object.footprint.bbox().unwrap();
            let hit = result
                .detections
                .iter()
                .find(|d| d.bbox == bbox)
                .unwrap_or_else(|| panic!("object {} not detected", object.id));
            assert_eq!(hit.label, object.label);
        }
        assert!(result.residual_regions.is_empty());
        assert!(result.trace.recovered.is_empty());
        assert_eq!(result.trace.localized_regions.len(), 10 - 1);
        assert_eq!(result.trace.final_detections, 10);
        assert_eq!(result.trace.tiles_queried, 16);
    }

    #[test]
    fn disjoint_false_positives_cancel_out() {
        let tax = Taxonomy::default_taxonomy();
        let spec = SceneSpec {
            n_aircraft: 20,
            gt_zone_fraction: 0.5,
            seed: 31,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec, &tax).unwrap();
        let image = render_scene_image(&scene);
        let noisy = |seed: u64| SyntheticBackendConfig {
            false_positive_rate: 10.0,
            seed,
            ..SyntheticBackendConfig::default()
        };
        let count_fps = |detections: &[Detection]| {
            detections
                .iter()
                .filter(|d| {
                    scene.objects.iter().all(|o| {
                        overlap_over_target(&Footprint::Box(d.bbox), &o.footprint).unwrap() < 0.5
                    })
                })
                .count()
        };

        let params = PipelineParams::default();
        let (seg, det) = synthetic_backends(&scene, &tax, &noisy(1), &noisy(2), true);
        let individual_seg_fps = localize(seg.full_map(), &params.mode)
            .iter()
            .filter(|r| {
                scene.objects.iter().all(|o| {
                    overlap_over_target(&Footprint::Box(r.bbox), &o.footprint).unwrap() < 0.5
                })
            })
            .count();
        let individual_det_fps = count_fps(det.all_detections());
        assert!(individual_seg_fps > 0 && individual_det_fps > 0);

        let fused = run_pipeline(&image, &seg, &det, &tax, &params).unwrap();
        let fused_fps = count_fps(&fused.detections);
        assert!(
            fused_fps < individual_seg_fps && fused_fps < individual_det_fps,
            "fused {fused_fps} vs seg {individual_seg_fps} / det {individual_det_fps}"
        );

        // Corroborating placement keeps the shared mistakes.
        let (seg_c, det_c) = synthetic_backends(&scene, &tax, &noisy(1), &noisy(2), false);
        let fused_corroborated = run_pipeline(&image, &seg_c, &det_c, &tax, &params).unwrap();
        assert!(
            count_fps(&fused_corroborated.detections) > fused_fps,
            "corroborated false positives must survive fusion"
        );
    }
}
