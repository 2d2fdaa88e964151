//! Synthetic backends: scripted test doubles driven by a ground-truth
//! scene and a noise configuration.
//!
//! The segmentation double paints object footprints into a full-scene
//! probability map and adds blob false positives; the detection double
//! emits jittered boxes with its own miss/false-positive/label-confusion
//! behavior. Both are pure functions of (scene, config, seed).
//!
//! Noise comes in two confidence tiers so operating modes behave the way
//! real models do: confident output survives every preset threshold, weak
//! output (faint paint, low scores) appears only when thresholds are
//! lowered. False positives are laid out in reserved areas of the scene so
//! the two models' errors can be made disjoint on demand, plus an optional
//! share of "near" blobs next to true objects, which is what remainder
//! recovery can mistake for aircraft.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{box_inside, BackendError, DetectionBackend, SegmentationBackend};
use crate::geometry::{BBox, Detection, Footprint};
use crate::ingest::Scene;
use crate::raster::PredictionMap;
use crate::taxonomy::Taxonomy;

/// Foreground probability painted for confidently segmented objects.
pub const STRONG_FOREGROUND: f32 = 0.95;
/// Foreground probability of weak paint; visible below a 0.5 threshold
/// only.
pub const WEAK_FOREGROUND: f32 = 0.42;
/// Score range of confident detections.
pub const STRONG_SCORE_RANGE: (f64, f64) = (0.75, 1.0);
/// Score range of weak detections; kept below every balanced/precision
/// threshold.
pub const WEAK_SCORE_RANGE: (f64, f64) = (0.35, 0.45);

/// Distance from a host object at which near false-positive blobs are
/// placed.
pub const NEAR_FP_DISTANCE: f64 = 150.0;

/// Controllable error rates for one synthetic backend. All rates that are
/// probabilities lie in [0, 1]; false-positive rates are objects per km².
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticBackendConfig {
    /// Probability that an object is not rendered at full confidence.
    pub miss_rate: f64,
    /// Confident false positives per km²; the count is `round(rate * area)`
    /// so calibrated scenarios hit their operating point reliably.
    pub false_positive_rate: f64,
    /// Sub-threshold false positives per km², visible in low-threshold
    /// modes only.
    pub weak_false_positive_rate: f64,
    /// Fraction of missed objects that are still rendered weakly instead of
    /// being dropped outright.
    pub weak_miss_fraction: f64,
    /// Fraction of confident false positives placed next to true objects
    /// rather than in the reserved false-positive area.
    pub near_fp_fraction: f64,
    /// Probability that a detection carries the wrong level-3 label.
    pub label_confusion_rate: f64,
    /// Per-axis uniform box shift in pixels.
    pub localization_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticBackendConfig {
    fn default() -> Self {
        SyntheticBackendConfig {
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            weak_false_positive_rate: 0.0,
            weak_miss_fraction: 0.0,
            near_fp_fraction: 0.0,
            label_confusion_rate: 0.0,
            localization_jitter: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticBackendConfig {
    pub fn noiseless(seed: u64) -> Self {
        SyntheticBackendConfig {
            seed,
            ..SyntheticBackendConfig::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Scene areas reserved for false positives
// ---------------------------------------------------------------------------

/// Area reserved for segmentation false positives: right third of the
/// scene, upper band.
pub fn seg_fp_zone(width: u32, height: u32) -> BBox {
    BBox::new(
        width as f64 * 2.0 / 3.0,
        0.0,
        width as f64,
        height as f64 * 5.0 / 12.0,
    )
}

/// Area reserved for detection false positives: right third, lower band.
/// Separated from [`seg_fp_zone`] by a sixth of the scene height so
/// detector query windows around one model's false positives never reach
/// the other's.
pub fn det_fp_zone(width: u32, height: u32) -> BBox {
    BBox::new(
        width as f64 * 2.0 / 3.0,
        height as f64 * 7.0 / 12.0,
        width as f64,
        height as f64,
    )
}

const FP_SLOT: f64 = 80.0;

/// Deterministic, shuffled placement slots inside a zone; slots are spaced
/// so blobs never touch and boxes never overlap.
fn zone_slots(zone: &BBox, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let cols = (zone.width() / FP_SLOT).floor() as u32;
    let rows = (zone.height() / FP_SLOT).floor() as u32;
    let mut slots = Vec::with_capacity((cols * rows) as usize);
    for r in 0..rows {
        for c in 0..cols {
            slots.push((
                zone.x_min + (c as f64 + 0.5) * FP_SLOT,
                zone.y_min + (r as f64 + 0.5) * FP_SLOT,
            ));
        }
    }
    slots.shuffle(rng);
    slots
}

/// Pixels of an axis-aligned ellipse footprint.
pub fn ellipse_pixels(cx: f64, cy: f64, half_x: f64, half_y: f64) -> Vec<(u32, u32)> {
    let mut pixels = Vec::new();
    let x0 = (cx - half_x - 1.0).floor().max(0.0) as u32;
    let x1 = (cx + half_x + 1.0).ceil() as u32;
    let y0 = (cy - half_y - 1.0).floor().max(0.0) as u32;
    let y1 = (cy + half_y + 1.0).ceil() as u32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / half_x;
            let dy = (y as f64 + 0.5 - cy) / half_y;
            if dx * dx + dy * dy <= 1.0 {
                pixels.push((x, y));
            }
        }
    }
    pixels
}

/// Aircraft-plausible ellipse half-axes.
pub fn sample_half_axes(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = rng.gen_range(14.0..20.0);
    let b = rng.gen_range(10.0..14.0);
    if rng.gen_bool(0.5) {
        (a, b)
    } else {
        (b, a)
    }
}

fn clip_pixels(pixels: Vec<(u32, u32)>, width: u32, height: u32) -> Vec<(u32, u32)> {
    pixels
        .into_iter()
        .filter(|&(x, y)| x < width && y < height)
        .collect()
}

// ---------------------------------------------------------------------------
// Per-object render decisions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Confidence {
    Strong,
    Weak,
    Dropped,
}

/// One Bernoulli draw per object for the miss decision plus one for the
/// weak fallback, in object order.
fn object_confidences(
    objects: usize,
    cfg: &SyntheticBackendConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Confidence> {
    (0..objects)
        .map(|_| {
            let missed = rng.gen_bool(cfg.miss_rate);
            let weak = rng.gen_bool(cfg.weak_miss_fraction.clamp(0.0, 1.0));
            if !missed {
                Confidence::Strong
            } else if weak {
                Confidence::Weak
            } else {
                Confidence::Dropped
            }
        })
        .collect()
}

fn fp_count(rate: f64, area_km2: f64) -> usize {
    (rate * area_km2).round().max(0.0) as usize
}

// ---------------------------------------------------------------------------
// Segmentation double
// ---------------------------------------------------------------------------

/// Full-scene two-channel (background, foreground) map built once from the
/// scene; tile queries crop it.
pub struct SyntheticSegmentation {
    map: PredictionMap,
}

impl SyntheticSegmentation {
    pub fn full_map(&self) -> &PredictionMap {
        &self.map
    }
}

impl SegmentationBackend for SyntheticSegmentation {
    fn segment_tile(
        &self,
        _image: &PredictionMap,
        origin: (u32, u32),
        size: (u32, u32),
    ) -> Result<PredictionMap, BackendError> {
        if origin.0 + size.0 > self.map.width() || origin.1 + size.1 > self.map.height() {
            return Err(BackendError::MissingPrediction(origin.0, origin.1));
        }
        Ok(self.map.crop(origin.0, origin.1, size.0, size.1))
    }
}

// ---------------------------------------------------------------------------
// Detection double
// ---------------------------------------------------------------------------

/// Precomputed full-scene detection list; window queries filter it down to
/// fully contained boxes.
pub struct SyntheticDetection {
    detections: Vec<Detection>,
}

impl SyntheticDetection {
    /// The complete unfiltered list, useful for standalone evaluation.
    pub fn all_detections(&self) -> &[Detection] {
        &self.detections
    }
}

impl DetectionBackend for SyntheticDetection {
    fn detect_region(
        &self,
        _image: &PredictionMap,
        window: &BBox,
    ) -> Result<Vec<Detection>, BackendError> {
        Ok(self
            .detections
            .iter()
            .filter(|d| box_inside(&d.bbox, window))
            .cloned()
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

fn paint(map: &mut PredictionMap, pixels: &[(u32, u32)], foreground: f32) {
    for &(x, y) in pixels {
        map.set(x, y, 0, 1.0 - foreground);
        map.set(x, y, 1, foreground);
    }
}

/// Minimum clearance kept between a near blob and every object footprint.
const NEAR_BLOB_CLEARANCE: f64 = 24.0;

/// Picks a spot [`NEAR_FP_DISTANCE`] away from a host object such that the
/// blob stays clear of all footprints and previously placed blobs. Falls
/// back to `None` when the neighborhood is too crowded.
fn near_blob_center(
    scene: &Scene,
    host: &BBox,
    half: (f64, f64),
    placed: &[BBox],
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let (cx, cy) = host.center();
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let mut directions = [
        (1.0, 0.0),
        (0.0, 1.0),
        (-1.0, 0.0),
        (0.0, -1.0),
        (diag, diag),
        (-diag, diag),
        (diag, -diag),
        (-diag, -diag),
    ];
    directions.shuffle(rng);
    'dirs: for (dx, dy) in directions {
        let (bx, by) = (cx + dx * NEAR_FP_DISTANCE, cy + dy * NEAR_FP_DISTANCE);
        let candidate = BBox::new(bx - half.0, by - half.1, bx + half.0, by + half.1);
        if candidate.x_min < 0.0
            || candidate.y_min < 0.0
            || candidate.x_max > scene.width as f64
            || candidate.y_max > scene.height as f64
        {
            continue;
        }
        for object in &scene.objects {
            if let Some(bbox) = object.footprint.bbox() {
                if boxes_closer_than(&candidate, &bbox, NEAR_BLOB_CLEARANCE) {
                    continue 'dirs;
                }
            }
        }
        for other in placed {
            if boxes_closer_than(&candidate, other, NEAR_BLOB_CLEARANCE) {
                continue 'dirs;
            }
        }
        return Some((bx, by));
    }
    None
}

fn boxes_closer_than(a: &BBox, b: &BBox, clearance: f64) -> bool {
    let gap_x = (b.x_min - a.x_max).max(a.x_min - b.x_max);
    let gap_y = (b.y_min - a.y_max).max(a.y_min - b.y_max);
    gap_x.max(gap_y) < clearance
}

/// Builds the paired synthetic backends for a scene. With `disjoint_fp` on,
/// detection false positives go to their own reserved area; off, they are
/// placed at the segmentation blobs' positions so the two models corroborate
/// each other's mistakes.
pub fn synthetic_backends(
    scene: &Scene,
    taxonomy: &Taxonomy,
    seg_cfg: &SyntheticBackendConfig,
    det_cfg: &SyntheticBackendConfig,
    disjoint_fp: bool,
) -> (SyntheticSegmentation, SyntheticDetection) {
    let area = scene.area_km2();
    let (w, h) = (scene.width, scene.height);

    // -- Segmentation map -------------------------------------------------
    let mut map = PredictionMap::new(w, h, 2);
    for y in 0..h {
        for x in 0..w {
            map.set(x, y, 0, 1.0);
        }
    }

    let mut seg_rng = ChaCha8Rng::seed_from_u64(seg_cfg.seed);
    seg_rng.set_stream(1);
    let seg_confidence = object_confidences(scene.objects.len(), seg_cfg, &mut seg_rng);
    for (object, confidence) in scene.objects.iter().zip(&seg_confidence) {
        let foreground = match confidence {
            Confidence::Strong => STRONG_FOREGROUND,
            Confidence::Weak => WEAK_FOREGROUND,
            Confidence::Dropped => continue,
        };
        match &object.footprint {
            Footprint::Pixels(pixels) => paint(&mut map, pixels, foreground),
            Footprint::Box(bbox) => {
                let (xs, ys) = bbox.pixel_ranges(w, h);
                let pixels: Vec<(u32, u32)> =
                    ys.flat_map(|y| xs.clone().map(move |x| (x, y))).collect();
                paint(&mut map, &pixels, foreground);
            }
        }
    }

    // Confident blobs: a share near true objects, the rest in the reserved
    // area. Blob geometry mirrors the aircraft size distribution so size
    // filters treat them like objects.
    let mut blob_rng = ChaCha8Rng::seed_from_u64(seg_cfg.seed);
    blob_rng.set_stream(2);
    let strong_blobs = fp_count(seg_cfg.false_positive_rate, area);
    let near_blobs =
        (strong_blobs as f64 * seg_cfg.near_fp_fraction.clamp(0.0, 1.0)).round() as usize;
    let far_slots = zone_slots(&seg_fp_zone(w, h), &mut blob_rng);
    let mut far_used = 0usize;
    let mut strong_blob_centers: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut placed_near: Vec<BBox> = Vec::new();
    for i in 0..strong_blobs {
        let half = sample_half_axes(&mut blob_rng);
        let near = if i < near_blobs && !scene.objects.is_empty() {
            let host_idx = blob_rng.gen_range(0..scene.objects.len());
            scene.objects[host_idx]
                .footprint
                .bbox()
                .and_then(|host| near_blob_center(scene, &host, half, &placed_near, &mut blob_rng))
        } else {
            None
        };
        let (cx, cy) = match near {
            Some(c) => {
                placed_near.push(BBox::new(c.0 - half.0, c.1 - half.1, c.0 + half.0, c.1 + half.1));
                c
            }
            None => match far_slots.get(far_used) {
                Some(&slot) => {
                    far_used += 1;
                    slot
                }
                None => continue,
            },
        };
        strong_blob_centers.push((cx, cy, half.0, half.1));
    }
    for &(cx, cy, hx, hy) in &strong_blob_centers {
        let pixels = clip_pixels(ellipse_pixels(cx, cy, hx, hy), w, h);
        paint(&mut map, &pixels, STRONG_FOREGROUND);
    }

    // Weak blobs sit in the reserved area too, consuming the slot list
    // after the confident blobs.
    let mut weak_rng = ChaCha8Rng::seed_from_u64(seg_cfg.seed);
    weak_rng.set_stream(3);
    let weak_blobs = fp_count(seg_cfg.weak_false_positive_rate, area);
    let mut weak_blob_centers: Vec<(f64, f64, f64, f64)> = Vec::new();
    for slot in far_slots.iter().skip(far_used).take(weak_blobs) {
        let half = sample_half_axes(&mut weak_rng);
        weak_blob_centers.push((slot.0, slot.1, half.0, half.1));
        let pixels = clip_pixels(ellipse_pixels(slot.0, slot.1, half.0, half.1), w, h);
        paint(&mut map, &pixels, WEAK_FOREGROUND);
    }

    // -- Detection list ---------------------------------------------------
    let level3 = taxonomy.level3();
    let mut det_rng = ChaCha8Rng::seed_from_u64(det_cfg.seed);
    det_rng.set_stream(1);
    let det_confidence = object_confidences(scene.objects.len(), det_cfg, &mut det_rng);
    let mut detections = Vec::new();
    for (object, confidence) in scene.objects.iter().zip(&det_confidence) {
        let score_range = match confidence {
            Confidence::Strong => STRONG_SCORE_RANGE,
            Confidence::Weak => WEAK_SCORE_RANGE,
            Confidence::Dropped => continue,
        };
        let bbox = object.footprint.bbox().expect("objects are non-empty");
        let j = det_cfg.localization_jitter;
        let (dx, dy) = (det_rng.gen_range(-1.0..1.0f64) * j, det_rng.gen_range(-1.0..1.0f64) * j);
        let shifted = BBox::new(
            (bbox.x_min + dx).max(0.0),
            (bbox.y_min + dy).max(0.0),
            (bbox.x_max + dx).min(scene.width as f64),
            (bbox.y_max + dy).min(scene.height as f64),
        );
        let score = det_rng.gen_range(score_range.0..score_range.1);
        let confused = det_rng.gen_bool(det_cfg.label_confusion_rate.clamp(0.0, 1.0));
        let label = if confused && level3.len() > 1 {
            let mut pick = object.label.name.clone();
            while pick == object.label.name {
                pick = level3[det_rng.gen_range(0..level3.len())].clone();
            }
            taxonomy.label(&pick).expect("level-3 name")
        } else {
            object.label.clone()
        };
        detections.push(Detection::new(shifted, score, label));
    }

    // Detection false positives stream independently from the object draws.
    let mut fp_rng = ChaCha8Rng::seed_from_u64(det_cfg.seed);
    fp_rng.set_stream(2);
    let strong_fp = fp_count(det_cfg.false_positive_rate, area);
    let weak_fp = fp_count(det_cfg.weak_false_positive_rate, area);
    let mut fp_boxes: Vec<(BBox, bool)> = Vec::new(); // (box, strong?)
    if disjoint_fp {
        let slots = zone_slots(&det_fp_zone(w, h), &mut fp_rng);
        for (idx, &(cx, cy)) in slots.iter().take(strong_fp + weak_fp).enumerate() {
            let half = sample_half_axes(&mut fp_rng);
            fp_boxes.push((
                BBox::new(cx - half.0, cy - half.1, cx + half.0, cy + half.1),
                idx < strong_fp,
            ));
        }
    } else {
        // Corroborating mode: detector false positives sit exactly on the
        // segmentation blobs, strongest first.
        for (idx, &(cx, cy, hx, hy)) in strong_blob_centers
            .iter()
            .chain(weak_blob_centers.iter())
            .take(strong_fp + weak_fp)
            .enumerate()
        {
            fp_boxes.push((
                BBox::new(cx - hx, cy - hy, cx + hx, cy + hy),
                idx < strong_fp,
            ));
        }
        // Any surplus beyond the blob count goes to the detection area.
        if strong_fp + weak_fp > fp_boxes.len() {
            let slots = zone_slots(&det_fp_zone(w, h), &mut fp_rng);
            for (extra, &(cx, cy)) in slots
                .iter()
                .take(strong_fp + weak_fp - fp_boxes.len())
                .enumerate()
            {
                let half = sample_half_axes(&mut fp_rng);
                fp_boxes.push((
                    BBox::new(cx - half.0, cy - half.1, cx + half.0, cy + half.1),
                    fp_boxes.len() + extra < strong_fp,
                ));
            }
        }
    }
    for (bbox, strong) in fp_boxes {
        let range = if strong { STRONG_SCORE_RANGE } else { WEAK_SCORE_RANGE };
        let score = fp_rng.gen_range(range.0..range.1);
        let label_name = &level3[fp_rng.gen_range(0..level3.len())];
        detections.push(Detection::new(
            bbox,
            score,
            taxonomy.label(label_name).expect("level-3 name"),
        ));
    }

    (SyntheticSegmentation { map }, SyntheticDetection { detections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GtObject;
    use crate::taxonomy::Label;

    /// A scene of `n` tiny square footprints on a grid, enough for rate
    /// statistics without painting megapixels.
    fn tiny_scene(n: u32, taxonomy: &Taxonomy) -> Scene {
        let cols = 40u32;
        let rows = n.div_ceil(cols);
        let mut objects = Vec::new();
        for i in 0..n {
            let (cx, cy) = (16 + (i % cols) * 16, 16 + (i / cols) * 16);
            let pixels: Vec<(u32, u32)> = (0..3)
                .flat_map(|dy| (0..3).map(move |dx| (cx + dx, cy + dy)))
                .collect();
            objects.push(GtObject {
                id: i + 1,
                label: Label::new(taxonomy.level3()[(i as usize) % 61].clone(), 3),
                footprint: Footprint::from_pixels(pixels),
            });
        }
        Scene {
            width: 16 * (cols + 2),
            height: 16 * (rows + 2),
            resolution_cm: 40.0,
            objects,
        }
    }

    #[test]
    fn noiseless_backends_reproduce_ground_truth() {
        let tax = Taxonomy::default_taxonomy();
        let scene = tiny_scene(25, &tax);
        let (seg, det) = synthetic_backends(
            &scene,
            &tax,
            &SyntheticBackendConfig::noiseless(7),
            &SyntheticBackendConfig::noiseless(8),
            true,
        );
        // Every footprint painted strong, nothing else painted.
        let map = seg.full_map();
        let mut painted = 0usize;
        for y in 0..map.height() {
            for x in 0..map.width() {
                if map.foreground(x, y) > 0.5 {
                    painted += 1;
                }
            }
        }
        assert_eq!(painted, 9 * 25);
        // One detection per object, exact box, exact label.
        assert_eq!(det.all_detections().len(), 25);
        for (d, o) in det.all_detections().iter().zip(&scene.objects) {
            assert_eq!(d.bbox, o.footprint.bbox().unwrap());
            assert_eq!(d.label, o.label);
            assert!(d.score >= STRONG_SCORE_RANGE.0);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let tax = Taxonomy::default_taxonomy();
        let scene = tiny_scene(40, &tax);
        let seg_cfg = SyntheticBackendConfig {
            miss_rate: 0.2,
            false_positive_rate: 3.0,
            localization_jitter: 2.0,
            label_confusion_rate: 0.3,
            seed: 99,
            ..Default::default()
        };
        let (seg_a, det_a) = synthetic_backends(&scene, &tax, &seg_cfg, &seg_cfg, true);
        let (seg_b, det_b) = synthetic_backends(&scene, &tax, &seg_cfg, &seg_cfg, true);
        assert_eq!(seg_a.full_map(), seg_b.full_map());
        assert_eq!(det_a.all_detections(), det_b.all_detections());
    }

    #[test]
    fn miss_rate_within_binomial_band() {
        let tax = Taxonomy::default_taxonomy();
        let scene = tiny_scene(1000, &tax);
        let cfg = SyntheticBackendConfig {
            miss_rate: 0.1,
            seed: 5,
            ..Default::default()
        };
        let (seg, det) =
            synthetic_backends(&scene, &tax, &cfg, &cfg, true);
        let map = seg.full_map();
        let seg_missed = scene
            .objects
            .iter()
            .filter(|o| {
                let Footprint::Pixels(px) = &o.footprint else { panic!() };
                map.foreground(px[0].0, px[0].1) < 0.5
            })
            .count();
        // 3-sigma band around 100 for Binomial(1000, 0.1).
        assert!(
            (70..=130).contains(&seg_missed),
            "segmentation missed {seg_missed}, outside the 3-sigma band"
        );
        let det_missed = 1000 - det.all_detections().len();
        assert!(
            (70..=130).contains(&det_missed),
            "detector missed {det_missed}, outside the 3-sigma band"
        );
    }

    #[test]
    fn false_positive_zones_are_disjoint() {
        let tax = Taxonomy::default_taxonomy();
        let scene = Scene {
            width: 3072,
            height: 3072,
            resolution_cm: 50.0,
            objects: vec![],
        };
        let cfg = SyntheticBackendConfig {
            false_positive_rate: 8.0,
            seed: 3,
            ..Default::default()
        };
        let (seg, det) = synthetic_backends(&scene, &tax, &cfg, &cfg, true);

        let seg_zone = seg_fp_zone(3072, 3072);
        let det_zone = det_fp_zone(3072, 3072);
        // Painted pixels only in the segmentation area.
        let map = seg.full_map();
        for y in (0..3072).step_by(7) {
            for x in (0..3072).step_by(7) {
                if map.foreground(x, y) > 0.3 {
                    assert!(seg_zone.contains_pixel(x, y), "paint outside zone at ({x},{y})");
                }
            }
        }
        // Detection boxes only in the detection area.
        assert!(!det.all_detections().is_empty());
        for d in det.all_detections() {
            assert!(box_inside(&d.bbox, &det_zone), "{:?} outside zone", d.bbox);
        }
    }

    #[test]
    fn corroborating_mode_reuses_blob_positions() {
        let tax = Taxonomy::default_taxonomy();
        let scene = Scene {
            width: 3072,
            height: 3072,
            resolution_cm: 50.0,
            objects: vec![],
        };
        let cfg = SyntheticBackendConfig {
            false_positive_rate: 6.0,
            seed: 4,
            ..Default::default()
        };
        let (seg, det) = synthetic_backends(&scene, &tax, &cfg, &cfg, false);
        let map = seg.full_map();
        for d in det.all_detections() {
            let (cx, cy) = d.bbox.center();
            assert!(
                map.foreground(cx as u32, cy as u32) > 0.5,
                "detection FP at ({cx},{cy}) has no matching blob"
            );
        }
    }

    #[test]
    fn window_queries_return_contained_boxes_only() {
        let tax = Taxonomy::default_taxonomy();
        let scene = tiny_scene(10, &tax);
        let (_, det) = synthetic_backends(
            &scene,
            &tax,
            &SyntheticBackendConfig::noiseless(1),
            &SyntheticBackendConfig::noiseless(1),
            true,
        );
        let image = PredictionMap::new(scene.width, scene.height, 1);
        let window = BBox::new(0.0, 0.0, 64.0, 64.0);
        for d in det.detect_region(&image, &window).unwrap() {
            assert!(box_inside(&d.bbox, &window));
        }
        let everything = det
            .detect_region(
                &image,
                &BBox::new(0.0, 0.0, scene.width as f64, scene.height as f64),
            )
            .unwrap();
        assert_eq!(everything.len(), 10);
    }
}
