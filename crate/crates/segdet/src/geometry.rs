//! Axis-aligned box arithmetic, overlap measures and non-maximum
//! suppression.
//!
//! Boxes live in continuous pixel coordinates. Where a box has to be
//! compared against rasterized pixels, the convention is: pixel `(x, y)`
//! belongs to a box iff its center `(x + 0.5, y + 0.5)` lies inside the
//! half-open extent `[x_min, x_max) x [y_min, y_max)`.

use thiserror::Error;

use crate::taxonomy::Label;

/// Default IoU threshold for duplicate suppression.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.35;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("overlap target is empty")]
    EmptyTarget,
}

/// Axis-aligned box, `x_min <= x_max` and `y_min <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max, "degenerate box bounds");
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Intersection area with `other`.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// True when the center of pixel `(x, y)` falls inside the box.
    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        self.contains_point(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Inclusive-exclusive integer pixel ranges `(x0..x1, y0..y1)` covered
    /// under the pixel-center rule, clipped to a `width x height` raster.
    pub fn pixel_ranges(
        &self,
        width: u32,
        height: u32,
    ) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        let clamp_axis = |min: f64, max: f64, extent: u32| -> std::ops::Range<u32> {
            let lo = (min - 0.5).ceil().max(0.0) as u32;
            let hi = ((max - 0.5).ceil().max(0.0) as u32).min(extent);
            lo.min(extent)..hi.max(lo.min(extent))
        };
        (
            clamp_axis(self.x_min, self.x_max, width),
            clamp_axis(self.y_min, self.y_max, height),
        )
    }

    /// Number of pixel centers inside the box (unclipped).
    fn pixel_count(&self) -> u64 {
        let nx = ((self.x_max - 0.5).ceil() - (self.x_min - 0.5).ceil()).max(0.0);
        let ny = ((self.y_max - 0.5).ceil() - (self.y_min - 0.5).ceil()).max(0.0);
        nx as u64 * ny as u64
    }

    /// The tight continuous box around a set of pixels, each pixel taken as
    /// the unit square `[x, x+1) x [y, y+1)`.
    pub fn around_pixels(pixels: &[(u32, u32)]) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for &(x, y) in pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if pixels.is_empty() {
            None
        } else {
            Some(BBox::new(
                x0 as f64,
                y0 as f64,
                (x1 + 1) as f64,
                (y1 + 1) as f64,
            ))
        }
    }
}

/// Intersection over union of two boxes; 0 by convention when the union has
/// no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A scored, labeled box. The label is level 3 when it comes from a
/// detector and level 1 when it comes from remainder recovery.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub label: Label,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, label: Label) -> Self {
        debug_assert!((0.0..=1.0).contains(&score), "score outside [0, 1]");
        Detection { bbox, score, label }
    }
}

/// Deterministic processing order for NMS and matching: descending score,
/// ties broken by larger area, then lexicographic coordinates.
pub(crate) fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.bbox.area().total_cmp(&a.bbox.area()))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

/// Greedy descending-score suppression: keep the highest-scoring detection,
/// drop everything with IoU strictly above `threshold` against a kept one,
/// repeat. Output is ordered by descending score.
pub fn nms(detections: &[Detection], threshold: f64) -> Vec<Detection> {
    debug_assert!((0.0..=1.0).contains(&threshold));
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by(|a, b| detection_order(a, b));

    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &det.bbox) <= threshold) {
            kept.push(det.clone());
        }
    }
    kept
}

/// Ground-truth or predicted object extent: either a continuous box or an
/// explicit pixel set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Footprint {
    Box(BBox),
    Pixels(Vec<(u32, u32)>),
}

impl Footprint {
    /// Pixel footprint; the pixel list is sorted into scan order so equal
    /// sets compare equal.
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        Footprint::Pixels(pixels)
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Footprint::Box(b) => b.area() == 0.0,
            Footprint::Pixels(p) => p.is_empty(),
        }
    }

    /// Extent in pixel-count units for boxes and pixel sets alike.
    fn measure(&self) -> f64 {
        match self {
            Footprint::Box(b) => b.pixel_count() as f64,
            Footprint::Pixels(p) => p.len() as f64,
        }
    }

    pub fn bbox(&self) -> Option<BBox> {
        match self {
            Footprint::Box(b) => Some(*b),
            Footprint::Pixels(p) => BBox::around_pixels(p),
        }
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        match self {
            Footprint::Box(b) => {
                if b.area() > 0.0 {
                    Some(b.center())
                } else {
                    None
                }
            }
            Footprint::Pixels(p) => {
                if p.is_empty() {
                    return None;
                }
                let n = p.len() as f64;
                let (sx, sy) = p.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
                    (sx + x as f64 + 0.5, sy + y as f64 + 0.5)
                });
                Some((sx / n, sy / n))
            }
        }
    }

    /// Intersection measure with `other`, in pixel counts. Box-box pairs use
    /// continuous intersection area; any pixel side is counted discretely.
    fn intersection_measure(&self, other: &Footprint) -> f64 {
        match (self, other) {
            (Footprint::Box(a), Footprint::Box(b)) => a.intersection_area(b),
            (Footprint::Box(b), Footprint::Pixels(p))
            | (Footprint::Pixels(p), Footprint::Box(b)) => {
                p.iter().filter(|&&(x, y)| b.contains_pixel(x, y)).count() as f64
            }
            (Footprint::Pixels(a), Footprint::Pixels(b)) => {
                // Both are sorted in scan order.
                let key = |&(x, y): &(u32, u32)| (y, x);
                let (mut i, mut j, mut count) = (0, 0, 0u64);
                while i < a.len() && j < b.len() {
                    match key(&a[i]).cmp(&key(&b[j])) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            count += 1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                count as f64
            }
        }
    }
}

/// `|pred ∩ target| / |target|`: intersection over the ground-truth extent.
pub fn overlap_over_target(pred: &Footprint, target: &Footprint) -> Result<f64, GeometryError> {
    let denom = target.measure();
    if denom <= 0.0 {
        return Err(GeometryError::EmptyTarget);
    }
    Ok((pred.intersection_measure(target) / denom).clamp(0.0, 1.0))
}

/// Intersection over union for footprints, in the same mixed pixel measure
/// as [`overlap_over_target`].
pub fn footprint_iou(a: &Footprint, b: &Footprint) -> f64 {
    match (a, b) {
        (Footprint::Box(ba), Footprint::Box(bb)) => iou(ba, bb),
        _ => {
            let inter = a.intersection_measure(b);
            let union = a.measure() + b.measure() - inter;
            if union <= 0.0 {
                0.0
            } else {
                (inter / union).clamp(0.0, 1.0)
            }
        }
    }
}
