//! Scene loading, tiling with overlap, prediction stitching, deterministic
//! augmentation transforms and dataset statistics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Footprint};
use crate::raster::{PredictionMap, RasterError};
use crate::taxonomy::{Label, Taxonomy, TaxonomyError};

/// Training-tile edge length.
pub const DEFAULT_TILE_SIZE: u32 = 512;
/// Overlap between neighboring tiles.
pub const DEFAULT_TILE_OVERLAP: u32 = 128;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("image {width}x{height} is smaller than the {tile_size}px tile")]
    ImageSmallerThanTile {
        width: u32,
        height: u32,
        tile_size: u32,
    },
    #[error("overlap {overlap} must be smaller than the tile size {tile_size}")]
    OverlapTooLarge { overlap: u32, tile_size: u32 },
    #[error("tile channel counts differ: {0} vs {1}")]
    ChannelMismatch(u32, u32),
    #[error("no tile covers pixel ({0}, {1})")]
    UncoveredPixel(u32, u32),
    #[error("stitch received no tiles")]
    NoTiles,
    #[error("tile at ({x}, {y}) exceeds the {width}x{height} canvas")]
    TileOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
    #[error("object {id}: {reason}")]
    BadObject { id: u32, reason: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

// ---------------------------------------------------------------------------
// Tiling
// ---------------------------------------------------------------------------

/// Tile origins covering an image; origins advance by `tile_size - overlap`
/// and the final origin per axis is clamped so every pixel is covered by an
/// in-bounds tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub overlap: u32,
    pub origins: Vec<(u32, u32)>,
}

impl TileGrid {
    pub fn stride(&self) -> u32 {
        self.tile_size - self.overlap
    }
}

fn axis_origins(size: u32, tile_size: u32, stride: u32) -> Vec<u32> {
    let max_origin = size - tile_size;
    let mut origins = Vec::new();
    let mut o = 0;
    while o < max_origin {
        origins.push(o);
        o += stride;
    }
    origins.push(max_origin);
    origins
}

pub fn make_grid(
    width: u32,
    height: u32,
    tile_size: u32,
    overlap: u32,
) -> Result<TileGrid, IngestError> {
    if overlap >= tile_size {
        return Err(IngestError::OverlapTooLarge { overlap, tile_size });
    }
    if width < tile_size || height < tile_size {
        return Err(IngestError::ImageSmallerThanTile {
            width,
            height,
            tile_size,
        });
    }
    let stride = tile_size - overlap;
    let xs = axis_origins(width, tile_size, stride);
    let ys = axis_origins(height, tile_size, stride);
    let mut origins = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            origins.push((x, y));
        }
    }
    Ok(TileGrid {
        tile_size,
        overlap,
        origins,
    })
}

/// Cuts an image into grid tiles, pairing each crop with its origin.
pub fn tile_image(image: &PredictionMap, grid: &TileGrid) -> Vec<((u32, u32), PredictionMap)> {
    grid.origins
        .iter()
        .map(|&(x, y)| ((x, y), image.crop(x, y, grid.tile_size, grid.tile_size)))
        .collect()
}

/// Reassembles per-tile maps into one canvas: overlapping predictions are
/// averaged per pixel, then renormalized so channels sum to one.
pub fn stitch(
    tiles: &[((u32, u32), PredictionMap)],
    width: u32,
    height: u32,
) -> Result<PredictionMap, IngestError> {
    let (_, first) = tiles.first().ok_or(IngestError::NoTiles)?;
    let channels = first.channels();
    for (_, map) in tiles {
        if map.channels() != channels {
            return Err(IngestError::ChannelMismatch(channels, map.channels()));
        }
    }

    let c = channels as usize;
    let mut sums = vec![0.0f64; width as usize * height as usize * c];
    let mut counts = vec![0u32; width as usize * height as usize];
    for &((ox, oy), ref map) in tiles {
        if ox + map.width() > width || oy + map.height() > height {
            return Err(IngestError::TileOutOfBounds {
                x: ox,
                y: oy,
                width,
                height,
            });
        }
        for ty in 0..map.height() {
            for tx in 0..map.width() {
                let (x, y) = (ox + tx, oy + ty);
                let pixel = (y as usize * width as usize) + x as usize;
                counts[pixel] += 1;
                for ch in 0..c {
                    sums[pixel * c + ch] += map.get(tx, ty, ch as u32) as f64;
                }
            }
        }
    }

    let mut values = vec![0.0f32; width as usize * height as usize * c];
    for (pixel, &count) in counts.iter().enumerate() {
        if count == 0 {
            let x = (pixel % width as usize) as u32;
            let y = (pixel / width as usize) as u32;
            return Err(IngestError::UncoveredPixel(x, y));
        }
        let mut pixel_sum = 0.0f64;
        for ch in 0..c {
            pixel_sum += sums[pixel * c + ch];
        }
        // Renormalize multi-channel distributions against the averaged
        // channel sum; single-band rasters keep the plain average.
        let norm = pixel_sum / count as f64;
        for ch in 0..c {
            let averaged = sums[pixel * c + ch] / count as f64;
            values[pixel * c + ch] = if c > 1 && norm > 0.0 {
                (averaged / norm) as f32
            } else {
                averaged as f32
            };
        }
    }
    Ok(PredictionMap::from_values(width, height, channels, values))
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Deterministic augmentation transforms. Rotations are quarter-turn
/// multiples (clockwise) so ground truth stays pixel-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    FlipH,
    FlipV,
    /// `Rotate90(k)` rotates by `k` quarter turns clockwise.
    Rotate90(u8),
    Grayscale,
    HistEqualize,
    Normalize,
}

impl Transform {
    pub fn is_geometric(&self) -> bool {
        matches!(self, Transform::FlipH | Transform::FlipV | Transform::Rotate90(_))
    }
}

/// Maps a pixel coordinate through a geometric transform of a
/// `width x height` raster. Radiometric transforms leave coordinates alone.
pub fn transform_pixel(
    (x, y): (u32, u32),
    transform: Transform,
    width: u32,
    height: u32,
) -> (u32, u32) {
    match transform {
        Transform::FlipH => (width - 1 - x, y),
        Transform::FlipV => (x, height - 1 - y),
        Transform::Rotate90(k) => {
            let (mut px, mut py, mut w, mut h) = (x, y, width, height);
            for _ in 0..(k % 4) {
                let (nx, ny) = (h - 1 - py, px);
                px = nx;
                py = ny;
                std::mem::swap(&mut w, &mut h);
            }
            (px, py)
        }
        _ => (x, y),
    }
}

/// Raster dimensions after a transform.
pub fn transformed_size(transform: Transform, width: u32, height: u32) -> (u32, u32) {
    match transform {
        Transform::Rotate90(k) if k % 2 == 1 => (height, width),
        _ => (width, height),
    }
}

/// Transforms a ground-truth footprint consistently with
/// [`transform_pixel`]; radiometric transforms are the identity.
pub fn transform_footprint(
    footprint: &Footprint,
    transform: Transform,
    width: u32,
    height: u32,
) -> Footprint {
    if !transform.is_geometric() {
        return footprint.clone();
    }
    match footprint {
        Footprint::Pixels(pixels) => Footprint::from_pixels(
            pixels
                .iter()
                .map(|&p| transform_pixel(p, transform, width, height))
                .collect(),
        ),
        Footprint::Box(bbox) => {
            // Map the box through its two integer-aligned corners.
            let corners = [
                (bbox.x_min, bbox.y_min),
                (bbox.x_max, bbox.y_min),
                (bbox.x_min, bbox.y_max),
                (bbox.x_max, bbox.y_max),
            ];
            let mapped: Vec<(f64, f64)> = corners
                .iter()
                .map(|&(cx, cy)| transform_point(cx, cy, transform, width, height))
                .collect();
            let xs: Vec<f64> = mapped.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = mapped.iter().map(|p| p.1).collect();
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Footprint::Box(BBox::new(min(&xs), min(&ys), max(&xs), max(&ys)))
        }
    }
}

fn transform_point(x: f64, y: f64, transform: Transform, width: u32, height: u32) -> (f64, f64) {
    match transform {
        Transform::FlipH => (width as f64 - x, y),
        Transform::FlipV => (x, height as f64 - y),
        Transform::Rotate90(k) => {
            let (mut px, mut py, mut w, mut h) = (x, y, width as f64, height as f64);
            for _ in 0..(k % 4) {
                let (nx, ny) = (h - py, px);
                px = nx;
                py = ny;
                std::mem::swap(&mut w, &mut h);
            }
            (px, py)
        }
        _ => (x, y),
    }
}

/// Applies one transform to a raster. Geometric transforms permute pixels;
/// `grayscale` averages channels, `hist_equalize` remaps each channel
/// through its empirical CDF, `normalize` standardizes each channel to mean
/// zero and unit variance.
pub fn augment(image: &PredictionMap, transform: Transform) -> PredictionMap {
    match transform {
        Transform::FlipH | Transform::FlipV | Transform::Rotate90(_) => {
            let (w, h) = (image.width(), image.height());
            let (nw, nh) = transformed_size(transform, w, h);
            let mut out = PredictionMap::new(nw, nh, image.channels());
            for y in 0..h {
                for x in 0..w {
                    let (nx, ny) = transform_pixel((x, y), transform, w, h);
                    for c in 0..image.channels() {
                        out.set(nx, ny, c, image.get(x, y, c));
                    }
                }
            }
            out
        }
        Transform::Grayscale => {
            let mut out = image.clone();
            let c = image.channels();
            for y in 0..image.height() {
                for x in 0..image.width() {
                    let mean: f32 =
                        (0..c).map(|ch| image.get(x, y, ch)).sum::<f32>() / c as f32;
                    for ch in 0..c {
                        out.set(x, y, ch, mean);
                    }
                }
            }
            out
        }
        Transform::HistEqualize => hist_equalize(image),
        Transform::Normalize => normalize(image),
    }
}

const HIST_BINS: usize = 256;

/// Per-channel histogram equalization over 256 bins: each value is replaced
/// by the empirical CDF at its bin.
fn hist_equalize(image: &PredictionMap) -> PredictionMap {
    let mut out = image.clone();
    let n = (image.width() as usize) * (image.height() as usize);
    for c in 0..image.channels() {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for y in 0..image.height() {
            for x in 0..image.width() {
                let v = image.get(x, y, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi <= lo {
            continue; // constant channel
        }
        let bin_of = |v: f32| -> usize {
            (((v - lo) / (hi - lo) * (HIST_BINS as f32 - 1.0)).round() as usize)
                .min(HIST_BINS - 1)
        };
        let mut histogram = [0u64; HIST_BINS];
        for y in 0..image.height() {
            for x in 0..image.width() {
                histogram[bin_of(image.get(x, y, c))] += 1;
            }
        }
        let mut cdf = [0f64; HIST_BINS];
        let mut acc = 0u64;
        for (bin, &count) in histogram.iter().enumerate() {
            acc += count;
            cdf[bin] = acc as f64 / n as f64;
        }
        for y in 0..image.height() {
            for x in 0..image.width() {
                out.set(x, y, c, cdf[bin_of(image.get(x, y, c))] as f32);
            }
        }
    }
    out
}

/// Per-channel standardization; constant channels become all zeros.
fn normalize(image: &PredictionMap) -> PredictionMap {
    let mut out = image.clone();
    let n = (image.width() as usize * image.height() as usize) as f64;
    for c in 0..image.channels() {
        let mut sum = 0.0f64;
        for y in 0..image.height() {
            for x in 0..image.width() {
                sum += image.get(x, y, c) as f64;
            }
        }
        let mean = sum / n;
        let mut var = 0.0f64;
        for y in 0..image.height() {
            for x in 0..image.width() {
                let d = image.get(x, y, c) as f64 - mean;
                var += d * d;
            }
        }
        var /= n;
        let std = var.sqrt();
        for y in 0..image.height() {
            for x in 0..image.width() {
                let v = if std > 0.0 {
                    (image.get(x, y, c) as f64 - mean) / std
                } else {
                    0.0
                };
                out.set(x, y, c, v as f32);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

/// A ground-truth object: identifier, level-3 label and spatial footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub id: u32,
    pub label: Label,
    pub footprint: Footprint,
}

/// In-memory scene: extent, ground sampling distance and labeled objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub resolution_cm: f64,
    pub objects: Vec<GtObject>,
}

impl Scene {
    /// Ground area in square kilometers.
    pub fn area_km2(&self) -> f64 {
        let m_per_px = self.resolution_cm / 100.0;
        (self.width as f64 * m_per_px) * (self.height as f64 * m_per_px) / 1.0e6
    }
}

/// Serialized manifest: `[scene]` header plus one `[[object]]` table per
/// ground-truth object. Footprints come from the referenced instance map
/// (pixel value = object id) when present, otherwise from the object's box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene: SceneHeader,
    #[serde(default, rename = "object")]
    pub objects: Vec<ManifestObject>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneHeader {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub resolution_cm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_map: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestObject {
    pub id: u32,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

/// A scene loaded from disk plus the path of its image raster.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub image_path: PathBuf,
}

/// Satellite ground sampling distances the pipeline is calibrated for.
pub const RESOLUTION_RANGE_CM: (f64, f64) = (30.0, 50.0);

/// Reads a manifest, resolves footprints and validates objects against the
/// image bounds and the taxonomy.
pub fn load_scene(manifest_path: &Path, taxonomy: &Taxonomy) -> Result<LoadedScene, IngestError> {
    let display = manifest_path.display().to_string();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| IngestError::Manifest {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let manifest: SceneManifest = toml::from_str(&text).map_err(|e| IngestError::Manifest {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let header = &manifest.scene;
    if header.resolution_cm < RESOLUTION_RANGE_CM.0 || header.resolution_cm > RESOLUTION_RANGE_CM.1
    {
        return Err(IngestError::Manifest {
            path: display.clone(),
            reason: format!(
                "resolution {} cm/px outside the supported {:?} range",
                header.resolution_cm, RESOLUTION_RANGE_CM
            ),
        });
    }

    // Resolve footprints from the instance map when one is referenced.
    let mut pixels_by_id: std::collections::HashMap<u32, Vec<(u32, u32)>> = Default::default();
    if let Some(rel) = &header.instance_map {
        let map = PredictionMap::read_pmap(&base.join(rel))?;
        if map.width() != header.width || map.height() != header.height {
            return Err(IngestError::Manifest {
                path: display.clone(),
                reason: "instance map extent differs from the declared scene size".to_string(),
            });
        }
        for y in 0..map.height() {
            for x in 0..map.width() {
                let id = map.get(x, y, 0).round() as i64;
                if id > 0 {
                    pixels_by_id.entry(id as u32).or_default().push((x, y));
                }
            }
        }
    }

    let mut objects = Vec::with_capacity(manifest.objects.len());
    for entry in &manifest.objects {
        let label = taxonomy.label(&entry.label)?;
        let footprint = match pixels_by_id.remove(&entry.id) {
            Some(pixels) => Footprint::from_pixels(pixels),
            None => {
                let raw = entry.bbox.ok_or_else(|| IngestError::BadObject {
                    id: entry.id,
                    reason: "no instance-map pixels and no bbox".to_string(),
                })?;
                Footprint::Box(BBox::new(raw[0], raw[1], raw[2], raw[3]))
            }
        };
        let bbox = footprint.bbox().ok_or_else(|| IngestError::BadObject {
            id: entry.id,
            reason: "empty footprint".to_string(),
        })?;
        if bbox.x_min < 0.0
            || bbox.y_min < 0.0
            || bbox.x_max > header.width as f64
            || bbox.y_max > header.height as f64
        {
            return Err(IngestError::BadObject {
                id: entry.id,
                reason: format!("footprint {bbox:?} outside the image bounds"),
            });
        }
        objects.push(GtObject {
            id: entry.id,
            label,
            footprint,
        });
    }

    Ok(LoadedScene {
        scene: Scene {
            width: header.width,
            height: header.height,
            resolution_cm: header.resolution_cm,
            objects,
        },
        image_path: base.join(&header.image),
    })
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

/// Aggregate counts over a set of scenes. `n_tiles` is present only when
/// grid parameters were supplied (test imagery is not always tiled).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_images: u64,
    pub n_objects: u64,
    pub n_tiles: Option<u64>,
    pub area_km2: f64,
}

pub fn dataset_stats(scenes: &[Scene], grid: Option<(u32, u32)>) -> DatasetStats {
    let n_tiles = grid.map(|(tile_size, overlap)| {
        scenes
            .iter()
            .map(|s| {
                make_grid(s.width, s.height, tile_size, overlap)
                    .map(|g| g.origins.len() as u64)
                    .unwrap_or(0)
            })
            .sum()
    });
    DatasetStats {
        n_images: scenes.len() as u64,
        n_objects: scenes.iter().map(|s| s.objects.len() as u64).sum(),
        n_tiles,
        area_km2: scenes.iter().map(Scene::area_km2).sum(),
    }
}
