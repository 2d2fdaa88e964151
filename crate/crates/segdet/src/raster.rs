//! Prediction-map manipulation: thresholding, connected components, size
//! filtering, erasure of detected objects, and the PMAP interchange format.
//!
//! PMAP is little-endian binary: magic `PMAP`, u32 width, u32 height,
//! u32 channels, then row-major IEEE-754 f32 values, channel-interleaved
//! per pixel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::BBox;

const PMAP_MAGIC: &[u8; 4] = b"PMAP";
/// Upper bound on `width * height * channels` accepted from a PMAP header.
const PMAP_MAX_VALUES: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PMAP header: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("{path}: truncated PMAP payload")]
    Truncated { path: String },
    #[error("prediction map dimensions {0}x{1} do not match mask {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// Per-pixel class-probability raster. Channel 0 is background; a plain
/// image is carried by the same type with its channels read as bands.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap {
    width: u32,
    height: u32,
    channels: u32,
    values: Vec<f32>,
}

impl PredictionMap {
    pub fn new(width: u32, height: u32, channels: u32) -> Self {
        assert!(channels >= 1, "a map needs at least one channel");
        PredictionMap {
            width,
            height,
            channels,
            values: vec![0.0; (width as usize) * (height as usize) * (channels as usize)],
        }
    }

    pub fn from_values(width: u32, height: u32, channels: u32, values: Vec<f32>) -> Self {
        assert_eq!(
            values.len(),
            (width as usize) * (height as usize) * (channels as usize),
            "value buffer does not match dimensions"
        );
        PredictionMap {
            width,
            height,
            channels,
            values,
        }
    }

    /// Constant-valued map, handy for tests and fixtures.
    pub fn filled(width: u32, height: u32, channels: u32, value: f32) -> Self {
        let mut map = PredictionMap::new(width, height, channels);
        map.values.fill(value);
        map
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    fn index(&self, x: u32, y: u32, c: u32) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        ((y as usize * self.width as usize) + x as usize) * self.channels as usize + c as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f32 {
        self.values[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u32, value: f32) {
        let i = self.index(x, y, c);
        self.values[i] = value;
    }

    /// Foreground probability of a pixel: one minus the background channel.
    #[inline]
    pub fn foreground(&self, x: u32, y: u32) -> f32 {
        1.0 - self.get(x, y, 0)
    }

    /// Rescales every pixel so its channel sum is one. Pixels with a zero
    /// sum are left untouched.
    pub fn normalize_per_pixel(&mut self) {
        let c = self.channels as usize;
        for pixel in self.values.chunks_mut(c) {
            let sum: f32 = pixel.iter().sum();
            if sum > 0.0 {
                for v in pixel {
                    *v /= sum;
                }
            }
        }
    }

    /// Copies the `w x h` window at `(x0, y0)`; the window must lie inside
    /// the map.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> PredictionMap {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let c = self.channels as usize;
        let mut values = Vec::with_capacity(w as usize * h as usize * c);
        for y in y0..y0 + h {
            let row = self.index(x0, y, 0);
            values.extend_from_slice(&self.values[row..row + w as usize * c]);
        }
        PredictionMap::from_values(w, h, self.channels, values)
    }

    pub fn write_pmap(&self, path: &Path) -> Result<(), RasterError> {
        let io_err = |source| RasterError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        out.write_all(PMAP_MAGIC).map_err(io_err)?;
        out.write_all(&self.width.to_le_bytes()).map_err(io_err)?;
        out.write_all(&self.height.to_le_bytes()).map_err(io_err)?;
        out.write_all(&self.channels.to_le_bytes()).map_err(io_err)?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn read_pmap(path: &Path) -> Result<PredictionMap, RasterError> {
        let display = path.display().to_string();
        let io_err = |source| RasterError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut input = BufReader::new(File::open(path).map_err(io_err)?);
        let mut header = [0u8; 16];
        input.read_exact(&mut header).map_err(|_| RasterError::MalformedHeader {
            path: display.clone(),
            reason: "file shorter than the 16-byte header".to_string(),
        })?;
        if &header[0..4] != PMAP_MAGIC {
            return Err(RasterError::MalformedHeader {
                path: display,
                reason: format!("bad magic {:?}", &header[0..4]),
            });
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (width, height, channels) = (word(4), word(8), word(12));
        let count = width as u64 * height as u64 * channels as u64;
        if channels == 0 || count == 0 || count > PMAP_MAX_VALUES {
            return Err(RasterError::MalformedHeader {
                path: display,
                reason: format!("implausible dimensions {width}x{height}x{channels}"),
            });
        }
        let mut payload = vec![0u8; count as usize * 4];
        input
            .read_exact(&mut payload)
            .map_err(|_| RasterError::Truncated {
                path: display.clone(),
            })?;
        let values = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(PredictionMap::from_values(width, height, channels, values))
    }
}

/// Foreground flags with the same extent as the source map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Two-channel (background, foreground) probability map with values
    /// 0/1, the PMAP-serializable form of a mask.
    pub fn to_prediction_map(&self) -> PredictionMap {
        let mut map = PredictionMap::new(self.width, self.height, 2);
        for y in 0..self.height {
            for x in 0..self.width {
                let fg = if self.get(x, y) { 1.0 } else { 0.0 };
                map.set(x, y, 0, 1.0 - fg);
                map.set(x, y, 1, fg);
            }
        }
        map
    }
}

/// A connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BBox,
    pub area: usize,
    pub centroid: (f64, f64),
}

impl Region {
    fn from_pixels(pixels: Vec<(u32, u32)>) -> Region {
        debug_assert!(!pixels.is_empty());
        let bbox = BBox::around_pixels(&pixels).expect("non-empty region");
        let n = pixels.len() as f64;
        let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + x as f64 + 0.5, sy + y as f64 + 0.5)
        });
        Region {
            area: pixels.len(),
            centroid: (sx / n, sy / n),
            bbox,
            pixels,
        }
    }

    /// Mean foreground probability of the region's pixels in `map`.
    pub fn mean_foreground(&self, map: &PredictionMap) -> f64 {
        let sum: f64 = self
            .pixels
            .iter()
            .map(|&(x, y)| map.foreground(x, y) as f64)
            .sum();
        sum / self.area as f64
    }
}

/// Marks a pixel foreground iff `1 - background >= t`.
pub fn threshold(map: &PredictionMap, t: f64) -> BinaryMask {
    debug_assert!((0.0..=1.0).contains(&t));
    let mut mask = BinaryMask::new(map.width(), map.height());
    for y in 0..map.height() {
        for x in 0..map.width() {
            mask.set(x, y, map.foreground(x, y) as f64 >= t);
        }
    }
    mask
}

/// 8-connected components in deterministic order: regions are sorted by the
/// scan-order position of their first pixel.
///
/// Classic two-pass labeling with union-find; the flood-fill formulation
/// lives in the test suite as an oracle.
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let mut labels = vec![0u32; w * h]; // 0 = background, labels start at 1
    let mut parent: Vec<u32> = vec![0]; // parent[label]; parent[0] unused

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    fn union(parent: &mut [u32], a: u32, b: u32) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        // Keep the smaller root so the first-pixel ordering survives.
        if ra < rb {
            parent[rb as usize] = ra;
        } else {
            parent[ra as usize] = rb;
        }
    }

    // First pass: provisional labels, merging with the four already-visited
    // 8-neighbors (W, NW, N, NE).
    const VISITED_NEIGHBORS: [(i64, i64); 4] = [(-1, 0), (-1, -1), (0, -1), (1, -1)];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let mut neighbor_labels: [u32; 4] = [0; 4];
            let mut n = 0;
            for (dx, dy) in VISITED_NEIGHBORS {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    let l = labels[ny as usize * w + nx as usize];
                    if l != 0 {
                        neighbor_labels[n] = l;
                        n += 1;
                    }
                }
            }

            let label = if n == 0 {
                let fresh = parent.len() as u32;
                parent.push(fresh);
                fresh
            } else {
                let mut minimum = neighbor_labels[0];
                for &l in &neighbor_labels[1..n] {
                    minimum = minimum.min(l);
                }
                for &l in &neighbor_labels[..n] {
                    union(&mut parent, minimum, l);
                }
                minimum
            };
            labels[y * w + x] = label;
        }
    }

    // Second pass: resolve roots and bucket pixels in scan order.
    let mut order: Vec<u32> = Vec::new();
    let mut bucket_of: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    let mut buckets: Vec<Vec<(u32, u32)>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            let idx = *bucket_of.entry(root).or_insert_with(|| {
                order.push(root);
                buckets.push(Vec::new());
                buckets.len() - 1
            });
            buckets[idx].push((x as u32, y as u32));
        }
    }
    buckets.into_iter().map(Region::from_pixels).collect()
}

/// Keeps regions with `area >= min_size`, preserving order.
pub fn filter_min_size(regions: Vec<Region>, min_size: usize) -> Vec<Region> {
    regions.into_iter().filter(|r| r.area >= min_size).collect()
}

/// Clears every mask pixel whose center falls inside `bbox`; portions of
/// the box outside the mask are clipped.
pub fn erase(mask: &mut BinaryMask, bbox: &BBox) {
    let (xs, ys) = bbox.pixel_ranges(mask.width(), mask.height());
    for y in ys {
        for x in xs.clone() {
            mask.set(x, y, false);
        }
    }
}
