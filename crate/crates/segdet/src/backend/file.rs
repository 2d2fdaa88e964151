//! File-exchange backend: replays model outputs from a directory.
//!
//! Layout: `tiles/<x>_<y>.pmap` for per-tile segmentation maps and
//! `dets/<x>_<y>.txt` for detection lists, both keyed by tile origin. A
//! detection record is one UTF-8 line:
//! `x_min y_min x_max y_max score label_name`.

use std::collections::HashMap;
use std::path::Path;

use crate::backend::{box_inside, BackendError, DetectionBackend, SegmentationBackend};
use crate::geometry::{BBox, Detection};
use crate::raster::PredictionMap;
use crate::taxonomy::Taxonomy;

pub const TILES_SUBDIR: &str = "tiles";
pub const DETS_SUBDIR: &str = "dets";

/// File name stem for a tile origin.
pub fn tile_stem(origin: (u32, u32)) -> String {
    format!("{}_{}", origin.0, origin.1)
}

fn parse_tile_stem(stem: &str) -> Option<(u32, u32)> {
    let (x, y) = stem.split_once('_')?;
    Some((x.parse().ok()?, y.parse().ok()?))
}

/// Precomputed model outputs loaded into memory; serves both backend
/// contracts. Reads are immutable after load.
pub struct FileBackend {
    root: String,
    tiles: HashMap<(u32, u32), PredictionMap>,
    detections: Vec<Detection>,
    has_detection_dir: bool,
}

/// Loads a backend directory, validating every detection record against the
/// taxonomy. A directory with neither tiles nor detections loads fine;
/// queries against the missing side fail.
pub fn load_file_backend(dir: &Path, taxonomy: &Taxonomy) -> Result<FileBackend, BackendError> {
    if !dir.is_dir() {
        return Err(BackendError::Load {
            path: dir.display().to_string(),
            reason: "not a directory".to_string(),
        });
    }

    let mut tiles = HashMap::new();
    let tiles_dir = dir.join(TILES_SUBDIR);
    if tiles_dir.is_dir() {
        for entry in sorted_entries(&tiles_dir)? {
            if entry.extension().and_then(|e| e.to_str()) != Some("pmap") {
                continue;
            }
            let stem = entry
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let Some(key) = parse_tile_stem(stem) else {
                return Err(BackendError::Load {
                    path: entry.display().to_string(),
                    reason: "tile file name is not <x>_<y>.pmap".to_string(),
                });
            };
            let map = PredictionMap::read_pmap(&entry)?;
            if tiles.insert(key, map).is_some() {
                return Err(BackendError::KeyCollision(key.0, key.1));
            }
        }
    }

    let mut detections = Vec::new();
    let dets_dir = dir.join(DETS_SUBDIR);
    let has_detection_dir = dets_dir.is_dir();
    if has_detection_dir {
        for entry in sorted_entries(&dets_dir)? {
            if entry.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            detections.extend(read_detections_file(&entry, taxonomy)?);
        }
    }

    Ok(FileBackend {
        root: dir.display().to_string(),
        tiles,
        detections,
        has_detection_dir,
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>, BackendError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| BackendError::Load {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

/// Parses one detection list file, validating scores, box bounds and label
/// names.
pub fn read_detections_file(
    path: &Path,
    taxonomy: &Taxonomy,
) -> Result<Vec<Detection>, BackendError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::Load {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let mut detections = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let invalid = |reason: String| BackendError::InvalidDetection {
            path: display.clone(),
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(invalid(format!("expected 6 fields, found {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64, BackendError> {
            s.parse::<f64>()
                .map_err(|_| invalid(format!("not a number: `{s}`")))
        };
        let (x_min, y_min, x_max, y_max) = (num(fields[0])?, num(fields[1])?, num(fields[2])?, num(fields[3])?);
        let score = num(fields[4])?;
        if x_min > x_max || y_min > y_max {
            return Err(invalid(format!("degenerate box {x_min} {y_min} {x_max} {y_max}")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid(format!("score {score} outside [0, 1]")));
        }
        let label = taxonomy
            .label(fields[5])
            .map_err(|e| invalid(e.to_string()))?;
        detections.push(Detection::new(
            BBox::new(x_min, y_min, x_max, y_max),
            score,
            label,
        ));
    }
    Ok(detections)
}

/// Writes a detection list file. Floats use the shortest round-trip
/// representation so a reload reproduces the values bit-exactly.
pub fn write_detections_file(path: &Path, detections: &[Detection]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in detections {
        debug_assert!(
            !d.label.name.contains(char::is_whitespace),
            "label names must not contain whitespace"
        );
        writeln!(
            out,
            "{} {} {} {} {} {}",
            d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max, d.score, d.label.name
        )?;
    }
    out.flush()
}

impl SegmentationBackend for FileBackend {
    fn segment_tile(
        &self,
        _image: &PredictionMap,
        origin: (u32, u32),
        size: (u32, u32),
    ) -> Result<PredictionMap, BackendError> {
        let map = self
            .tiles
            .get(&origin)
            .ok_or(BackendError::MissingPrediction(origin.0, origin.1))?;
        if (map.width(), map.height()) != size {
            return Err(BackendError::TileSizeMismatch {
                x: origin.0,
                y: origin.1,
                got_w: map.width(),
                got_h: map.height(),
                want_w: size.0,
                want_h: size.1,
            });
        }
        Ok(map.clone())
    }
}

impl DetectionBackend for FileBackend {
    fn detect_region(
        &self,
        _image: &PredictionMap,
        window: &BBox,
    ) -> Result<Vec<Detection>, BackendError> {
        if !self.has_detection_dir {
            return Err(BackendError::MissingDetections(self.root.clone()));
        }
        Ok(self
            .detections
            .iter()
            .filter(|d| box_inside(&d.bbox, window))
            .cloned()
            .collect())
    }
}
