//! Config file handling: a flat TOML document of optional keys that seeds
//! the defaults for `run`, `evaluate`, `simulate` and `end-to-end`.
//! Command-line flags always win over config values; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use segdet::evaluation::{MatchCriterion, OverlapKind};
use segdet::fusion::{OperatingMode, PipelineParams, RecoveryParams};
use segdet::taxonomy::Taxonomy;

/// Environment variable holding a default config path.
pub const CONFIG_ENV: &str = "SEGDET_CONFIG";

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Taxonomy document path; the embedded default taxonomy when unset.
    pub taxonomy: Option<PathBuf>,
    /// Mode preset name: balanced, recall or precision.
    pub mode: Option<String>,
    /// Explicit threshold overrides applied on top of the preset.
    pub seg_threshold: Option<f64>,
    pub seg_min_size: Option<usize>,
    pub det_threshold: Option<f64>,
    pub det_min_size: Option<f64>,
    /// Recovery switch and rules.
    pub recovery: Option<bool>,
    pub size_band: Option<[f64; 2]>,
    pub max_distance: Option<f64>,
    /// Tiling grid.
    pub tile_size: Option<u32>,
    pub overlap: Option<u32>,
    pub max_iter: Option<u32>,
    /// Matching criterion: "over-target" or "iou".
    pub criterion: Option<String>,
    pub seed: Option<u64>,
    /// Backend directories.
    pub seg_backend: Option<PathBuf>,
    pub det_backend: Option<PathBuf>,
}

impl Config {
    /// Loads the explicit path, else the `SEGDET_CONFIG` path, else empty.
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<Config> {
        let path = explicit
            .map(PathBuf::from)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("stage config: reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("stage config: parsing {}", path.display()))
    }
}

pub fn load_taxonomy(path: Option<&Path>) -> anyhow::Result<Taxonomy> {
    match path {
        None => Ok(Taxonomy::default_taxonomy()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("stage taxonomy: reading {}", path.display()))?;
            Taxonomy::parse(&text, false).context("stage taxonomy")
        }
    }
}

pub fn parse_criterion(name: &str) -> anyhow::Result<MatchCriterion> {
    match name {
        "over-target" => Ok(MatchCriterion::default()),
        "iou" => Ok(MatchCriterion::iou()),
        other => anyhow::bail!("unknown criterion `{other}` (expected over-target or iou)"),
    }
}

pub fn criterion_name(criterion: &MatchCriterion) -> &'static str {
    match criterion.kind {
        OverlapKind::OverTarget => "over-target",
        OverlapKind::Iou => "iou",
    }
}

/// Assembles pipeline parameters from preset + config + flag overrides.
/// Precedence per field: explicit flag, then config key, then preset.
pub struct PipelineOverrides {
    pub mode: Option<String>,
    pub seg_threshold: Option<f64>,
    pub seg_min_size: Option<usize>,
    pub det_threshold: Option<f64>,
    pub det_min_size: Option<f64>,
    pub recovery: Option<bool>,
    pub tile_size: Option<u32>,
    pub overlap: Option<u32>,
    pub max_iter: Option<u32>,
}

pub fn pipeline_params(
    config: &Config,
    overrides: &PipelineOverrides,
) -> anyhow::Result<PipelineParams> {
    let mode_name = overrides
        .mode
        .clone()
        .or_else(|| config.mode.clone())
        .unwrap_or_else(|| "balanced".to_string());
    let mut mode = OperatingMode::from_name(&mode_name)
        .with_context(|| format!("unknown mode `{mode_name}` (balanced, recall or precision)"))?;

    if let Some(v) = overrides.seg_threshold.or(config.seg_threshold) {
        mode.seg_threshold = v;
        mode.name = "custom".to_string();
    }
    if let Some(v) = overrides.seg_min_size.or(config.seg_min_size) {
        mode.seg_min_size = v;
        mode.name = "custom".to_string();
    }
    if let Some(v) = overrides.det_threshold.or(config.det_threshold) {
        mode.det_threshold = v;
        mode.name = "custom".to_string();
    }
    if let Some(v) = overrides.det_min_size.or(config.det_min_size) {
        mode.det_min_size = v;
        mode.name = "custom".to_string();
    }
    if let Some(v) = overrides.recovery.or(config.recovery) {
        mode.enable_recovery = v;
    }

    let mut recovery = RecoveryParams::default();
    if let Some([lo, hi]) = config.size_band {
        anyhow::ensure!(lo > 0.0 && lo <= hi, "size_band must satisfy 0 < lo <= hi");
        recovery.size_band = (lo, hi);
    }
    if let Some(d) = config.max_distance {
        recovery.max_distance = d;
    }

    let defaults = PipelineParams::default();
    Ok(PipelineParams {
        mode,
        recovery,
        tile_size: overrides
            .tile_size
            .or(config.tile_size)
            .unwrap_or(defaults.tile_size),
        overlap: overrides
            .overlap
            .or(config.overlap)
            .unwrap_or(defaults.overlap),
        max_iter: overrides
            .max_iter
            .or(config.max_iter)
            .unwrap_or(defaults.max_iter),
        nms_threshold: defaults.nms_threshold,
    })
}
