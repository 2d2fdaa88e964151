//! Declarative descriptors of the two model architectures with structural
//! validation, shape propagation and anchor arithmetic. No weights, no
//! inference; this is the arithmetic the backends are expected to honor.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DEFAULT_NMS_THRESHOLD;

/// Conv layers inside one identity-mapping block.
pub const CONV_LAYERS_PER_IM_BLOCK: u32 = 2;

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("input size {size} is not divisible by 2^{downsamples}")]
    NotDivisible { size: u32, downsamples: u32 },
    #[error("image size {size} is not divisible by the maximum stride {stride}")]
    ImageNotDivisible { size: u32, stride: u32 },
    #[error("spec is invalid: {0}")]
    Invalid(String),
    #[error("cannot read arch spec {path}: {reason}")]
    File { path: String, reason: String },
}

/// A named structural rule violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Encoder-decoder segmentation network descriptor. Downsampling happens
/// through stride-2 convolutions that double the filter count; plain conv
/// pairs are replaced by identity-mapping blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetSpec {
    pub input_size: u32,
    pub base_filters: u32,
    pub downsample_count: u32,
    pub encoder_im_blocks: u32,
    pub decoder_im_blocks: u32,
    pub num_classes: u32,
    /// IM blocks per encoder resolution stage; length must be
    /// `downsample_count + 1` and the entries must sum to
    /// `encoder_im_blocks`.
    pub encoder_partition: Vec<u32>,
}

impl Default for UNetSpec {
    fn default() -> Self {
        UNetSpec {
            input_size: 512,
            base_filters: 64,
            downsample_count: 2,
            encoder_im_blocks: 36,
            decoder_im_blocks: 8,
            num_classes: 2,
            encoder_partition: vec![12, 12, 12],
        }
    }
}

impl UNetSpec {
    pub fn encoder_conv_layers(&self) -> u32 {
        self.encoder_im_blocks * CONV_LAYERS_PER_IM_BLOCK
    }

    pub fn decoder_conv_layers(&self) -> u32 {
        self.decoder_im_blocks * CONV_LAYERS_PER_IM_BLOCK
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.downsample_count < 1 {
            violations.push(Violation::new(
                "downsample_count",
                "must be at least 1",
            ));
        }
        if self.encoder_im_blocks == 0 {
            violations.push(Violation::new("encoder_im_blocks", "must be positive"));
        }
        if self.decoder_im_blocks == 0 {
            violations.push(Violation::new("decoder_im_blocks", "must be positive"));
        }
        if self.base_filters == 0 {
            violations.push(Violation::new("base_filters", "must be positive"));
        }
        if self.num_classes == 0 {
            violations.push(Violation::new("num_classes", "must be positive"));
        }
        if self.downsample_count >= 1
            && self.input_size % (1u32 << self.downsample_count.min(31)) != 0
        {
            violations.push(Violation::new(
                "input_size",
                format!("must be divisible by 2^{}", self.downsample_count),
            ));
        }
        if self.encoder_partition.len() != self.downsample_count as usize + 1 {
            violations.push(Violation::new(
                "encoder_partition",
                format!(
                    "needs one entry per resolution stage ({} expected, {} given)",
                    self.downsample_count + 1,
                    self.encoder_partition.len()
                ),
            ));
        } else if self.encoder_partition.iter().sum::<u32>() != self.encoder_im_blocks {
            violations.push(Violation::new(
                "encoder_partition",
                format!(
                    "entries sum to {}, expected encoder_im_blocks = {}",
                    self.encoder_partition.iter().sum::<u32>(),
                    self.encoder_im_blocks
                ),
            ));
        }
        violations
    }
}

/// One-stage detector descriptor: backbone, pyramid strides (finest first)
/// and per-location anchor count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetinaSpec {
    pub backbone_name: String,
    /// Strictly increasing powers of two. The default carries the extra
    /// stride-4 level below the standard finest stride-8 level, added for
    /// small objects.
    pub pyramid_strides: Vec<u32>,
    pub anchors_per_location: u32,
    pub num_classes: u32,
    pub nms_threshold: f64,
}

impl Default for RetinaSpec {
    fn default() -> Self {
        RetinaSpec {
            backbone_name: "ResNet101".to_string(),
            pyramid_strides: vec![4, 8, 16, 32, 64, 128],
            anchors_per_location: 9,
            num_classes: 61,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
        }
    }
}

impl RetinaSpec {
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.pyramid_strides.is_empty() {
            violations.push(Violation::new("pyramid_strides", "must not be empty"));
        }
        for &stride in &self.pyramid_strides {
            if stride == 0 || !stride.is_power_of_two() {
                violations.push(Violation::new(
                    "pyramid_strides",
                    format!("stride not power of two: {stride}"),
                ));
            }
        }
        for pair in self.pyramid_strides.windows(2) {
            if pair[0] >= pair[1] {
                violations.push(Violation::new(
                    "pyramid_strides",
                    format!("strides not strictly increasing at {} >= {}", pair[0], pair[1]),
                ));
            }
        }
        if self.anchors_per_location < 1 {
            violations.push(Violation::new("anchors_per_location", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            violations.push(Violation::new("nms_threshold", "must lie in [0, 1]"));
        }
        if self.num_classes == 0 {
            violations.push(Violation::new("num_classes", "must be positive"));
        }
        violations
    }

    /// Total anchors over a square image: sum over levels of
    /// `(image_size / stride)^2 * anchors_per_location`.
    pub fn anchor_count(&self, image_size: u32) -> Result<u64, ArchError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(ArchError::Invalid(join_violations(&violations)));
        }
        let max_stride = *self.pyramid_strides.iter().max().expect("non-empty");
        if image_size % max_stride != 0 {
            return Err(ArchError::ImageNotDivisible {
                size: image_size,
                stride: max_stride,
            });
        }
        Ok(self
            .pyramid_strides
            .iter()
            .map(|&s| {
                let cells = (image_size / s) as u64;
                cells * cells * self.anchors_per_location as u64
            })
            .sum())
    }

    /// Anchor contribution of a single level.
    pub fn level_anchor_count(&self, stride: u32, image_size: u32) -> u64 {
        let cells = (image_size / stride) as u64;
        cells * cells * self.anchors_per_location as u64
    }
}

/// One stage of a shape trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStage {
    pub name: String,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl fmt::Display for TraceStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {:>5} x {:<5} x {}",
            self.name, self.height, self.width, self.channels
        )
    }
}

/// Ordered list of (stage, height, width, channels) entries from the input
/// raster to the class map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShapeTrace {
    pub stages: Vec<TraceStage>,
}

impl ShapeTrace {
    fn push(&mut self, name: impl Into<String>, height: u32, width: u32, channels: u32) {
        self.stages.push(TraceStage {
            name: name.into(),
            height,
            width,
            channels,
        });
    }

    /// Number of stage transitions that halve the spatial size.
    pub fn downsample_events(&self) -> usize {
        self.stages
            .windows(2)
            .filter(|w| w[1].height * 2 == w[0].height && w[1].width * 2 == w[0].width)
            .count()
    }

    /// Number of stage transitions that double the spatial size.
    pub fn upsample_events(&self) -> usize {
        self.stages
            .windows(2)
            .filter(|w| w[1].height == w[0].height * 2 && w[1].width == w[0].width * 2)
            .count()
    }

    pub fn input(&self) -> &TraceStage {
        self.stages.first().expect("trace has an input stage")
    }

    pub fn output(&self) -> &TraceStage {
        self.stages.last().expect("trace has an output stage")
    }
}

impl fmt::Display for ShapeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for stage in &self.stages {
            writeln!(f, "{stage}")?;
        }
        Ok(())
    }
}

/// Walks the encoder-decoder arithmetic: each downsampling stage halves the
/// spatial size and doubles the filters, the decoder mirrors it back with
/// skip concatenations, and the head emits `num_classes` channels at the
/// input resolution.
pub fn propagate_unet(spec: &UNetSpec) -> Result<ShapeTrace, ArchError> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(ArchError::Invalid(join_violations(&violations)));
    }
    let d = spec.downsample_count;
    if spec.input_size % (1u32 << d) != 0 {
        return Err(ArchError::NotDivisible {
            size: spec.input_size,
            downsamples: d,
        });
    }

    let mut trace = ShapeTrace { stages: Vec::new() };
    let s = spec.input_size;
    trace.push("input", s, s, 3);
    trace.push("enc0", s, s, spec.base_filters);
    for i in 1..=d {
        let size = s >> i;
        let filters = spec.base_filters << i;
        trace.push(format!("down{i}"), size, size, filters);
        trace.push(format!("enc{i}"), size, size, filters);
    }
    for i in (0..d).rev() {
        let size = s >> i;
        let filters = spec.base_filters << i;
        trace.push(format!("up{}", d - i), size, size, filters);
        // Skip connection: channel concatenation with the encoder stage at
        // the same resolution.
        trace.push(format!("skip{}", d - i), size, size, filters * 2);
        trace.push(format!("dec{}", d - i), size, size, filters);
    }
    trace.push("output", s, s, spec.num_classes);
    Ok(trace)
}

/// Arch spec document: `[unet]` and `[retinanet]` key/value sections, both
/// optional and defaulted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpecFile {
    #[serde(default)]
    pub unet: Option<UNetSpec>,
    #[serde(default)]
    pub retinanet: Option<RetinaSpec>,
}

impl ArchSpecFile {
    pub fn parse(text: &str) -> Result<Self, ArchError> {
        toml::from_str(text).map_err(|e| ArchError::File {
            path: "<inline>".to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ArchError> {
        let text = std::fs::read_to_string(path).map_err(|e| ArchError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| ArchError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_unet_trace() {
        let spec = UNetSpec::default();
        let trace = propagate_unet(&spec).unwrap();

        // 512^2 x 64 -> 256^2 x 128 -> 128^2 x 256 -> ... -> 512^2 x C.
        let find = |name: &str| {
            trace
                .stages
                .iter()
                .find(|s| s.name == name)
                .unwrap_or_else(|| panic!("stage {name}"))
        };
        assert_eq!((find("enc0").width, find("enc0").channels), (512, 64));
        assert_eq!((find("down1").width, find("down1").channels), (256, 128));
        assert_eq!((find("down2").width, find("down2").channels), (128, 256));

        assert_eq!(trace.downsample_events(), 2);
        assert_eq!(trace.upsample_events(), 2);
        assert_eq!(trace.input().width, trace.output().width);
        assert_eq!(trace.output().channels, spec.num_classes);
    }

    #[test]
    fn zero_downsample_rejected() {
        let spec = UNetSpec {
            downsample_count: 0,
            encoder_partition: vec![36],
            ..UNetSpec::default()
        };
        assert!(!spec.validate().is_empty());
        assert!(propagate_unet(&spec).is_err());
    }

    #[test]
    fn non_divisible_input_rejected() {
        let spec = UNetSpec {
            input_size: 510,
            ..UNetSpec::default()
        };
        assert!(propagate_unet(&spec).is_err());
    }

    #[test]
    fn conv_layer_counts_from_im_blocks() {
        let spec = UNetSpec::default();
        assert_eq!(spec.encoder_conv_layers(), 72);
        assert_eq!(spec.decoder_conv_layers(), 16);
    }

    #[test]
    fn anchor_count_examples() {
        let spec = RetinaSpec::default();
        assert_eq!(spec.anchor_count(512).unwrap(), 196_560);

        // The added finest level carries three quarters of all anchors.
        assert_eq!(spec.level_anchor_count(4, 512), 147_456);
        let without_finest = RetinaSpec {
            pyramid_strides: vec![8, 16, 32, 64, 128],
            ..RetinaSpec::default()
        };
        assert_eq!(without_finest.anchor_count(512).unwrap(), 196_560 - 147_456);

        let single = RetinaSpec {
            pyramid_strides: vec![512],
            anchors_per_location: 1,
            ..RetinaSpec::default()
        };
        assert_eq!(single.anchor_count(512).unwrap(), 1);
    }

    #[test]
    fn anchor_count_monotonicity() {
        let base = RetinaSpec::default();
        let more_anchors = RetinaSpec {
            anchors_per_location: 12,
            ..base.clone()
        };
        assert!(more_anchors.anchor_count(512).unwrap() > base.anchor_count(512).unwrap());
        let fewer_levels = RetinaSpec {
            pyramid_strides: vec![8, 16, 32],
            ..base.clone()
        };
        assert!(fewer_levels.anchor_count(512).unwrap() < base.anchor_count(512).unwrap());
    }

    #[test]
    fn validate_flags_bad_strides() {
        let spec = RetinaSpec {
            pyramid_strides: vec![4, 6],
            ..RetinaSpec::default()
        };
        let violations = spec.validate();
        assert!(violations
            .iter()
            .any(|v| v.field == "pyramid_strides" && v.rule.contains("not power of two")));
    }

    #[test]
    fn defaults_are_clean() {
        assert!(UNetSpec::default().validate().is_empty());
        assert!(RetinaSpec::default().validate().is_empty());
    }

    #[test]
    fn image_size_must_divide_max_stride() {
        let spec = RetinaSpec::default();
        assert!(matches!(
            spec.anchor_count(500),
            Err(ArchError::ImageNotDivisible { .. })
        ));
    }

    #[test]
    fn spec_file_roundtrip() {
        let text = r#"
[unet]
input_size = 256
base_filters = 32
downsample_count = 2
encoder_im_blocks = 6
decoder_im_blocks = 2
num_classes = 2
encoder_partition = [2, 2, 2]

[retinanet]
pyramid_strides = [8, 16, 32]
"#;
        let file = ArchSpecFile::parse(text).unwrap();
        assert_eq!(file.unet.as_ref().unwrap().input_size, 256);
        assert_eq!(file.retinanet.as_ref().unwrap().pyramid_strides, vec![8, 16, 32]);
        // Unlisted fields fall back to defaults.
        assert_eq!(file.retinanet.as_ref().unwrap().anchors_per_location, 9);
        // Unknown keys are rejected.
        assert!(ArchSpecFile::parse("[unet]\nmystery = 1\n").is_err());
    }
}
