//! `run`: the fusion pipeline over file backends.

use std::path::Path;

use anyhow::Context;
use segdet::backend::file::write_detections_file;
use segdet::backend::load_file_backend;
use segdet::fusion::{run_pipeline, FusionResult, PipelineParams};
use segdet::ingest::load_scene;
use segdet::raster::{BinaryMask, PredictionMap};
use segdet::taxonomy::Taxonomy;

use crate::config::{load_taxonomy, pipeline_params, Config};
use crate::{Cli, RunArgs};

pub fn run(cli: &Cli, args: &RunArgs) -> anyhow::Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let taxonomy = load_taxonomy(args.taxonomy.as_deref().or(config.taxonomy.as_deref()))?;
    let params = pipeline_params(&config, &args.pipeline.overrides()?)?;

    let (_, image) = load_scene_and_image(&args.scene, &taxonomy)?;

    let seg_dir = args
        .seg_backend
        .clone()
        .or(config.seg_backend.clone())
        .context("stage load-backends: no segmentation backend given (--seg-backend or config)")?;
    let det_dir = args
        .det_backend
        .clone()
        .or(config.det_backend.clone())
        .context("stage load-backends: no detection backend given (--det-backend or config)")?;
    let seg = load_file_backend(&seg_dir, &taxonomy).with_context(|| {
        format!("stage load-backends: segmentation backend {}", seg_dir.display())
    })?;
    let det = load_file_backend(&det_dir, &taxonomy).with_context(|| {
        format!("stage load-backends: detection backend {}", det_dir.display())
    })?;

    let result = run_pipeline(&image, &seg, &det, &taxonomy, &params).context("stage run")?;
    write_run_outputs(&args.out, &result, &params, image.width(), image.height())?;

    println!(
        "mode {}: {} detections, {} residual regions, {} iterations",
        params.mode.name,
        result.detections.len(),
        result.residual_regions.len(),
        result.trace.iterations.len()
    );
    println!("outputs in {}", args.out.display());
    Ok(0)
}

pub(crate) fn write_run_outputs(
    out_dir: &Path,
    result: &FusionResult,
    params: &PipelineParams,
    width: u32,
    height: u32,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir).context("stage run: creating output directory")?;
    write_detections_file(&out_dir.join("detections.txt"), &result.detections)
        .context("stage run: writing detections")?;

    let mut residual = BinaryMask::new(width, height);
    for region in &result.residual_regions {
        for &(x, y) in &region.pixels {
            residual.set(x, y, true);
        }
    }
    residual
        .to_prediction_map()
        .write_pmap(&out_dir.join("residual.pmap"))
        .context("stage run: writing residual map")?;

    #[derive(serde::Serialize)]
    struct TraceDocument<'a> {
        params: &'a PipelineParams,
        trace: &'a segdet::fusion::FusionTrace,
    }
    crate::commands::write_json(
        &out_dir.join("trace.json"),
        &TraceDocument {
            params,
            trace: &result.trace,
        },
    )
    .context("stage run: writing trace")?;
    Ok(())
}

/// Loads a manifest plus its image raster, with stage-tagged errors.
pub(crate) fn load_scene_and_image(
    manifest: &Path,
    taxonomy: &Taxonomy,
) -> anyhow::Result<(segdet::ingest::Scene, PredictionMap)> {
    let loaded = load_scene(manifest, taxonomy).context("stage scene")?;
    let image =
        PredictionMap::read_pmap(&loaded.image_path).context("stage scene: reading image raster")?;
    Ok((loaded.scene, image))
}
