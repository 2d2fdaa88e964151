//! `end-to-end`: simulate, run, evaluate all three systems, compare.


use anyhow::Context;
use segdet::backend::file::write_detections_file;
use segdet::backend::{load_file_backend, FileBackend};
use segdet::evaluation::{compare as compare_boards, match_detections, score, MatchCriterion, Scoreboard};
use segdet::fusion::{
    detection_standalone, run_pipeline, segmentation_standalone, PipelineParams,
};
use segdet::geometry::Detection;
use segdet::ingest::{make_grid, stitch, Scene};
use segdet::raster::PredictionMap;
use segdet::simulate::write_scene_dir;
use segdet::taxonomy::Taxonomy;

use crate::commands::{write_json, EvalReport};
use crate::config::{load_taxonomy, parse_criterion, pipeline_params, Config};
use crate::{Cli, EndToEndArgs};

pub fn end_to_end(cli: &Cli, args: &EndToEndArgs) -> anyhow::Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let taxonomy = load_taxonomy(args.taxonomy.as_deref().or(config.taxonomy.as_deref()))?;
    let seed = if args.seed != 0 { args.seed } else { config.seed.unwrap_or(args.seed) };
    let params = pipeline_params(&config, &args.pipeline.overrides()?)?;
    let criterion_name = args
        .criterion
        .clone()
        .or_else(|| config.criterion.clone())
        .unwrap_or_else(|| "over-target".to_string());
    let criterion = parse_criterion(&criterion_name).context("stage evaluate")?;

    // Simulate.
    let sim = super::simulate::resolve_sim_config(&args.preset, args.sim_config.as_deref(), seed)?;
    let scene_dir = args.out.join("scene");
    let written = write_scene_dir(&scene_dir, &sim, &taxonomy).context("stage simulate")?;

    // Load back through the file interfaces.
    let (scene, image) = super::run::load_scene_and_image(&written.manifest, &taxonomy)?;
    let backend = load_file_backend(&written.backend_dir, &taxonomy).with_context(|| {
        format!(
            "stage load-backends: backend {}",
            written.backend_dir.display()
        )
    })?;

    // Fused run.
    let result = run_pipeline(&image, &backend, &backend, &taxonomy, &params).context("stage run")?;
    super::run::write_run_outputs(&args.out, &result, &params, image.width(), image.height())?;
    std::fs::rename(
        args.out.join("detections.txt"),
        args.out.join("fused_detections.txt"),
    )
    .context("stage run: renaming detections")?;

    // Standalone systems at the same working point.
    let seg_standalone =
        standalone_segmentation(&image, &backend, &params, &taxonomy).context("stage run")?;
    let det_standalone = detection_standalone(&image, &backend, &params.mode, params.nms_threshold)
        .context("stage run")?;
    write_detections_file(&args.out.join("seg_detections.txt"), &seg_standalone)
        .context("stage run: writing segmentation detections")?;
    write_detections_file(&args.out.join("det_detections.txt"), &det_standalone)
        .context("stage run: writing detector detections")?;

    // Evaluate all three.
    let boards = [
        ("segmentation", &seg_standalone),
        ("detection", &det_standalone),
        ("fused", &result.detections),
    ]
    .map(|(name, detections)| (name, evaluate_against(&scene, detections, &criterion, &taxonomy)));
    for (name, board) in &boards {
        write_json(
            &args.out.join(format!("{name}_board.json")),
            &EvalReport::new(board.clone(), &criterion),
        )
        .context("stage evaluate")?;
    }

    // Compare.
    let named: Vec<(String, &Scoreboard)> = boards
        .iter()
        .map(|(name, board)| (name.to_string(), board))
        .collect();
    let report = compare_boards(&named);
    print!("{report}");
    write_json(&args.out.join("compare.json"), &report).context("stage compare")?;
    std::fs::write(&args.out.join("compare.txt"), format!("{report}"))
        .context("stage compare: writing text report")?;

    println!("artifacts in {}", args.out.display());
    Ok(0)
}

fn evaluate_against(
    scene: &Scene,
    detections: &[Detection],
    criterion: &MatchCriterion,
    taxonomy: &Taxonomy,
) -> Scoreboard {
    let matched = match_detections(&scene.objects, detections, criterion);
    score(&matched, &scene.objects, detections, taxonomy)
}

/// Rebuilds the stitched segmentation map from the file backend and turns
/// localized regions into standalone detections.
fn standalone_segmentation(
    image: &PredictionMap,
    backend: &FileBackend,
    params: &PipelineParams,
    taxonomy: &Taxonomy,
) -> anyhow::Result<Vec<Detection>> {
    use segdet::backend::SegmentationBackend;
    let (width, height) = (image.width(), image.height());
    let origins: Vec<((u32, u32), (u32, u32))> =
        if width >= params.tile_size && height >= params.tile_size {
            make_grid(width, height, params.tile_size, params.overlap)
                .context("tiling")?
                .origins
                .iter()
                .map(|&o| (o, (params.tile_size, params.tile_size)))
                .collect()
        } else {
            vec![((0, 0), (width, height))]
        };
    let mut tiles = Vec::with_capacity(origins.len());
    for &(origin, size) in &origins {
        tiles.push((
            origin,
            backend
                .segment_tile(image, origin, size)
                .with_context(|| format!("segmentation tile ({}, {})", origin.0, origin.1))?,
        ));
    }
    let map = stitch(&tiles, width, height).context("stitching")?;
    Ok(segmentation_standalone(&map, &params.mode, taxonomy))
}
