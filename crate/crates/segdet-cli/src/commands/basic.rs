//! `tile`, `stitch` and `arch-check`.

use anyhow::Context;
use segdet::archspec::{propagate_unet, ArchSpecFile, RetinaSpec, UNetSpec};
use segdet::backend::file::tile_stem;
use segdet::ingest::{make_grid, stitch as stitch_tiles, tile_image};
use segdet::raster::PredictionMap;

use crate::{ArchCheckArgs, StitchArgs, TileArgs};

pub fn tile(args: &TileArgs) -> anyhow::Result<i32> {
    let image = PredictionMap::read_pmap(&args.image).context("stage tile: reading image")?;
    let grid = make_grid(image.width(), image.height(), args.tile_size, args.overlap)
        .context("stage tile")?;
    std::fs::create_dir_all(&args.out_dir).context("stage tile: creating output directory")?;
    let tiles = tile_image(&image, &grid);
    for (origin, map) in &tiles {
        let path = args.out_dir.join(format!("{}.pmap", tile_stem(*origin)));
        map.write_pmap(&path)
            .with_context(|| format!("stage tile: writing {}", path.display()))?;
    }
    println!(
        "wrote {} tiles ({}px, overlap {}) to {}",
        tiles.len(),
        args.tile_size,
        args.overlap,
        args.out_dir.display()
    );
    Ok(0)
}

pub fn stitch(args: &StitchArgs) -> anyhow::Result<i32> {
    let mut tiles = Vec::new();
    let entries = std::fs::read_dir(&args.tiles_dir)
        .with_context(|| format!("stage stitch: reading {}", args.tiles_dir.display()))?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.extension().and_then(|e| e.to_str()) != Some("pmap") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let origin: (u32, u32) = stem
            .split_once('_')
            .and_then(|(x, y)| Some((x.parse().ok()?, y.parse().ok()?)))
            .with_context(|| format!("stage stitch: tile name `{stem}` is not <x>_<y>"))?;
        let map = PredictionMap::read_pmap(&path)
            .with_context(|| format!("stage stitch: reading {}", path.display()))?;
        tiles.push((origin, map));
    }
    let canvas = stitch_tiles(&tiles, args.width, args.height).context("stage stitch")?;
    canvas
        .write_pmap(&args.out)
        .with_context(|| format!("stage stitch: writing {}", args.out.display()))?;
    println!(
        "stitched {} tiles into {}x{} {}",
        tiles.len(),
        args.width,
        args.height,
        args.out.display()
    );
    Ok(0)
}

pub fn arch_check(args: &ArchCheckArgs) -> anyhow::Result<i32> {
    let file = match &args.file {
        Some(path) => ArchSpecFile::load(path).context("stage arch-check")?,
        None => ArchSpecFile {
            unet: Some(UNetSpec::default()),
            retinanet: Some(RetinaSpec::default()),
        },
    };
    let mut violation_count = 0usize;

    if let Some(unet) = &file.unet {
        println!("== segmentation network ==");
        let violations = unet.validate();
        if violations.is_empty() {
            let trace = propagate_unet(unet).context("stage arch-check")?;
            print!("{trace}");
            println!(
                "downsamplings: {}, upsamplings: {}",
                trace.downsample_events(),
                trace.upsample_events()
            );
            println!(
                "encoder: {} IM blocks ({} conv layers), decoder: {} IM blocks ({} conv layers)",
                unet.encoder_im_blocks,
                unet.encoder_conv_layers(),
                unet.decoder_im_blocks,
                unet.decoder_conv_layers()
            );
        }
        for violation in &violations {
            println!("violation: {violation}");
        }
        violation_count += violations.len();
        println!();
    }

    if let Some(retina) = &file.retinanet {
        println!("== detection network ==");
        let violations = retina.validate();
        if violations.is_empty() {
            println!(
                "backbone {}, {} pyramid levels, {} anchors per location, NMS {}",
                retina.backbone_name,
                retina.pyramid_strides.len(),
                retina.anchors_per_location,
                retina.nms_threshold
            );
            match retina.anchor_count(args.image_size) {
                Ok(total) => {
                    for &stride in &retina.pyramid_strides {
                        println!(
                            "  stride {:>4}: {:>9} anchors",
                            stride,
                            retina.level_anchor_count(stride, args.image_size)
                        );
                    }
                    println!("  total at {}px: {} anchors", args.image_size, total);
                }
                Err(e) => println!("anchor arithmetic: {e}"),
            }
        }
        for violation in &violations {
            println!("violation: {violation}");
        }
        violation_count += violations.len();
    }

    if violation_count > 0 {
        eprintln!("error: stage arch-check: {violation_count} violation(s)");
        Ok(1)
    } else {
        Ok(0)
    }
}
