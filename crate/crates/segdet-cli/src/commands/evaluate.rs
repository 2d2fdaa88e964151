//! `evaluate` and `compare`.

use std::collections::BTreeMap;

use anyhow::Context;
use segdet::backend::file::read_detections_file;
use segdet::evaluation::{compare as compare_boards, match_detections, score, Scoreboard};
use segdet::taxonomy::Taxonomy;

use crate::commands::{fmt_ratio, read_report, write_json, EvalReport};
use crate::config::{load_taxonomy, parse_criterion, Config};
use crate::{Cli, CompareArgs, EvaluateArgs};

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> anyhow::Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let taxonomy = load_taxonomy(args.taxonomy.as_deref().or(config.taxonomy.as_deref()))?;
    let criterion_name = args
        .criterion
        .clone()
        .or_else(|| config.criterion.clone())
        .unwrap_or_else(|| "over-target".to_string());
    let criterion = parse_criterion(&criterion_name).context("stage evaluate")?;
    anyhow::ensure!(
        args.level == 2 || args.level == 3,
        "stage evaluate: --level takes 2 or 3"
    );

    let loaded =
        segdet::ingest::load_scene(&args.scene, &taxonomy).context("stage scene")?;
    let detections =
        read_detections_file(&args.detections, &taxonomy).context("stage evaluate")?;

    let matched = match_detections(&loaded.scene.objects, &detections, &criterion);
    let board = score(&matched, &loaded.scene.objects, &detections, &taxonomy);
    print_board(&board, args.level, &taxonomy);

    if let Some(out) = &args.out {
        write_json(out, &EvalReport::new(board, &criterion)).context("stage evaluate")?;
        println!("report written to {}", out.display());
    }
    Ok(0)
}

fn print_board(board: &Scoreboard, level: u8, taxonomy: &Taxonomy) {
    println!(
        "gt {} | detections {} | matched {}",
        board.n_gt, board.n_detections, board.n_matched
    );
    println!(
        "recall {} | precision {}",
        fmt_ratio(board.recall()),
        fmt_ratio(board.precision())
    );
    println!(
        "identification: level-2 {} | level-3 {}{}",
        fmt_ratio(board.identification_rate_l2()),
        fmt_ratio(board.identification_rate_l3()),
        if level == 2 { "  (reporting level 2)" } else { "" }
    );

    // Confusion at the requested level; level 2 aggregates by function.
    let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (gt_label, row) in &board.confusion {
        for (pred_label, count) in row {
            let (g, p) = if level == 2 {
                let up = |name: &str| {
                    taxonomy
                        .label(name)
                        .and_then(|l| taxonomy.ancestor(&l, 2))
                        .map(|l| l.name)
                        .unwrap_or_else(|_| name.to_string())
                };
                (up(gt_label), up(pred_label))
            } else {
                (gt_label.clone(), pred_label.clone())
            };
            *confusion.entry(g).or_default().entry(p).or_default() += count;
        }
    }
    let disagreements: Vec<String> = confusion
        .iter()
        .flat_map(|(g, row)| {
            row.iter()
                .filter(move |(p, _)| *p != g)
                .map(move |(p, n)| format!("  {g} -> {p}: {n}"))
        })
        .collect();
    if disagreements.is_empty() {
        println!("confusion: none");
    } else {
        println!("confusion (level {level}):");
        for line in disagreements {
            println!("{line}");
        }
    }
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<i32> {
    let mut named: Vec<(String, Scoreboard)> = Vec::new();
    for spec in &args.boards {
        let (name, path) = spec
            .split_once('=')
            .with_context(|| format!("stage compare: `{spec}` is not NAME=REPORT.json"))?;
        let report = read_report(std::path::Path::new(path)).context("stage compare")?;
        named.push((name.to_string(), report.scoreboard));
    }
    let borrowed: Vec<(String, &Scoreboard)> =
        named.iter().map(|(n, b)| (n.clone(), b)).collect();
    let report = compare_boards(&borrowed);
    print!("{report}");
    if let Some(out) = &args.out {
        write_json(out, &report).context("stage compare")?;
    }
    Ok(0)
}
