//! Subcommand implementations. Every fallible step is wrapped with a stage
//! name so failures identify where the pipeline broke.

mod basic;
mod end_to_end;
mod evaluate;
mod run;
mod simulate;

pub use basic::{arch_check, stitch, tile};
pub use end_to_end::end_to_end;
pub use evaluate::{compare, evaluate};
pub use run::run;
pub use simulate::simulate;

use std::path::Path;

use anyhow::Context;
use segdet::evaluation::{MatchCriterion, Scoreboard};

/// Machine-readable evaluation report: the raw counts plus the derived
/// ratios.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub criterion: String,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub identification_rate_l2: Option<f64>,
    pub identification_rate_l3: Option<f64>,
    pub scoreboard: Scoreboard,
}

impl EvalReport {
    pub fn new(board: Scoreboard, criterion: &MatchCriterion) -> Self {
        EvalReport {
            criterion: crate::config::criterion_name(criterion).to_string(),
            recall: board.recall(),
            precision: board.precision(),
            identification_rate_l2: board.identification_rate_l2(),
            identification_rate_l3: board.identification_rate_l3(),
            scoreboard: board,
        }
    }
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn read_report(path: &Path) -> anyhow::Result<EvalReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn fmt_ratio(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".to_string(),
    }
}
