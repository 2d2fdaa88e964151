//! `simulate`: scenario presets to a scene directory on disk.

use anyhow::Context;
use segdet::simulate::{write_scene_dir, SimulationConfig};

use crate::config::{load_taxonomy, Config};
use crate::{Cli, SimulateArgs};

pub(crate) fn resolve_sim_config(
    preset: &str,
    sim_config: Option<&std::path::Path>,
    seed: u64,
) -> anyhow::Result<SimulationConfig> {
    if let Some(path) = sim_config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("stage simulate: reading {}", path.display()))?;
        let mut config: SimulationConfig =
            toml::from_str(&text).with_context(|| format!("stage simulate: parsing {}", path.display()))?;
        // The seed flag still governs file-based scenarios.
        config.scene.seed = seed;
        config.seg.seed = seed;
        config.det.seed = seed.wrapping_add(1);
        return Ok(config);
    }
    match preset {
        "noiseless" => Ok(SimulationConfig::noiseless(seed)),
        "calibrated" => Ok(SimulationConfig::calibrated(seed)),
        other => anyhow::bail!("stage simulate: unknown preset `{other}` (noiseless, calibrated)"),
    }
}

pub fn simulate(cli: &Cli, args: &SimulateArgs) -> anyhow::Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let seed = if args.seed != 0 { args.seed } else { config.seed.unwrap_or(args.seed) };
    let taxonomy = load_taxonomy(args.taxonomy.as_deref().or(config.taxonomy.as_deref()))?;

    let mut sim = resolve_sim_config(&args.preset, args.sim_config.as_deref(), seed)?;
    if let Some(n) = args.aircraft {
        sim.scene.n_aircraft = n;
    }

    let written = write_scene_dir(&args.out, &sim, &taxonomy).context("stage simulate")?;
    println!(
        "scene written: manifest {}, backends {}",
        written.manifest.display(),
        written.backend_dir.display()
    );
    Ok(0)
}
