//! Command-line orchestration of the ridesplitting emission pipeline.
//!
//! Every stage writes `<out>/<stage>/` with its tables and a `manifest.json`;
//! `all` runs ingest through explain and adds `<out>/manifest.json` listing
//! every stage.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use manifest::{Manifest, StageRecord};
pub use stages::Stage;

#[derive(Debug, Parser)]
#[command(name = "ridesplit", version, about = "Ridesplitting emission analysis pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replace existing stage outputs instead of refusing.
    #[arg(long, global = true)]
    pub overwrite: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario with ground truth.
    Synth,
    /// Parse and filter the order and GPS tables.
    Ingest,
    /// Segment trajectories and identify pool trips.
    Trips,
    /// Per-ride and per-pool-trip emissions.
    Emissions,
    /// Substitute baselines and emission reductions.
    Match,
    /// Trip records, validity and outlier filters, correlation matrix.
    Features,
    /// Hourly, spatial and ERR-by-group aggregates.
    Report,
    /// Split, grid-search CV, final fit and test metrics.
    Train,
    /// Shapley values and partial dependence.
    Explain,
    /// Ingest through explain in sequence.
    All,
    /// Print the effective configuration.
    ShowConfig,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Synth => vec![Stage::Synth],
            Command::Ingest => vec![Stage::Ingest],
            Command::Trips => vec![Stage::Trips],
            Command::Emissions => vec![Stage::Emissions],
            Command::Match => vec![Stage::Match],
            Command::Features => vec![Stage::Features],
            Command::Report => vec![Stage::Report],
            Command::Train => vec![Stage::Train],
            Command::Explain => vec![Stage::Explain],
            Command::All => Stage::PIPELINE.to_vec(),
            Command::ShowConfig => Vec::new(),
        }
    }
}

/// The configuration a command line selects.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

/// Runs `stages` in order under `out`, refusing to touch existing outputs
/// unless `overwrite`. More than one stage also writes `<out>/manifest.json`.
pub fn run_stages(cfg: &PipelineConfig, out: &Path, stages: &[Stage], overwrite: bool) -> anyhow::Result<Vec<StageRecord>> {
    let mut claimed: Vec<PathBuf> = stages.iter().map(|s| out.join(s.name())).collect();
    if stages.len() > 1 {
        claimed.push(out.join(manifest::MANIFEST));
    }
    manifest::claim(&claimed, overwrite)?;
    let records = stages.iter().map(|s| s.run(cfg, out)).collect::<anyhow::Result<Vec<_>>>()?;
    if stages.len() > 1 {
        std::fs::write(out.join(manifest::MANIFEST), Manifest::new(cfg, records.clone()).to_bytes()?)?;
    }
    Ok(records)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", toml::to_string(&cfg)?);
        return Ok(());
    }
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be positive");
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    run_stages(&cfg, &cli.out, &cli.command.stages(), cli.overwrite)?;
    Ok(())
}
