use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use archive_rank::pipeline::{PipelineError, Run, RunConfig, Stage};
use archive_rank::synth::{self, SynthParams};

/// Ranks web-archive documents for entity queries from URLs, links,
/// anchor texts and capture metadata.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving all artifacts and manifest.json.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run only this stage; without it every stage runs in order.
    #[arg(long)]
    stage: Option<Stage>,
}

#[derive(Subcommand)]
enum Command {
    Ingest,
    Graph,
    Index,
    Stats,
    Features,
    Label,
    Train,
    Rank,
    Eval,
    /// Runs every stage in order.
    All,
    /// Writes a synthetic corpus with a ready-made config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Small corpus for quick checks.
        #[arg(long)]
        small: bool,
    },
}

fn init_threads() -> Result<(), PipelineError> {
    if let Ok(v) = std::env::var("ARCHIVE_RANK_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| PipelineError::Config(format!("ARCHIVE_RANK_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    init_threads()?;
    let stages: Vec<Stage> = match (&cli.command, cli.stage) {
        (Some(Command::Synth { out, small }), _) => {
            let mut params = if *small { SynthParams::small(7) } else { SynthParams::default() };
            if let Some(s) = cli.seed {
                params.seed = s;
            }
            let summary = synth::generate(out, &params)?;
            println!(
                "wrote {} documents in {} captures to {}",
                summary.documents,
                summary.records,
                out.display()
            );
            return Ok(());
        }
        (Some(Command::All), None) | (None, None) => Stage::ALL.to_vec(),
        (None, Some(s)) => vec![s],
        (Some(c), stage) => {
            let s = match c {
                Command::Ingest => Stage::Ingest,
                Command::Graph => Stage::Graph,
                Command::Index => Stage::Index,
                Command::Stats => Stage::Stats,
                Command::Features => Stage::Features,
                Command::Label => Stage::Label,
                Command::Train => Stage::Train,
                Command::Rank => Stage::Rank,
                Command::Eval => Stage::Eval,
                Command::All | Command::Synth { .. } => unreachable!("handled above"),
            };
            if stage.is_some_and(|st| st != s) {
                return Err(PipelineError::Config("--stage disagrees with the subcommand".into()));
            }
            vec![s]
        }
    };
    let config_path = cli
        .config
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let run_dir = cli
        .run_dir
        .ok_or_else(|| PipelineError::Config("--run-dir is required".into()))?;
    let mut config = RunConfig::load(&config_path)?;
    if let Some(s) = cli.seed {
        config = config.with_seed(s);
    }
    let run = Run::new(config, &run_dir);
    for stage in stages {
        run.run_stage(stage)?;
        eprintln!("{}: done", stage.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
