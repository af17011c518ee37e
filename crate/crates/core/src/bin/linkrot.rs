use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linkrot::pipeline::{Overrides, Pipeline, PipelineConfig, Stage, TransportMode};

/// Audit link rot and web-archive coverage of shared resources.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse event inputs into posts.jsonl
    Ingest(Common),
    /// Build hashtag tables and rank companions of the initial tag
    ExpandTags(Common),
    /// Grow the selection set and keep matching URI-bearing posts
    Filter(Common),
    /// Draw the seeded sample of filtered posts
    Sample(Common),
    /// Follow redirects and collapse URI aliases
    Resolve(Common),
    /// Multi-round live-web liveness audit
    AuditLive(Common),
    /// Multi-round web-archive coverage audit
    AuditArchive(Common),
    /// Contingency tables, centroid splits and linear models
    Analyze(Common),
    /// Render report.md from the analysis
    Report(Common),
    /// Every stage in order, skipping up-to-date ones
    RunAll(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Replay,
    Live,
    Record,
}

#[derive(Args)]
struct Common {
    /// Top-level pipeline file
    #[arg(short, long, env = "LINKROT_CONFIG", default_value = "pipeline.toml")]
    config: PathBuf,
    /// Restrict per-event stages to one event
    #[arg(long)]
    event: Option<String>,
    /// Run even if the manifest says the stage is up to date
    #[arg(long)]
    force: bool,
    #[arg(long)]
    rounds: Option<u32>,
    /// Hours between audit rounds
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    per_host_rps: Option<f64>,
    /// Request timeout in seconds
    #[arg(long)]
    timeout: Option<f64>,
    /// TimeMap endpoint template containing {uri}
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stages, common): (&[Stage], Common) = match cli.command {
        Command::Ingest(c) => (&[Stage::Ingest], c),
        Command::ExpandTags(c) => (&[Stage::Expand], c),
        Command::Filter(c) => (&[Stage::Filter], c),
        Command::Sample(c) => (&[Stage::Sample], c),
        Command::Resolve(c) => (&[Stage::Resolve], c),
        Command::AuditLive(c) => (&[Stage::AuditLive], c),
        Command::AuditArchive(c) => (&[Stage::AuditArchive], c),
        Command::Analyze(c) => (&[Stage::Analyze], c),
        Command::Report(c) => (&[Stage::Report], c),
        Command::RunAll(c) => (&Stage::ALL, c),
    };
    match run(stages, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(stages: &[Stage], c: Common) -> anyhow::Result<()> {
    let overrides = Overrides {
        rounds: c.rounds,
        spacing_hours: c.spacing,
        concurrency: c.concurrency,
        per_host_rps: c.per_host_rps,
        timeout_secs: c.timeout,
        endpoint: c.endpoint,
        output_dir: c.out,
        mode: c.mode.map(|m| match m {
            Mode::Replay => TransportMode::Replay,
            Mode::Live => TransportMode::Live,
            Mode::Record => TransportMode::Record,
        }),
    };
    let cfg = PipelineConfig::load(&c.config, &overrides)?;
    // a single stage named on the command line always runs
    let force = c.force || stages.len() == 1;
    let mut pipeline = Pipeline::new(cfg).force(force);
    for run in pipeline.run(stages, c.event.as_deref())? {
        println!("{run}");
    }
    Ok(())
}
