use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bestworst::design::Protocol;
use bestworst::pipeline::{
    run_annotation, run_protocol_comparison, stage_annotate, stage_design, stage_eval,
    stage_score, ComparisonConfig, PipelineError, RunConfig,
};
use bestworst::prompting::RatingScaleSpec;

/// Annotate texts with a language model through rating or comparative prompts.
#[derive(Debug, Parser)]
#[command(name = "bestworst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write design.jsonl for every dimension.
    Design(RunArgs),
    /// Render prompts, query the backend and write judgments.jsonl (resumes when possible).
    Annotate(RunArgs),
    /// Turn judgments into scores.tsv and labeled.jsonl.
    Score(RunArgs),
    /// Correlate with gold scores, compute split-half reliability and write report.json.
    Eval(RunArgs),
    /// All of the above in order.
    Run(RunArgs),
    /// Simulated sweep over protocols and best-worst budgets.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Best-worst budget multiplier.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Rating scale variant, e.g. D-10 or B-1.
    #[arg(long)]
    scale: Option<RatingScaleSpec>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    repeats_per_tuple: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            if let Some(sim) = cfg.simulator.as_mut() {
                sim.seed = seed;
            }
        }
        if let Some(k) = self.k {
            cfg.design.k = k;
        }
        if let Some(p) = self.protocol {
            cfg.protocol = p;
            if p.is_comparative() {
                cfg.scale = None;
            }
        }
        if let Some(s) = self.scale {
            cfg.scale = Some(s);
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(r) = self.repeats_per_tuple {
            cfg.repeats_per_tuple = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Optional TOML with comparison settings.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Number of synthetic texts.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated best-worst budget multipliers.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// Rating scale for the rating protocols.
    #[arg(long)]
    scale: Option<RatingScaleSpec>,
    /// Write the full report as JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn compare(args: &CompareArgs) -> Result<(), PipelineError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        }
        None => ComparisonConfig::default(),
    };
    if let Some(n) = args.n {
        cfg.n_items = n;
    }
    if let Some(s) = args.sigma {
        cfg.noise_sigma = s;
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(k) = &args.k {
        cfg.k_values = k.clone();
    }
    if let Some(s) = args.scale {
        cfg.scale = s;
    }
    let report = run_protocol_comparison(&cfg)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.output {
        std::fs::write(path, report.to_json()).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Design(args) => {
            for path in stage_design(&args.load()?)? {
                println!("{}", path.display());
            }
        }
        Command::Annotate(args) => {
            for (unit, stats) in stage_annotate(&args.load()?)? {
                println!(
                    "{unit}: {} tuples, {} accepted, {} failed, {} retried, {} via fallback, {} live requests",
                    stats.tuples,
                    stats.accepted,
                    stats.failures,
                    stats.retried_tuples,
                    stats.fallback_uses,
                    stats.live_requests
                );
            }
        }
        Command::Score(args) => {
            for path in stage_score(&args.load()?)? {
                println!("{}", path.display());
            }
        }
        Command::Eval(args) => {
            print!("{}", stage_eval(&args.load()?)?.render_table());
        }
        Command::Run(args) => {
            let summary = run_annotation(&args.load()?)?;
            for (unit, stats) in &summary.batches {
                eprintln!(
                    "{unit}: {} accepted, {} failed, {} live requests",
                    stats.accepted, stats.failures, stats.live_requests
                );
            }
            print!("{}", summary.report.render_table());
        }
        Command::Compare(args) => compare(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
