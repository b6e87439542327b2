mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensorseg::config::RunConfig;
use sensorseg::segmenter::PipelineVariant;
use sensorseg::Error;

#[derive(Parser)]
#[command(name = "sensorseg", version, about = "Self-supervised segmentation of building sensor names")]
struct Cli {
    /// key = value config file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// override one config key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Stage {
    /// directory holding stage artifacts
    #[arg(long, value_name = "DIR")]
    pub work: PathBuf,
    /// use the backward (reversed-name) artifacts
    #[arg(long)]
    pub reverse: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: names.txt and gt.jsonl
    Synth {
        /// scenario tag or path to a scheme file
        #[arg(long)]
        scheme: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// generator seed; defaults to the scheme file's seed or the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the character language model
    TrainLm {
        #[arg(long)]
        names: PathBuf,
        #[command(flatten)]
        stage: Stage,
    },
    /// Dump transition probabilities and hidden states
    Probe {
        #[arg(long)]
        names: PathBuf,
        #[command(flatten)]
        stage: Stage,
    },
    /// Pick t0 and t1 from the transition histogram
    Thresholds {
        #[command(flatten)]
        stage: Stage,
    },
    /// Label transitions Tie, Break or Unknown
    PseudoLabels {
        #[command(flatten)]
        stage: Stage,
    },
    /// Train the classifier ensemble on pseudo labels
    TrainEnsemble {
        #[command(flatten)]
        stage: Stage,
    },
    /// Segment names without any ground truth
    Segment {
        #[arg(long, value_parser = parse_variant)]
        variant: PipelineVariant,
        #[arg(long)]
        names: PathBuf,
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        /// write segmentation JSONL here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// print human-readable segments to stdout
        #[arg(long)]
        pretty: bool,
    },
    /// Score predicted segmentations against ground truth
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// include one entry per name
        #[arg(long)]
        per_name: bool,
    },
    /// Best single threshold chosen with ground truth (upper bound for FW)
    Gridsearch {
        #[arg(long)]
        names: PathBuf,
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split at delimiters only
    Baseline {
        #[arg(long)]
        names: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tie and Break precision of the forward probabilities per threshold
    Curves {
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Every stage and variant in one go
    RunAll {
        #[arg(long)]
        names: PathBuf,
        #[arg(long, value_name = "DIR")]
        work: PathBuf,
        /// enables gridsearch and scoring
        #[arg(long)]
        gt: Option<PathBuf>,
        /// skip the backward model
        #[arg(long)]
        no_bw: bool,
    },
}

fn parse_variant(s: &str) -> Result<PipelineVariant, String> {
    match s.parse::<PipelineVariant>() {
        Ok(PipelineVariant::Gs) => Err("gs needs ground truth; use the gridsearch command".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ModelMismatch(_) => 3,
        Error::Io(_) | Error::Divergence { .. } | Error::Json(_) => 1,
        _ => 2,
    }
}

fn resolve_config(cli: &Cli) -> sensorseg::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = artifacts::read_file(path)?;
        cfg.apply_text(&String::from_utf8_lossy(&text))?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> sensorseg::Result<()> {
    let cfg = resolve_config(&cli)?;
    use commands as c;
    let out = match cli.command {
        Command::Synth { scheme, count, out, seed } => c::synth(&cfg, &scheme, count, &out, seed)?,
        Command::TrainLm { names, stage } => c::train_lm(&cfg, &names, &stage)?,
        Command::Probe { names, stage } => c::probe(&cfg, &names, &stage)?,
        Command::Thresholds { stage } => c::thresholds(&cfg, &stage)?,
        Command::PseudoLabels { stage } => c::pseudo_labels(&cfg, &stage)?,
        Command::TrainEnsemble { stage } => c::train_ensemble(&cfg, &stage)?,
        Command::Segment {
            variant,
            names,
            work,
            out,
            pretty,
        } => c::segment(&cfg, variant, &names, &work, out.as_deref(), pretty)?,
        Command::Evaluate { pred, gt, per_name } => Some(c::evaluate(&pred, &gt, per_name)?),
        Command::Gridsearch { names, work, gt, out } => {
            Some(c::gridsearch(&cfg, &names, &work, gt.as_deref(), out.as_deref())?)
        }
        Command::Baseline { names, out } => c::baseline(&cfg, &names, out.as_deref())?,
        Command::Curves { work, gt } => Some(c::curves(&work, gt.as_deref())?),
        Command::RunAll { names, work, gt, no_bw } => Some(c::run_all(&cfg, &names, &work, gt.as_deref(), !no_bw)?),
    };
    if let Some(v) = out {
        print!("{}", artifacts::to_json_text(&v));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
