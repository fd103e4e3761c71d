//! Command-line front end: identification and synthesis sweeps, one-shot
//! estimation and synthesis, and dataset simulation.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mnlqr::cli::{run_identify, run_simulate, run_synthesize, write_records, ExperimentConfig, RunOptions};
use mnlqr::identify::{second_moment_ambiguity, structured_ambiguity_split, AmbiguitySet, Dataset};
use mnlqr::model::ModeTensor;
use mnlqr::synthesis::{dr_synthesize, LqrSpec, RiccatiOptions};
use mnlqr::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "mnlqr", version, about = "Identification and robust LQR for systems with multiplicative noise")]
struct Cli {
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Runs on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Identification sweep from a config, or one-shot estimation from a dataset.
    Identify(IdentifyArgs),
    /// Synthesis sweep from a config, or one-shot synthesis from an ambiguity set.
    Synthesize(SynthesizeArgs),
    /// Generates a dataset CSV (plus JSON sidecar) from a config.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    /// Experiment config (sweep mode).
    #[arg(short, long, conflicts_with_all = ["data", "model"])]
    config: Option<PathBuf>,
    /// Output path (sweep CSV, or ambiguity-set JSON in one-shot mode).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Dataset CSV (one-shot mode).
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    /// Model tensor JSON (one-shot mode).
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Failure probability in one-shot mode.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    /// Experiment config (sweep mode).
    #[arg(short, long, conflicts_with_all = ["model", "ambiguity", "lqr"])]
    config: Option<PathBuf>,
    /// Output path (sweep CSV, or synthesis JSON in one-shot mode).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Model tensor JSON (one-shot mode).
    #[arg(long, requires_all = ["ambiguity", "lqr"])]
    model: Option<PathBuf>,
    /// Ambiguity set JSON (one-shot mode).
    #[arg(long)]
    ambiguity: Option<PathBuf>,
    /// LQR weights JSON (one-shot mode).
    #[arg(long)]
    lqr: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Experiment config.
    #[arg(short, long)]
    config: PathBuf,
    /// Dataset CSV output; the sidecar is written next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Number of transitions (defaults to the largest sweep entry).
    #[arg(short = 'n', long)]
    samples: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::ConfigInvalid {
        path: String::new(),
        message: format!("{}: {e}", path.display()),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigInvalid {
        path: format!("{}:{}", path.display(), e.path()),
        message: e.into_inner().to_string(),
    })
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn output_path(cli_out: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    cli_out.or_else(|| cfg.output_path.clone()).ok_or_else(|| Error::ConfigInvalid {
        path: "output_path".into(),
        message: "no output path given on the command line or in the config".into(),
    })
}

fn usage(message: &str) -> Error {
    Error::InvalidArgument(message.into())
}

fn identify(args: IdentifyArgs, opts: &RunOptions) -> Result<()> {
    if let Some(cfg_path) = args.config {
        let cfg = ExperimentConfig::load(&cfg_path)?;
        let exp = cfg.prepare()?;
        let records = run_identify(&exp, opts)?;
        return write_records(&output_path(args.output, &cfg)?, &records);
    }
    let (Some(data), Some(model)) = (args.data, args.model) else {
        return Err(usage("identify needs either -c CONFIG or --data and --model"));
    };
    let m: ModeTensor = read_json(&model)?;
    let d = Dataset::read_csv(&data)?;
    let amb = if m.is_structured() {
        structured_ambiguity_split(&m, &d, args.delta)?
    } else {
        second_moment_ambiguity(&m, &d, args.delta)?
    };
    write_json(args.output.as_deref(), &amb)
}

fn synthesize(args: SynthesizeArgs, opts: &RunOptions) -> Result<()> {
    if let Some(cfg_path) = args.config {
        let cfg = ExperimentConfig::load(&cfg_path)?;
        let exp = cfg.prepare()?;
        let records = run_synthesize(&exp, opts)?;
        return write_records(&output_path(args.output, &cfg)?, &records);
    }
    let (Some(model), Some(amb), Some(lqr)) = (args.model, args.ambiguity, args.lqr) else {
        return Err(usage("synthesize needs either -c CONFIG or --model, --ambiguity and --lqr"));
    };
    let m: ModeTensor = read_json(&model)?;
    let a: AmbiguitySet = read_json(&amb)?;
    let spec: LqrSpec = read_json(&lqr)?;
    let res = dr_synthesize(&m, &a, &spec, RiccatiOptions::default())?;
    write_json(args.output.as_deref(), &res)
}

fn simulate(args: SimulateArgs, opts: &RunOptions) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let exp = cfg.prepare()?;
    let n = args.samples.unwrap_or_else(|| *exp.sweep.last().expect("validated nonempty"));
    let data = run_simulate(&exp, n, opts)?;
    data.write_csv(&output_path(args.output, &cfg)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions { seed: cli.seed, threads: cli.threads, deterministic: cli.deterministic };
    let result = match cli.command {
        Command::Identify(a) => identify(a, &opts),
        Command::Synthesize(a) => synthesize(a, &opts),
        Command::Simulate(a) => simulate(a, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mnlqr: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
