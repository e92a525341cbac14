//! Pipeline orchestrator: dataset construction, benchmark sampling,
//! prediction scoring, and evaluation as subcommands.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

mod commands;
mod config;
mod evalcmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use webcept::PipelineError;

use config::{load_config, ConfigError, LoadedConfig};

#[derive(Debug)]
pub enum CmdError {
    /// Bad config or malformed/missing declared input: exit 1.
    Validation(String),
    /// IO or other runtime failure: exit 2.
    Runtime(String),
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Validation(e.0)
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidInput { .. } => CmdError::Validation(e.to_string()),
            other => CmdError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "webcept",
    about = "Webly-supervised concept dataset pipeline and evaluation toolkit",
    version
)]
struct Cli {
    /// TOML config file; omit to run on defaults plus --set overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set fetch.limit=10 (flags win).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the pipeline seed (shorthand for --set seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the concept vocabulary (nouns, verbs, adjectives).
    BuildLexicon,
    /// Emit bare-noun and corpus-filtered pair queries.
    GenQueries {
        /// Build bare queries straight from a term list, skipping the lexicon.
        #[arg(long)]
        terms_file: Option<PathBuf>,
    },
    /// Fetch image URLs for each query into the manifest (resumable).
    Fetch {
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Request-rate ceiling in requests per second.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        api_endpoint: Option<String>,
        /// Name of the environment variable holding the API key.
        #[arg(long)]
        api_key_env: Option<String>,
    },
    /// Convert the manifest into templated QA examples.
    GenQa,
    /// Partition manifest pairs into train/val/test.
    Split,
    /// Apply worker-vote verification to one split.
    Verify {
        /// Which split the votes cover.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Shard the web training pairs for one epoch.
    Shard {
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Build a stratified batch schedule over the training sources.
    Schedule,
    /// Sample the diverse-concept evaluation benchmark.
    SampleDce,
    /// Fit the seen-class down-weighting delta on validation examples.
    Calibrate,
    /// Turn raw prediction tables into ranked outputs.
    Score {
        /// classification | vqa | localization | hoi
        #[arg(long)]
        task: String,
    },
    /// Compute metrics against gold annotations.
    Evaluate {
        /// vqa | classification | captioning | localization | hoi | web10k
        #[arg(long)]
        task: String,
    },
    /// Aggregate all evaluation reports into combined JSON + CSV.
    Report,
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    // subcommand flags become config overrides so flags always win
    match &cli.command {
        Command::Fetch {
            limit,
            workers,
            rate,
            api_endpoint,
            api_key_env,
        } => {
            if let Some(v) = limit {
                overrides.push(format!("fetch.limit={v}"));
            }
            if let Some(v) = workers {
                overrides.push(format!("fetch.workers={v}"));
            }
            if let Some(v) = rate {
                overrides.push(format!("fetch.rate_per_sec={v}"));
            }
            if let Some(v) = api_endpoint {
                overrides.push(format!("fetch.endpoint=\"{v}\""));
            }
            if let Some(v) = api_key_env {
                overrides.push(format!("fetch.api_key_env=\"{v}\""));
            }
        }
        Command::Shard { epoch: Some(v) } => {
            overrides.push(format!("shard.epoch={v}"));
        }
        _ => {}
    }
    let loaded: LoadedConfig = load_config(cli.config.as_deref(), &overrides)?;

    match &cli.command {
        Command::BuildLexicon => commands::build_lexicon(&loaded),
        Command::GenQueries { terms_file } => {
            commands::gen_queries(&loaded, terms_file.as_deref())
        }
        Command::Fetch { .. } => commands::fetch(&loaded),
        Command::GenQa => commands::gen_qa(&loaded),
        Command::Split => commands::split_cmd(&loaded),
        Command::Verify { split } => commands::verify(&loaded, split),
        Command::Shard { .. } => commands::shard_cmd(&loaded),
        Command::Schedule => commands::schedule_cmd(&loaded),
        Command::SampleDce => commands::sample_dce(&loaded),
        Command::Calibrate => evalcmd::calibrate(&loaded),
        Command::Score { task } => evalcmd::score(&loaded, task),
        Command::Evaluate { task } => evalcmd::evaluate(&loaded, task),
        Command::Report => evalcmd::report(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success; anything else is a
            // validation failure
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
