use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{ClassifierChoice, FileConfig, RunConfig};
use error::CliError;

const EXIT_CODES: &str = "Exit codes:
  0  success
  2  configuration error (bad flag, config key or value)
  3  data error (unreadable or malformed registry, taxonomy or evidence; too few samples)
  4  training error (classifier could not be fitted)

Errors are printed to stderr as a JSON object:
  {\"error\": {\"code\": 3, \"kind\": \"data\", \"message\": \"...\"}}

Artifacts in the output directory are overwritten by later runs.";

#[derive(Parser, Debug)]
#[command(name = "ptmcat", version)]
#[command(about = "Classify pre-trained models by pipeline tag and map them to SE tasks")]
#[command(after_help = EXIT_CODES)]
struct Cli {
    /// Flat TOML file with run settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Registry export (CSV or JSON lines); the bundled fixture is used when absent
    #[arg(long, global = true, value_name = "PATH")]
    registry: Option<PathBuf>,

    /// Directory for artifacts
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Seed for fold assignment and the SVC solver
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct FilterArgs {
    /// How the support and download conditions combine: AND or OR
    #[arg(long)]
    combine: Option<String>,
    /// Support threshold; defaults to the median per-tag support
    #[arg(long)]
    alpha: Option<f64>,
    /// Download threshold; defaults to the mean download count
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// cnb, svc or both
    #[arg(long)]
    classifier: Option<String>,
    /// Minimum document frequency of a vocabulary term
    #[arg(long)]
    min_df: Option<usize>,
    /// Stem tokens with the Snowball English stemmer
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    stemming: Option<bool>,
    /// CNB additive smoothing
    #[arg(long)]
    smoothing: Option<f64>,
    /// L1-normalize CNB weight rows
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize_weights: Option<bool>,
    /// SVC regularization constant
    #[arg(long)]
    c: Option<f64>,
    /// SVC solver budget in passes over the training set
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct MatchArgs {
    /// Minimum name similarity
    #[arg(long)]
    threshold: Option<f64>,
    /// Require similarity strictly above the threshold
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
}

#[derive(Args, Debug, Default)]
struct EvidenceArgs {
    /// Taxonomy JSON; the bundled taxonomy is used when absent
    #[arg(long, value_name = "PATH")]
    taxonomy: Option<PathBuf>,
    /// Evidence JSON lines; the bundled evidence is used when absent
    #[arg(long, value_name = "PATH")]
    evidence: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a registry export and write it back as normalized JSON lines
    Ingest {
        /// Abort on the first malformed row
        #[arg(long)]
        strict_rows: bool,
        /// CSV field delimiter
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Drop incomplete and low-signal records; writes filter_report.{json,txt}
    Filter {
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Fit features and classifiers on the filtered registry
    Train {
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Stratified k-fold cross-validation; writes cv_report_*.json and cv_table.txt
    Evaluate {
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Number of folds
        #[arg(long)]
        k: Option<usize>,
        /// weighted, macro or micro
        #[arg(long)]
        averaging: Option<String>,
    },
    /// Find registry models named like a PTM and map their tags to a task
    Map {
        /// PTM name as it appears in the literature
        #[arg(long)]
        ptm: String,
        /// Task the PTM was used for
        #[arg(long)]
        task: String,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Print PTM | pipeline tag | macro tasks rows
    Explain {
        /// PTM names; defaults to BERT, RoBERTa and T5
        #[arg(long)]
        ptm: Vec<String>,
        /// Print JSON instead of text rows
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        matching: MatchArgs,
        #[command(flatten)]
        evidence: EvidenceArgs,
    },
    /// Print ids of included evidence records matching the literature query
    Screen {
        #[command(flatten)]
        evidence: EvidenceArgs,
    },
}

fn parse_opt<T: std::str::FromStr<Err = String>>(key: &str, v: Option<String>) -> Result<Option<T>, CliError> {
    v.map(|s| s.parse().map_err(|e: String| CliError::Config(format!("--{key}: {e}"))))
        .transpose()
}

impl FilterArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(c) = parse_opt("combine", self.combine)? {
            cfg.combine = c;
        }
        cfg.alpha = self.alpha.or(cfg.alpha);
        cfg.beta = self.beta.or(cfg.beta);
        Ok(())
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(c) = parse_opt::<ClassifierChoice>("classifier", self.classifier)? {
            cfg.classifier = c;
        }
        cfg.min_df = self.min_df.unwrap_or(cfg.min_df);
        cfg.stemming = self.stemming.unwrap_or(cfg.stemming);
        cfg.smoothing = self.smoothing.unwrap_or(cfg.smoothing);
        cfg.normalize_weights = self.normalize_weights.unwrap_or(cfg.normalize_weights);
        cfg.c = self.c.unwrap_or(cfg.c);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        Ok(())
    }
}

impl MatchArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.threshold = self.threshold.unwrap_or(cfg.threshold);
        cfg.strict = self.strict.unwrap_or(cfg.strict);
    }
}

impl EvidenceArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.taxonomy = self.taxonomy.or(cfg.taxonomy.take());
        cfg.evidence = self.evidence.or(cfg.evidence.take());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::from_file(file)?;
    cfg.registry = cli.registry.or(cfg.registry);
    cfg.out_dir = cli.out_dir.unwrap_or(cfg.out_dir);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);

    match cli.command {
        Command::Ingest { strict_rows, delimiter } => {
            cfg.validate()?;
            let delimiter = u8::try_from(delimiter)
                .ok()
                .filter(u8::is_ascii)
                .ok_or_else(|| CliError::Config(format!("--delimiter must be one ASCII character, got {delimiter:?}")))?;
            commands::ingest(&cfg, strict_rows, delimiter)
        }
        Command::Filter { filter } => {
            filter.apply(&mut cfg)?;
            cfg.validate()?;
            commands::filter(&cfg)
        }
        Command::Train { filter, model } => {
            filter.apply(&mut cfg)?;
            model.apply(&mut cfg)?;
            cfg.validate()?;
            commands::train(&cfg)
        }
        Command::Evaluate { filter, model, k, averaging } => {
            filter.apply(&mut cfg)?;
            model.apply(&mut cfg)?;
            cfg.k = k.unwrap_or(cfg.k);
            if let Some(a) = parse_opt("averaging", averaging)? {
                cfg.averaging = a;
            }
            cfg.validate()?;
            commands::evaluate(&cfg)
        }
        Command::Map { ptm, task, matching } => {
            matching.apply(&mut cfg);
            cfg.validate()?;
            commands::map(&cfg, &ptm, &task)
        }
        Command::Explain { ptm, json, matching, evidence } => {
            matching.apply(&mut cfg);
            evidence.apply(&mut cfg);
            cfg.validate()?;
            let names = if ptm.is_empty() {
                vec!["BERT".to_string(), "RoBERTa".to_string(), "T5".to_string()]
            } else {
                ptm
            };
            commands::explain(&cfg, &names, json)
        }
        Command::Screen { evidence } => {
            evidence.apply(&mut cfg);
            cfg.validate()?;
            commands::screen(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::Config(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::debug!("{err:?}");
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
