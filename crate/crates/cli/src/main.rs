mod backend;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;

/// Sense vocabulary grafting, cloze probing and triple extraction.
///
/// Settings come from built-in defaults, then `--config <file.toml>` (keys
/// named like the flags, with underscores), then flags.
#[derive(Debug, Parser)]
#[command(name = "senselab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file with run settings
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the probe dataset from WordNet and optional WikiData/ConceptNet files
    BuildProbe,
    /// Build pooled sense embeddings from annotations and glosses
    BuildSenses,
    /// Fit the least-squares map into the input-embedding space
    FitMap,
    /// Inject a sense table and check every sense token is atomic
    InjectCheck,
    /// Masked-prediction probe evaluation (TSV)
    Evaluate,
    /// Nearest-neighbour probe baseline over a sense table (TSV)
    KnnEval,
    /// MRR for every head representation and gloss mode
    Ablate,
    /// k-NN results before and after mapping
    Degradation,
    /// Median gold probability, the extraction threshold
    Calibrate,
    /// Extract novel triples from co-hyponym queries
    Extract,
    /// Render metric, ablation, degradation and count files as text tables
    Report {
        files: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildProbe => "build-probe",
            Command::BuildSenses => "build-senses",
            Command::FitMap => "fit-map",
            Command::InjectCheck => "inject-check",
            Command::Evaluate => "evaluate",
            Command::KnnEval => "knn-eval",
            Command::Ablate => "ablate",
            Command::Degradation => "degradation",
            Command::Calibrate => "calibrate",
            Command::Extract => "extract",
            Command::Report { .. } => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = (|| {
        let file = match &cli.config {
            Some(p) => Settings::from_toml(p)?,
            None => Settings::default(),
        };
        let effective = Settings::defaults().overlay(&file).overlay(&cli.settings);
        let files = match &cli.command {
            Command::Report { files } => files.as_slice(),
            _ => &[],
        };
        commands::run(cli.command.name(), &effective, files)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
