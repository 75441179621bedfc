//! `fusent`: synthetic corpora, feature pipelines, training, evaluation and
//! baseline comparison driven by one TOML config.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
//! failure. Failures print one `fusent: error: ...` line on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use fusent::config::{ModelKind, RunConfig, DEFAULT_CONFIG_TOML};
use fusent::fsutil::{read_string, write_atomic};
use fusent::pipeline::{self, Modality};
use fusent::synth::{generate, write_corpus, SynthSpec};
use fusent::{Error, ErrorCategory};


#[derive(Parser, Debug)]
#[command(name = "fusent", version, about = "Multimodal sentiment classification with dense late fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus (manifest.csv, video.csv, audio/*.wav).
    Synth {
        /// Synthesis spec (TOML); defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remap labels, split and plan oversampling.
    Prepare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit transformers on the training rows and write feature views.
    Featurize {
        /// Only this modality (text, audio or video); all when omitted.
        modality: Option<Modality>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a model and write its best checkpoint and history.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fused")]
        model: ModelKind,
    },
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fused")]
        model: ModelKind,
        /// Defaults to <work_dir>/models/<model>/ckpt_best.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate a comparison baseline.
    Baseline {
        /// text, audio, video, early or late-simple.
        #[arg(long)]
        which: ModelKind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Markdown table over run directories holding report.json.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// prepare, featurize, train, evaluate, baselines and compare.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the annotated default config.
    Defaults,
}

fn load_config(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = read_string(&p).map_err(|e| Error::Config(e.to_string()))?;
                    SynthSpec::from_toml(&text)?
                }
                None => SynthSpec::default(),
            };
            let corpus = generate(&spec)?;
            let paths = write_corpus(&corpus, &out)?;
            println!("{}", paths.manifest.display());
        }
        Command::Prepare { config } => {
            pipeline::prepare(&load_config(&config)?)?;
        }
        Command::Featurize { modality, config } => {
            let cfg = load_config(&config)?;
            let which = modality.map_or(Modality::ALL.to_vec(), |m| vec![m]);
            pipeline::featurize(&cfg, &which)?;
        }
        Command::Train { config, model } => {
            let cfg = load_config(&config)?;
            let out = pipeline::train_model(&cfg, model)?;
            println!(
                "{model}: best epoch {} of {}, val loss {:.4}",
                out.history.best_epoch,
                out.history.records.len(),
                out.history.best_val_loss
            );
        }
        Command::Evaluate {
            config,
            model,
            checkpoint,
        } => {
            let cfg = load_config(&config)?;
            let r = pipeline::evaluate_model(&cfg, model, checkpoint.as_deref())?;
            println!("{model}: accuracy {:.4}, weighted F1 {:.4}", r.accuracy, r.scores.weighted_f1);
        }
        Command::Baseline { which, config } => {
            if which == ModelKind::Fused {
                return Err(Error::Config("--which names a baseline; use `train` for the fused model".into()));
            }
            let cfg = load_config(&config)?;
            pipeline::train_model(&cfg, which)?;
            let r = pipeline::evaluate_model(&cfg, which, None)?;
            println!("{which}: accuracy {:.4}, weighted F1 {:.4}", r.accuracy, r.scores.weighted_f1);
        }
        Command::Compare { runs, out } => {
            let table = pipeline::compare(&runs)?;
            if let Some(p) = out {
                write_atomic(&p, table.as_bytes())?;
            }
            print!("{table}");
        }
        Command::Run { config } => {
            let summary = pipeline::run_all(&load_config(&config)?)?;
            print!("{}", summary.comparison);
        }
        Command::Defaults => print!("{DEFAULT_CONFIG_TOML}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let help = format!("Run configuration (TOML). Every key is optional; defaults shown:\n\n{DEFAULT_CONFIG_TOML}");
    let parsed = Cli::command()
        .after_long_help(help)
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fusent: error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Data => 2,
                ErrorCategory::Numeric => 3,
            })
        }
    }
}
