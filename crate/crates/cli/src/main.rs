use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use phonosem_cli::{exit_code, report, server, stages};
use phonosem_core::behavior::StudyDefinition;
use phonosem_core::config::PipelineConfig;
use phonosem_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "phonosem",
    version,
    about = "Letter-level sound symbolism pipeline"
)]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for stage outputs; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the minimal-pair pseudoword corpus.
    Generate(GenerateArgs),
    /// Collect ratings from every configured rater.
    Rate {
        /// Only run these rater ids.
        #[arg(long = "rater")]
        raters: Vec<String>,
    },
    /// Compute effect sizes, consensus, letter profiles and reliability.
    Analyze {
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit articulatory-feature models and evaluate hypotheses.
    Predict {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze exported forced-choice trials.
    Behavior {
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        participants: Option<PathBuf>,
        /// TSV with `pair_id` and `accuracy` columns for the model-human correlation.
        #[arg(long)]
        llm_pair_accuracy: Option<PathBuf>,
    },
    /// Serve the forced-choice experiment and collect trials.
    ServeStudy {
        #[arg(long)]
        definition: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory with the built experiment UI.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Write a markdown summary of all available stage outputs.
    Report {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Restrict to a contrast such as `e-o`; repeatable.
    #[arg(long = "contrast")]
    contrasts: Vec<String>,
    /// Pairs per contrast, split as evenly as possible between single and double occurrence.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.out_dir {
        cfg.paths.out_dir = d.clone();
    }
    match &cli.command {
        Command::Generate(a) => {
            if !a.contrasts.is_empty() {
                cfg.corpus.contrasts = a.contrasts.clone();
            }
            if let Some(n) = a.pairs {
                if n == 0 {
                    return Err(Error::Config("--pairs must be positive".into()).into());
                }
                cfg.corpus.n_single = n.div_ceil(2);
                cfg.corpus.n_double = n / 2;
                cfg.corpus.min_per_contrast = cfg.corpus.min_per_contrast.min(n);
            }
            if let Some(s) = a.seed {
                cfg.corpus.seed = s;
            }
        }
        Command::Analyze { n_iter, seed } => {
            if let Some(n) = n_iter {
                cfg.effects.n_iter = *n;
            }
            if let Some(s) = seed {
                cfg.effects.seed = *s;
            }
        }
        Command::Predict { seed: Some(s) } => cfg.predict.options.seed = *s,
        Command::Behavior {
            trials,
            participants,
            llm_pair_accuracy,
        } => {
            if trials.is_some() {
                cfg.behavior.trials = trials.clone();
            }
            if participants.is_some() {
                cfg.behavior.participants = participants.clone();
            }
            if llm_pair_accuracy.is_some() {
                cfg.behavior.llm_pair_accuracy = llm_pair_accuracy.clone();
            }
        }
        Command::ServeStudy {
            definition,
            bind,
            log,
            assets,
        } => {
            if definition.is_some() {
                cfg.study.definition = definition.clone();
            }
            if let Some(b) = bind {
                cfg.study.bind = b.clone();
            }
            if log.is_some() {
                cfg.study.log = log.clone();
            }
            if assets.is_some() {
                cfg.study.assets = assets.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    log::debug!("config hash {} seeds {}", cfg.hash(), cfg.seeds());
    match &cli.command {
        Command::Generate(_) => {
            stages::generate(&cfg)?;
        }
        Command::Rate { raters } => {
            stages::rate(&cfg, raters)?;
        }
        Command::Analyze { .. } => {
            stages::analyze(&cfg)?;
        }
        Command::Predict { .. } => {
            stages::predict(&cfg)?;
        }
        Command::Behavior { .. } => {
            stages::behavior(&cfg)?;
        }
        Command::ServeStudy { .. } => {
            let path = cfg.study.definition.clone().ok_or_else(|| {
                Error::Config("serve-study needs --definition or study.definition".into())
            })?;
            let def = StudyDefinition::load(&path)?;
            let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
            runtime.block_on(server::serve(
                def,
                stages::study_log(&cfg),
                cfg.study.assets.clone(),
                &cfg.study.bind,
            ))?;
        }
        Command::Report { output } => {
            let text = report::report(&cfg, output.as_deref())?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
