//! `flowrec`: build the knowledge graph, generate paths, train, evaluate,
//! recommend and serve from the command line.

mod manifest;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use flowrec_core::evaluation::{run_experiment, EvalConfig};
use flowrec_core::pathgen::{apply_dedup, generate_paths, write_corpus, write_excluded_sidecar, Dedup, Strategy};
use flowrec_core::pipeline::fit;
use flowrec_core::provenance::read_repository;
use flowrec_core::recommender::{recommend_next, PartialWorkflow};
use flowrec_core::seqmodel::{Model, NegativeSampling, TrainConfig};
use flowrec_core::skg::{build_skg, TransitionMode};
use flowrec_server::AppState;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "flowrec", version, about = "Next-service recommendation for scientific workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the service knowledge graph and write it as tab-separated relationships.
    BuildKg {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate composition paths, one per line.
    GenPaths {
        #[arg(long)]
        repo: PathBuf,
        #[command(flatten)]
        paths: PathArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output corpus; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the excluded set of every path, aligned line by line.
        #[arg(long)]
        excluded: Option<PathBuf>,
    },
    /// Train a model on a repository.
    Train {
        #[arg(long)]
        repo: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hold out part of a repository and report Recall@K, MRR and Diversity@K.
    Evaluate {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10,20")]
        ks: Vec<usize>,
        /// Evaluate this model instead of training one on the training part.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Machine-readable report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank next services for an anchor of a partial workflow.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        /// Partial workflow document (goal, services, edges).
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        anchor: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Static files served for every path the API does not claim.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Idle seconds before a session is dropped.
        #[arg(long, default_value_t = 3600)]
        session_ttl: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    Intra,
    Inter,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Probabilistic,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum DedupArg {
    Keep,
    Remove,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Uniform,
    Frequency,
}

#[derive(Args)]
struct PathArgs {
    #[arg(long, value_enum, default_value = "intra")]
    strategy: StrategyKind,
    /// Maximum walk length in services (inter only).
    #[arg(long, default_value_t = 15)]
    walk_length: usize,
    /// Walks started from every service (inter only).
    #[arg(long, default_value_t = 10)]
    walks_per_service: usize,
    /// Neighbor choice during walks (inter only).
    #[arg(long, value_enum, default_value = "probabilistic")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "keep")]
    dedup: DedupArg,
}

impl PathArgs {
    fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyKind::Intra => Strategy::Intra,
            StrategyKind::Inter => Strategy::Inter {
                walk_length: self.walk_length,
                walks_per_service: self.walks_per_service,
                mode: match self.mode {
                    ModeArg::Probabilistic => TransitionMode::Probabilistic,
                    ModeArg::Uniform => TransitionMode::Uniform,
                },
            },
        }
    }

    fn dedup(&self) -> Dedup {
        match self.dedup {
            DedupArg::Keep => Dedup::Keep,
            DedupArg::Remove => Dedup::Remove,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    paths: PathArgs,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    negative_sampling: SamplingArg,
    /// Stop once the mean epoch objective changes by less than this fraction.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            dim: self.dim,
            max_epochs: self.epochs,
            negatives: self.negatives,
            tolerance: self.tolerance,
            seed: self.seed,
            negative_sampling: match self.negative_sampling {
                SamplingArg::Uniform => NegativeSampling::Uniform,
                SamplingArg::Frequency => NegativeSampling::Frequency,
            },
            strategy: self.paths.strategy(),
            dedup: self.paths.dedup(),
            ..TrainConfig::default()
        }
    }
}

/// Walk flags only make sense with the inter strategy.
fn check_strategy_flags(sub: &ArgMatches) -> std::result::Result<(), String> {
    let intra = matches!(sub.get_one::<StrategyKind>("strategy"), Some(StrategyKind::Intra));
    if !intra {
        return Ok(());
    }
    for flag in ["walk_length", "walks_per_service", "mode"] {
        if sub.value_source(flag) == Some(ValueSource::CommandLine) {
            return Err(format!(
                "--{} requires --strategy inter",
                flag.replace('_', "-")
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOWREC_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let matches = Cli::command().get_matches();
    if let Some((name, sub)) = matches.subcommand() {
        if sub.try_get_one::<StrategyKind>("strategy").is_ok() {
            if let Err(msg) = check_strategy_flags(sub) {
                let mut cmd = Cli::command();
                let sub_cmd = cmd.find_subcommand_mut(name).expect("parsed subcommand exists");
                sub_cmd.error(ErrorKind::ArgumentConflict, msg).exit();
            }
        }
    }
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_repo(path: &Path) -> Result<flowrec_core::provenance::Repository> {
    read_repository(path).with_context(|| format!("cannot read repository {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildKg { repo, out } => {
            let mut manifest = Manifest::start("build-kg", serde_json::json!({}), None);
            let skg = build_skg(&load_repo(&repo)?);
            write_output(&out, &skg.dump())?;
            log::info!("{} relationships", skg.relationships().len());
            manifest.input(&repo)?;
            manifest.finish(&out)
        }
        Command::GenPaths {
            repo,
            paths,
            seed,
            out,
            excluded,
        } => {
            let strategy = paths.strategy();
            let dedup = paths.dedup();
            let config = serde_json::json!({ "strategy": strategy, "dedup": dedup });
            let mut manifest = Manifest::start("gen-paths", config, Some(seed));
            let skg = build_skg(&load_repo(&repo)?);
            let generated = apply_dedup(generate_paths(&skg, strategy, seed)?, dedup);
            log::info!("{} paths", generated.len());
            let corpus = write_corpus(&generated);
            if let Some(path) = &excluded {
                write_output(path, &write_excluded_sidecar(&skg, &generated)?)?;
            }
            match out {
                Some(path) => {
                    write_output(&path, &corpus)?;
                    manifest.input(&repo)?;
                    manifest.finish(&path)
                }
                None => {
                    std::io::stdout().write_all(corpus.as_bytes())?;
                    Ok(())
                }
            }
        }
        Command::Train { repo, train, out } => {
            let config = train.config();
            let mut manifest = Manifest::start("train", serde_json::to_value(&config)?, Some(config.seed));
            let fitted = fit(&load_repo(&repo)?, &config)?;
            fitted.model.save(&out).with_context(|| format!("cannot write {}", out.display()))?;
            let obj = &fitted.report.epoch_objectives;
            println!(
                "trained on {} paths ({} instances) for {} epochs, final objective {:.6}{}",
                fitted.paths,
                fitted.report.instances,
                obj.len(),
                obj.last().copied().unwrap_or(f64::NAN),
                if fitted.report.converged { ", converged" } else { "" }
            );
            manifest.input(&repo)?;
            manifest.finish(&out)
        }
        Command::Evaluate {
            repo,
            train_fraction,
            ks,
            model,
            train,
            out,
        } => {
            let train_config = train.config();
            let eval_config = EvalConfig {
                train_fraction,
                seed: train.seed,
                ks,
            };
            let config = serde_json::json!({ "train": train_config, "evaluation": eval_config });
            let mut manifest = Manifest::start("evaluate", config, Some(train.seed));
            let loaded = model.as_deref().map(load_model).transpose()?;
            let (report, _) = run_experiment(&load_repo(&repo)?, &train_config, &eval_config, loaded.as_ref())?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                write_output(&path, &report.to_json())?;
                manifest.input(&repo)?;
                if let Some(m) = &model {
                    manifest.input(m)?;
                }
                manifest.finish(&path)?;
            }
            Ok(())
        }
        Command::Recommend {
            model,
            workflow,
            anchor,
            top_k,
            json,
        } => {
            let model = load_model(&model)?;
            let text = std::fs::read(&workflow).with_context(|| format!("cannot read {}", workflow.display()))?;
            let pw: PartialWorkflow = serde_json::from_slice(&text)
                .with_context(|| format!("malformed partial workflow {}", workflow.display()))?;
            pw.validate()?;
            let rec = recommend_next(&model, &pw, &anchor, top_k)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rec)?);
            } else {
                println!("{:>4}  {:<24} {:<32} {:>12}", "rank", "service", "name", "probability");
                for (i, c) in rec.candidates.iter().enumerate() {
                    println!("{:>4}  {:<24} {:<32} {:>12.6}", i + 1, c.service_id, c.name, c.probability);
                }
            }
            Ok(())
        }
        Command::Serve {
            model,
            port,
            bind,
            ui_dir,
            session_ttl,
        } => {
            let model = load_model(&model)?;
            let state = AppState::with_ttl(model, Duration::from_secs(session_ttl));
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(flowrec_server::serve(state, SocketAddr::new(bind, port), ui_dir))?;
            Ok(())
        }
    }
}
