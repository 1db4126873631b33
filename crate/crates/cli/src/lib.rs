//! Command-line front end: argument parsing, config layering, and the
//! commands themselves (`perturb`, `annotate`, `select`, `eval`, `report`).

pub mod client;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod service;

use std::path::PathBuf;

use abstain_core::selective::Variant;
use abstain_core::{PerturbationKind, Protocol};
use anyhow::bail;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use manifest::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "abstain", version, about = "Build, label and probe unanswerable visual questions")]
pub struct Cli {
    /// TOML config, or a previous run manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct BackendArgs {
    #[arg(long, global = true, env = "ABSTAIN_WORD_EMBEDDINGS")]
    pub word_embeddings: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTAIN_POS_TAGS")]
    pub pos_tags: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTAIN_LM_SCORES")]
    pub lm_scores: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTAIN_LM_ENDPOINT")]
    pub lm_endpoint: Option<String>,
    #[arg(long, global = true, env = "ABSTAIN_IMAGE_EMBEDDINGS")]
    pub image_embeddings: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTAIN_DETECTIONS")]
    pub detections: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTAIN_MODEL_ENDPOINT")]
    pub model_endpoint: Option<String>,
    #[arg(long, global = true, env = "ABSTAIN_TIMEOUT_SECS")]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate perturbed instances from a corpus.
    Perturb(PerturbArgs),
    /// Labeling workflow.
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    /// Selective prediction heads.
    #[command(subcommand)]
    Select(SelectCmd),
    /// Probe a model under one or more protocols.
    Eval(EvalArgs),
    /// Render a table from eval reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub detection_threshold: Option<f64>,
    #[arg(long)]
    pub object_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only these kinds, e.g. `T-1,I-2`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    /// Turn perturbation records into a task CSV.
    Export {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        perturbations: PathBuf,
        /// JSONL rows `{source_id, kind?, answer}`.
        #[arg(long)]
        baselines: Option<PathBuf>,
        /// JSON array of exemplars shown with every task.
        #[arg(long)]
        exemplars: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a response CSV into JSONL.
    Ingest {
        #[arg(long)]
        responses: PathBuf,
        /// Reject responses to tasks not in this CSV.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Majority-vote labels and analytics.
    Consensus {
        #[arg(long)]
        tasks: PathBuf,
        /// CSV or JSONL.
        #[arg(long)]
        responses: PathBuf,
    },
    /// Serve tasks over HTTP.
    Serve {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct SelectOpts {
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum SelectCmd {
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        opts: SelectOpts,
        #[arg(long)]
        n_answers: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    Calibrate {
        #[arg(long)]
        heads: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        opts: SelectOpts,
    },
    Infer {
        #[arg(long)]
        heads: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long, conflicts_with = "theta")]
        calibration: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// Exemplar pool; defaults to the items themselves.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub protocols: Option<Vec<Protocol>>,
    #[arg(long)]
    pub n_answerable: Option<usize>,
    #[arg(long)]
    pub n_unanswerable: Option<usize>,
    #[arg(long)]
    pub shot_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `echo`, `empty`, `fixture:<path>` or `http`.
    #[arg(long)]
    pub client: Option<String>,
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files or directories containing `*.report.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

pub fn parse_kind(code: &str) -> anyhow::Result<PerturbationKind> {
    let c = code.trim();
    PerturbationKind::ALL
        .into_iter()
        .find(|k| k.code().eq_ignore_ascii_case(c) || k.code().replace('-', "").eq_ignore_ascii_case(c))
        .ok_or_else(|| anyhow::anyhow!("unknown perturbation kind {c:?} (expected T-1, T-2, I-1, I-2 or I-3)"))
}

impl Cli {
    /// Defaults, then the config file, then env/flags.
    pub fn base_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.paths.output, self.out.clone());
        let b = &self.backends;
        let c = &mut cfg.backends;
        set_opt(&mut c.word_embeddings, b.word_embeddings.clone());
        set_opt(&mut c.pos_tags, b.pos_tags.clone());
        set_opt(&mut c.lm_scores, b.lm_scores.clone());
        set_opt(&mut c.lm_endpoint, b.lm_endpoint.clone());
        set_opt(&mut c.image_embeddings, b.image_embeddings.clone());
        set_opt(&mut c.detections, b.detections.clone());
        set_opt(&mut c.model_endpoint, b.model_endpoint.clone());
        set(&mut c.timeout_secs, b.timeout_secs);
        Ok(cfg)
    }

    /// Fully resolved config for the selected command.
    pub fn effective_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.base_config()?;
        match &self.command {
            Command::Perturb(a) => {
                set_opt(&mut cfg.paths.corpus, a.corpus.clone());
                set(&mut cfg.paths.images, a.images.clone());
                let p = &mut cfg.perturb;
                set(&mut p.epsilon, a.epsilon);
                set(&mut p.neighbors, a.neighbors);
                set(&mut p.alpha, a.alpha);
                set(&mut p.top_n, a.top_n);
                set(&mut p.detection_threshold, a.detection_threshold);
                set(&mut p.object_cap, a.object_cap);
                set(&mut p.seed, a.seed);
                if let Some(kinds) = &a.kinds {
                    let kinds = kinds.iter().map(|k| parse_kind(k)).collect::<anyhow::Result<Vec<_>>>()?;
                    p.word_replace = kinds.contains(&PerturbationKind::WordReplace);
                    p.negation = kinds.contains(&PerturbationKind::Negation);
                    p.image_replace = kinds.contains(&PerturbationKind::ImageReplace);
                    p.object_mask = kinds.contains(&PerturbationKind::ObjectMask);
                    p.copy_move = kinds.contains(&PerturbationKind::CopyMove);
                }
            }
            Command::Annotate(AnnotateCmd::Export { corpus, seed, .. }) => {
                set_opt(&mut cfg.paths.corpus, corpus.clone());
                set(&mut cfg.annotate.seed, *seed);
            }
            Command::Annotate(AnnotateCmd::Serve { addr, .. }) => set(&mut cfg.annotate.addr, addr.clone()),
            Command::Annotate(_) => {}
            Command::Select(cmd) => {
                let s = &mut cfg.select;
                match cmd {
                    SelectCmd::Fit { opts, n_answers, epochs, learning_rate, seed, .. } => {
                        set(&mut s.variant, opts.variant);
                        set(&mut s.grid, opts.grid.clone());
                        set(&mut s.n_answers, *n_answers);
                        set(&mut s.epochs, *epochs);
                        set(&mut s.learning_rate, *learning_rate);
                        set(&mut s.seed, *seed);
                    }
                    SelectCmd::Calibrate { opts, .. } => {
                        set(&mut s.variant, opts.variant);
                        set(&mut s.grid, opts.grid.clone());
                    }
                    SelectCmd::Infer { theta, .. } => set_opt(&mut s.theta, *theta),
                }
            }
            Command::Eval(a) => {
                let e = &mut cfg.eval;
                set(&mut e.protocols, a.protocols.clone());
                set(&mut e.n_answerable, a.n_answerable);
                set(&mut e.n_unanswerable, a.n_unanswerable);
                set(&mut e.shot_seed, a.shot_seed);
                set(&mut e.seed, a.seed);
                set(&mut e.client, a.client.clone());
                set_opt(&mut e.model_name, a.model_name.clone());
                set(&mut e.max_in_flight, a.max_in_flight);
            }
            Command::Report(_) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Execute the parsed command. Human-readable summaries go to stdout.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = cli.effective_config()?;
    let out = OutputDir::new(&cfg.paths.output, cli.force);
    match &cli.command {
        Command::Perturb(_) => {
            let s = commands::perturb::run(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Annotate(cmd) => match cmd {
            AnnotateCmd::Export { perturbations, baselines, exemplars, .. } => {
                let r = commands::annotate::export(&cfg, &out, perturbations, baselines.as_deref(), exemplars.as_deref())?;
                println!("{} task(s), {} rejected record(s)", r.tasks, r.rejected.len());
            }
            AnnotateCmd::Ingest { responses, tasks } => {
                let r = commands::annotate::ingest(&cfg, &out, responses, tasks.as_deref())?;
                println!(
                    "{} accepted, {} rejected, {} for unknown tasks",
                    r.accepted,
                    r.rejected.len(),
                    r.unknown_tasks.len()
                );
            }
            AnnotateCmd::Consensus { tasks, responses } => {
                let (s, _) = commands::annotate::consensus(&cfg, &out, tasks, responses)?;
                println!("{}", serde_json::to_string_pretty(&s)?);
            }
            AnnotateCmd::Serve { tasks, .. } => commands::annotate::serve(&cfg, &out, tasks)?,
        },
        Command::Select(cmd) => match cmd {
            SelectCmd::Fit { features, labels, .. } => {
                let r = commands::select::fit(&cfg, &out, features, labels)?;
                println!("{}", serde_json::to_string_pretty(&r)?);
            }
            SelectCmd::Calibrate { heads, features, labels, .. } => {
                let c = commands::select::calibrate_cmd(&cfg, &out, heads, features, labels)?;
                println!("theta = {} (accuracy {:.4})", c.theta, c.accuracy);
            }
            SelectCmd::Infer { heads, features, calibration, .. } => {
                let rows = commands::select::infer(&cfg, &out, heads, features, calibration.as_deref())?;
                let abstained = rows.iter().filter(|r| r.result == abstain_core::selective::Prediction::Abstain).count();
                println!("{} prediction(s), {abstained} abstention(s)", rows.len());
            }
        },
        Command::Eval(a) => {
            let runs = commands::eval::run(&cfg, &out, &a.items, a.pool.as_deref())?;
            print!("{}", abstain_core::eval::render_table(&runs));
        }
        Command::Report(a) => {
            if a.runs.is_empty() {
                bail!("no inputs");
            }
            print!("{}", commands::eval::report(&a.runs)?);
        }
    }
    Ok(())
}
