use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use toneshift_core::baselines::GbtGrid;
use toneshift_core::corpus::{ingest, IngestOptions};
use toneshift_core::embed::{EmbeddingCache, Pooling};
use toneshift_core::jsonl::{read_json, write_json};
use toneshift_core::pipeline::{
    baselines_stage, embed_stage, evaluate_stage, export_plots_stage, run_pipeline, score_stage, select_stage, split_stage,
    train_stage, BaselineKind, Features, PipelineConfig, ProviderKind, ProviderSpec,
};
use toneshift_core::regressor::ModelConfig;
use toneshift_core::serve::PredictService;
use toneshift_core::synth::synthetic_corpus;
use toneshift_core::tone::VaderTone;
use toneshift_core::train::{GridSpec, LossKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "toneshift", version, about = "Predict the tone of a thread author's final reply")]
pub struct Cli {
    /// Seed for splits, initialisation, dropout and tree sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline config (JSON); its values are the defaults for every subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse forum dumps into the canonical corpus.
    Ingest {
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long = "subreddit")]
        subreddits: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct threads and cut author segments.
    Select {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24.0)]
        max_gap_hours: f64,
        /// Selection report; defaults to selection.json beside --out.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fill message and target tones.
    Score {
        #[arg(long)]
        segments: PathBuf,
        /// Defaults to <segments>.scored.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed every message into the cache.
    Embed {
        #[arg(long)]
        segments: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        cache: PathBuf,
        /// Defaults to embed.json beside the cache.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Stratified train/val/test split by target bin.
    Split {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep one community only (per-community models).
        #[arg(long)]
        subreddit: Option<String>,
    },
    /// Train one configuration.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        training: TrainArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train every configuration of a grid and keep the best.
    Gridsearch {
        #[command(flatten)]
        data: DataArgs,
        /// Grid file (JSON); defaults to the config's grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        training: TrainArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Baseline predictions for the test part.
    Baselines {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "unchanged,mean,last,gbt")]
        which: Vec<BaselineKind>,
        /// Search the full tree grid instead of the configured parameters.
        #[arg(long)]
        gbt_full_grid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the model and baselines on the test part.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        baselines: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Density grids and scatter samples as CSV.
    ExportPlots {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n_scatter: Option<usize>,
    },
    /// Serve /v1/predict and /v1/health.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Every stage in order, resuming from unchanged outputs.
    RunPipeline {
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long)]
        subreddit: Option<String>,
    },
    /// Write a synthetic forum dump.
    Synth {
        #[arg(long, default_value_t = 50)]
        threads: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[arg(long)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub hash_seed: Option<u64>,
    #[arg(long, value_parser = parse_pooling)]
    pub pooling: Option<Pooling>,
    /// Encoder assets directory.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    match s {
        "first_token" | "cls" => Ok(Pooling::FirstToken),
        "mean" => Ok(Pooling::Mean),
        _ => Err(format!("unknown pooling {s:?}")),
    }
}

impl ProviderArgs {
    fn spec(&self, base: &ProviderSpec) -> ProviderSpec {
        ProviderSpec {
            kind: self.provider.unwrap_or(base.kind),
            hash_seed: self.hash_seed.unwrap_or(base.hash_seed),
            pooling: self.pooling.unwrap_or(base.pooling),
            model_dir: self.model_dir.clone().or_else(|| base.model_dir.clone()),
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub fc_out: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub bidirectional: bool,
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown loss {s:?}"))
}

impl TrainArgs {
    fn apply(&self, mut tc: TrainConfig) -> TrainConfig {
        if let Some(l) = self.loss {
            tc.loss = l;
        }
        if let Some(e) = self.epochs {
            tc.max_epochs = e;
        }
        if let Some(p) = self.patience {
            tc.patience = p;
        }
        if let Some(b) = self.bins {
            tc.n_bins = b;
        }
        tc
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &cli.config {
        Some(p) => read_json(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn features(data: &DataArgs, cfg: &PipelineConfig) -> Result<Features> {
    let provider = data.provider.spec(&cfg.provider).build()?;
    Features::new(provider, data.cache.as_deref()).map_err(anyhow::Error::from_boxed)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

macro_rules! boxed {
    ($e:expr) => {
        $e.map_err(anyhow::Error::from_boxed)
    };
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { inputs, subreddits, out } => {
            let r = ingest(&IngestOptions { inputs, subreddits, out })?;
            println!(
                "{} records ({} posts, {} comments); {} malformed, {} duplicate, {} orphan comments",
                r.records_parsed, r.posts, r.comments, r.malformed_lines, r.duplicate_ids, r.orphan_comments
            );
        }
        Command::Select { corpus, out, max_gap_hours, report } => {
            let report_path = report.unwrap_or_else(|| sibling(&out, "selection.json"));
            let secs = (max_gap_hours * 3600.0).round() as i64;
            let r = boxed!(select_stage(&corpus, &out, &report_path, secs))?;
            println!("{} segments from {} threads; rejected {:?}", r.segments, r.threads_considered, r.rejected);
        }
        Command::Score { segments, out } => {
            let out = out.unwrap_or_else(|| segments.with_extension("scored.jsonl"));
            let n = boxed!(score_stage(&segments, &out, &VaderTone::default()))?;
            println!("scored {n} segments into {}", out.display());
        }
        Command::Embed { segments, provider, cache, summary } => {
            let p = provider.spec(&cfg.provider).build()?;
            let summary = summary.unwrap_or_else(|| sibling(&cache, "embed.json"));
            let s = boxed!(embed_stage(&segments, p.as_ref(), &cache, &summary))?;
            println!("{} distinct texts embedded with {}", s.texts, s.provider_id);
        }
        Command::Split { segments, out, subreddit } => {
            let tc = cfg.train_config();
            let sub = subreddit.or(cfg.subreddit.clone());
            let s = boxed!(split_stage(&segments, sub.as_deref(), cfg.split_ratios, cfg.seed, tc.n_bins, &out))?;
            println!("split {} segments", s.assignment.len());
        }
        Command::Train { data, model, training, out_dir } => {
            let base = ModelConfig::best();
            let config = ModelConfig::new(
                model.fc_out.unwrap_or(base.fc_out),
                model.layers.unwrap_or(base.num_layers),
                model.bidirectional,
                model.dropout.unwrap_or(base.dropout),
            );
            config.validate()?;
            let f = features(&data, &cfg)?;
            let tc = training.apply(cfg.train_config());
            let s = boxed!(train_stage(&data.segments, &data.split, &f, &GridSpec::singleton(config), &tc, &out_dir))?;
            println!("trained {} on {} sequences: {}", s.best, s.train, s.model_id);
        }
        Command::Gridsearch { data, grid, training, out_dir } => {
            let grid: GridSpec = match grid {
                Some(p) => read_json(&p).with_context(|| format!("reading grid {}", p.display()))?,
                None => cfg.grid.clone(),
            };
            let f = features(&data, &cfg)?;
            let tc = training.apply(cfg.train_config());
            let s = boxed!(train_stage(&data.segments, &data.split, &f, &grid, &tc, &out_dir))?;
            println!("best of {} configs: {} ({})", s.configs, s.best, s.model_id);
        }
        Command::Baselines { data, which, gbt_full_grid, out } => {
            let mut cfg = cfg;
            if gbt_full_grid {
                cfg.gbt_grid = Some(GbtGrid::default());
            }
            let needs_features = which.contains(&BaselineKind::Gbt);
            let f = if needs_features { Some(features(&data, &cfg)?) } else { None };
            let gbt_out = sibling(&out, "gbt.json");
            let r = boxed!(baselines_stage(
                &data.segments,
                &data.split,
                &which,
                f.as_ref(),
                &cfg.gbt_candidates(),
                &out,
                needs_features.then_some(gbt_out.as_path()),
            ))?;
            println!("baseline predictions for {} test segments", r.len());
        }
        Command::Evaluate { data, checkpoint, baselines, out_dir } => {
            let f = features(&data, &cfg)?;
            boxed!(evaluate_stage(&data.segments, &data.split, &checkpoint, baselines.as_deref(), &f, &out_dir))?;
            print!("{}", std::fs::read_to_string(out_dir.join("report.txt"))?);
        }
        Command::ExportPlots { segments, split, predictions, out_dir, n_scatter } => {
            let w = boxed!(export_plots_stage(
                &segments,
                split.as_deref(),
                &predictions,
                &out_dir,
                n_scatter.unwrap_or(cfg.n_scatter),
                cfg.seed,
            ))?;
            println!("wrote {} plot grids to {}", w.len(), out_dir.display());
        }
        Command::Serve { checkpoint, port, host, provider, cache } => {
            let spec = provider.spec(&cfg.provider);
            let p = spec.build()?;
            let cache = match cache {
                Some(c) => Some(Arc::new(EmbeddingCache::open(&c, p.dim())?)),
                None => None,
            };
            let mut svc = PredictService::new(Arc::new(VaderTone::default()), p, cache);
            if let Some(ck) = checkpoint {
                svc = svc.with_checkpoint(&ck);
            }
            let h = svc.health();
            if !h.reasons.is_empty() {
                log::warn!("starting degraded: {}", h.reasons.join("; "));
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(crate::server::serve(Arc::new(svc), addr))?;
        }
        Command::RunPipeline { work_dir, inputs, subreddit } => {
            let mut cfg = cfg;
            if let Some(w) = work_dir {
                cfg.work_dir = w;
            }
            if !inputs.is_empty() {
                cfg.inputs = inputs;
            }
            if subreddit.is_some() {
                cfg.subreddit = subreddit;
            }
            if cfg.inputs.is_empty() {
                bail!("no inputs: pass --input or set inputs in --config");
            }
            let s = run_pipeline(&cfg)?;
            for (stage, outcome) in &s.stages {
                println!("{stage:<10} {outcome:?}");
            }
            print!("{}", std::fs::read_to_string(&s.report)?);
        }
        Command::Synth { threads, out } => {
            let c = synthetic_corpus(threads, cfg.seed);
            let mut body = c.dump_lines().join("\n");
            body.push('\n');
            if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(d)?;
            }
            std::fs::write(&out, body)?;
            write_json(&sibling(&out, "synth_expected.json"), &c.expected)?;
            println!("{} publications in {} threads", c.publications.len(), threads);
        }
    }
    Ok(())
}
