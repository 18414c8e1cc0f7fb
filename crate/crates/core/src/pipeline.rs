//! End-to-end experiment: stage functions over explicit paths, and a
//! checksummed, resumable runner that chains them in a work directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fit_gbt_grid, pool_features, predict_gbt, GbtGrid, GbtParams, GbtRun, Heuristic, GBT};
use crate::corpus::{build_threads, ingest, read_corpus, IngestOptions};
use crate::dataset::{score_segments, Featurizer};
use crate::embed::{text_hash, DistilBert, EmbeddingCache, EmbeddingProvider, HashEmbedder, Pooling};
use crate::eval::{characterize, evaluate, export_prediction_plots, export_tone_plots, render_profiles, EvalRecord, MODEL};
use crate::jsonl::{read_json, read_jsonl, sha256_file, sha256_hex, write_atomic, write_json, write_jsonl};
use crate::regressor::{load_checkpoint, predict_batch, save_checkpoint, CheckpointMeta, FeatureSequence};
use crate::threadsel::{select_all, SelectionReport, ThreadSegment, SEQ_CAP};
use crate::tone::{lexicon_checksum, ToneScorer, VaderTone};
use crate::train::{compute_bin_weights, grid_search, stratified_split, GridSpec, Part, SplitSpec, TrainConfig};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} failed")]
    Stage {
        stage: String,
        #[source]
        source: BoxError,
    },
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

fn at<E: Into<BoxError>>(stage: &str) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::Stage {
        stage: stage.to_string(),
        source: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Hash,
    Transformer,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hash" => Ok(ProviderKind::Hash),
            "transformer" => Ok(ProviderKind::Transformer),
            _ => Err(format!("unknown provider {s:?}; expected hash or transformer")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub hash_seed: u64,
    pub pooling: Pooling,
    /// Encoder assets; falls back to the environment variable.
    pub model_dir: Option<PathBuf>,
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, crate::embed::EmbedError> {
        Ok(match self.kind {
            ProviderKind::Hash => Arc::new(HashEmbedder::new(self.hash_seed)),
            ProviderKind::Transformer => Arc::new(match &self.model_dir {
                Some(d) => DistilBert::load(d, self.pooling)?,
                None => DistilBert::from_env(self.pooling)?,
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Unchanged,
    Mean,
    Last,
    Gbt,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::Unchanged, BaselineKind::Mean, BaselineKind::Last, BaselineKind::Gbt];

    fn heuristic(self) -> Option<Heuristic> {
        match self {
            BaselineKind::Unchanged => Some(Heuristic::Unchanged),
            BaselineKind::Mean => Some(Heuristic::Mean),
            BaselineKind::Last => Some(Heuristic::Last),
            BaselineKind::Gbt => None,
        }
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unchanged" => Ok(BaselineKind::Unchanged),
            "mean" => Ok(BaselineKind::Mean),
            "last" => Ok(BaselineKind::Last),
            "gbt" | "xgb" => Ok(BaselineKind::Gbt),
            other => Err(format!("unknown baseline {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    /// Dump files or glob patterns.
    pub inputs: Vec<String>,
    /// Communities kept at ingestion; empty keeps all.
    pub subreddits: Vec<String>,
    /// Restricts the dataset to one community before splitting.
    pub subreddit: Option<String>,
    pub max_gap_hours: f64,
    pub provider: ProviderSpec,
    /// Defaults to `embeddings.bin` in the work directory.
    pub cache: Option<PathBuf>,
    /// Overrides the seeds in `train` and `gbt`.
    pub seed: u64,
    pub split_ratios: [f64; 3],
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub baselines: Vec<BaselineKind>,
    pub gbt: GbtParams,
    /// Searched instead of `gbt` when present.
    pub gbt_grid: Option<GbtGrid>,
    pub n_scatter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            work_dir: PathBuf::from("work"),
            inputs: Vec::new(),
            subreddits: Vec::new(),
            subreddit: None,
            max_gap_hours: 24.0,
            provider: ProviderSpec::default(),
            cache: None,
            seed: 0,
            split_ratios: [0.8, 0.1, 0.1],
            train: TrainConfig::default(),
            grid: GridSpec::default(),
            baselines: BaselineKind::ALL.to_vec(),
            gbt: GbtParams::best(),
            gbt_grid: None,
            n_scatter: 2000,
        }
    }
}

impl PipelineConfig {
    pub fn max_gap_secs(&self) -> i64 {
        (self.max_gap_hours * 3600.0).round() as i64
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn gbt_candidates(&self) -> Vec<GbtParams> {
        let base = GbtParams { seed: self.seed, ..self.gbt };
        match &self.gbt_grid {
            Some(g) => g.params(base),
            None => vec![base],
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.work_dir.join("embeddings.bin"))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.inputs.is_empty() {
            return Err(PipelineError::Config("no inputs".into()));
        }
        if self.max_gap_hours.is_nan() || self.max_gap_hours <= 0.0 {
            return Err(PipelineError::Config("max_gap_hours must be positive".into()));
        }
        if self.split_ratios.iter().any(|r| *r < 0.0) || self.split_ratios[0] <= 0.0 {
            return Err(PipelineError::Config("split ratios must be nonnegative with a nonempty train part".into()));
        }
        self.train_config()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

// ---- stages over explicit paths ----

pub fn select_stage(corpus: &Path, out: &Path, report_out: &Path, max_gap_secs: i64) -> Result<SelectionReport, BoxError> {
    let forest = build_threads(read_corpus(corpus)?);
    let (segments, report) = select_all(&forest, max_gap_secs);
    log::info!(
        "selected {} segments from {} threads ({} truncated)",
        report.segments,
        report.threads_considered,
        report.truncated
    );
    write_jsonl(out, &segments)?;
    write_json(report_out, &report)?;
    Ok(report)
}

pub fn score_stage(segments: &Path, out: &Path, scorer: &dyn ToneScorer) -> Result<usize, BoxError> {
    let mut segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    score_segments(&mut segs, scorer);
    write_jsonl(out, &segs)?;
    Ok(segs.len())
}

/// What an embedding pass covered; deterministic, so it stands in for the
/// cache file in checksums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub provider_id: String,
    pub dim: usize,
    pub texts: usize,
    pub texts_sha256: String,
}

pub fn embed_stage(segments: &Path, provider: &dyn EmbeddingProvider, cache: &Path, out: &Path) -> Result<EmbedSummary, BoxError> {
    let segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    let cache = EmbeddingCache::open(cache, provider.dim())?;
    let n = Featurizer::new(provider, Some(&cache)).warm(&segs)?;
    let hashes: BTreeSet<[u8; 32]> = segs
        .iter()
        .flat_map(|s| s.messages.iter().take(SEQ_CAP))
        .map(|m| text_hash(&m.text))
        .collect();
    let mut joined = Vec::with_capacity(hashes.len() * 32);
    hashes.iter().for_each(|h| joined.extend_from_slice(h));
    let summary = EmbedSummary {
        provider_id: provider.provider_id().to_string(),
        dim: provider.dim(),
        texts: n,
        texts_sha256: sha256_hex(&joined),
    };
    log::info!("embedded {n} distinct texts with {}; cache {:?}", summary.provider_id, cache.stats());
    write_json(out, &summary)?;
    Ok(summary)
}

fn in_subreddit(seg: &ThreadSegment, subreddit: Option<&str>) -> bool {
    subreddit.is_none_or(|s| seg.subreddit.eq_ignore_ascii_case(s))
}

pub fn split_stage(
    segments: &Path,
    subreddit: Option<&str>,
    ratios: [f64; 3],
    seed: u64,
    n_bins: usize,
    out: &Path,
) -> Result<SplitSpec, BoxError> {
    let segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    let items: Vec<(String, f64)> = segs
        .iter()
        .filter(|s| in_subreddit(s, subreddit))
        .map(|s| {
            s.target
                .emt
                .map(|y| (s.segment_id.clone(), y))
                .ok_or_else(|| format!("segment {} is not scored", s.segment_id))
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("no segments to split".into());
    }
    let split = stratified_split(&items, ratios, seed, n_bins);
    log::info!(
        "split {} segments: train {}, val {}, test {}",
        items.len(),
        split.count(Part::Train),
        split.count(Part::Val),
        split.count(Part::Test)
    );
    write_json(out, &split)?;
    Ok(split)
}

/// Scored segments of one part, in segment-id order.
pub fn part_segments(segments: &[ThreadSegment], split: &SplitSpec, part: Part) -> Vec<ThreadSegment> {
    let mut out: Vec<ThreadSegment> = segments
        .iter()
        .filter(|s| split.part(&s.segment_id) == Some(part))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    out
}

/// Embedding access shared by the model-facing stages.
pub struct Features {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
}

impl Features {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: Option<&Path>) -> Result<Self, BoxError> {
        let cache = match cache {
            Some(p) => Some(EmbeddingCache::open(p, provider.dim())?),
            None => None,
        };
        Ok(Features { provider, cache })
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn build(&self, segs: &[ThreadSegment]) -> Result<Vec<FeatureSequence>, BoxError> {
        Ok(Featurizer::new(self.provider.as_ref(), self.cache.as_ref()).build(segs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_id: String,
    pub best: String,
    pub configs: usize,
    pub train: usize,
    pub val: usize,
}

/// Trains every config of the grid and writes `model.ckpt`, `history.json`
/// and `leaderboard.json` into `out_dir`.
pub fn train_stage(
    segments: &Path,
    split: &Path,
    features: &Features,
    grid: &GridSpec,
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainSummary, BoxError> {
    let segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    let split: SplitSpec = read_json(split)?;
    let train = features.build(&part_segments(&segs, &split, Part::Train))?;
    let val = features.build(&part_segments(&segs, &split, Part::Val))?;
    let targets: Vec<f64> = train.iter().map(|s| s.target).collect();
    let bw = compute_bin_weights(&targets, tc.n_bins)?;
    let configs = grid.configs_with_embed_dim(features.provider().dim());
    log::info!("training {} configs on {} sequences ({} validation)", configs.len(), train.len(), val.len());
    let result = grid_search(&configs, tc, &train, &val, &bw)?;
    let scorer = VaderTone::default();
    let header = save_checkpoint(
        &out_dir.join("model.ckpt"),
        &result.best_model.params,
        CheckpointMeta {
            seed: tc.seed,
            bin_weights: Some(bw),
            provider_id: Some(features.provider().provider_id().to_string()),
            tone_scorer: Some(scorer.scorer_id().to_string()),
            lexicon_sha256: Some(lexicon_checksum()),
        },
    )?;
    write_json(&out_dir.join("history.json"), &result.best_model.history)?;
    write_json(&out_dir.join("leaderboard.json"), &result.leaderboard)?;
    Ok(TrainSummary {
        model_id: header.model_id,
        best: result.best.label(),
        configs: configs.len(),
        train: train.len(),
        val: val.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub segment_id: String,
    pub predictions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtSummary {
    pub params: GbtParams,
    pub n_trees: usize,
    pub best_iteration: usize,
    pub best_val_mse: f64,
    pub runs: Vec<GbtRun>,
}

/// Baseline predictions for the test part. The tree baseline is fitted on
/// the train part with validation early stopping.
pub fn baselines_stage(
    segments: &Path,
    split: &Path,
    which: &[BaselineKind],
    features: Option<&Features>,
    gbt: &[GbtParams],
    out: &Path,
    gbt_out: Option<&Path>,
) -> Result<Vec<BaselineRecord>, BoxError> {
    let segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    let split: SplitSpec = read_json(split)?;
    let test = part_segments(&segs, &split, Part::Test);
    let mut records: Vec<BaselineRecord> = test
        .iter()
        .map(|s| BaselineRecord {
            segment_id: s.segment_id.clone(),
            predictions: which
                .iter()
                .filter_map(|k| k.heuristic())
                .map(|h| (h.name().to_string(), h.predict_segment(s)))
                .collect(),
        })
        .collect();
    if which.contains(&BaselineKind::Gbt) {
        let features = features.ok_or("the tree baseline needs embeddings")?;
        let pooled = |part: Part| -> Result<(Vec<Vec<f64>>, Vec<f64>), BoxError> {
            let seqs = features.build(&part_segments(&segs, &split, part))?;
            let x = seqs.iter().map(pool_features).collect::<Result<Vec<_>, _>>()?;
            Ok((x, seqs.iter().map(|s| s.target).collect()))
        };
        let (tx, ty) = pooled(Part::Train)?;
        let (vx, vy) = pooled(Part::Val)?;
        let (ex, _) = pooled(Part::Test)?;
        log::info!("fitting {} tree configs on {} rows", gbt.len(), tx.len());
        let (model, runs) = fit_gbt_grid(&tx, &ty, &vx, &vy, gbt)?;
        for (r, x) in records.iter_mut().zip(&ex) {
            r.predictions.insert(GBT.to_string(), predict_gbt(&model, x)?);
        }
        if let Some(p) = gbt_out {
            write_json(
                p,
                &GbtSummary {
                    params: model.params,
                    n_trees: model.n_trees(),
                    best_iteration: model.best_iteration,
                    best_val_mse: model.best_val_mse,
                    runs,
                },
            )?;
        }
    }
    write_jsonl(out, &records)?;
    Ok(records)
}

/// Writes `predictions.jsonl`, `report.json`, `report.txt`,
/// `characterization.json` and `characterization.txt` into `out_dir`.
pub fn evaluate_stage(
    segments: &Path,
    split: &Path,
    checkpoint: &Path,
    baselines: Option<&Path>,
    features: &Features,
    out_dir: &Path,
) -> Result<Vec<EvalRecord>, BoxError> {
    let segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    let split: SplitSpec = read_json(split)?;
    let ck = load_checkpoint(checkpoint)?;
    if let Some(p) = &ck.header.provider_id {
        if p != features.provider().provider_id() {
            return Err(format!("checkpoint was trained on {p}, evaluating with {}", features.provider().provider_id()).into());
        }
    }
    let test = part_segments(&segs, &split, Part::Test);
    if test.is_empty() {
        return Err("the test part is empty; use more data or a larger test ratio".into());
    }
    let seqs = features.build(&test)?;
    let model_pred = predict_batch(&ck.params, &seqs)?;
    let base: BTreeMap<String, BTreeMap<String, f64>> = match baselines {
        Some(p) => read_jsonl::<BaselineRecord>(p)?
            .into_iter()
            .map(|r| (r.segment_id, r.predictions))
            .collect(),
        None => BTreeMap::new(),
    };
    let records: Vec<EvalRecord> = test
        .iter()
        .zip(model_pred)
        .map(|(s, y)| {
            let mut predictions = base.get(&s.segment_id).cloned().unwrap_or_default();
            predictions.insert(MODEL.to_string(), y);
            EvalRecord {
                segment_id: s.segment_id.clone(),
                subreddit: s.subreddit.clone(),
                target: s.target.tone(),
                n_messages: s.len(),
                second_last_author_emt: s.second_last_author_emt(),
                predictions,
            }
        })
        .collect();
    let bw = match ck.header.bin_weights.clone() {
        Some(bw) => bw,
        None => {
            let t: Vec<f64> = part_segments(&segs, &split, Part::Train).iter().map(|s| s.target.tone()).collect();
            compute_bin_weights(&t, crate::train::DEFAULT_BINS)?
        }
    };
    let report = evaluate(&records, &bw, MODEL)?;
    write_jsonl(&out_dir.join("predictions.jsonl"), &records)?;
    write_json(&out_dir.join("report.json"), &report)?;
    write_text(&out_dir.join("report.txt"), &report.render())?;
    let used: Vec<ThreadSegment> = segs.into_iter().filter(|s| split.part(&s.segment_id).is_some()).collect();
    let profiles = characterize(&used);
    write_json(&out_dir.join("characterization.json"), &profiles)?;
    write_text(&out_dir.join("characterization.txt"), &render_profiles(&profiles))?;
    Ok(records)
}

/// Density grids and scatter samples for tone pairs and predictions.
pub fn export_plots_stage(
    segments: &Path,
    split: Option<&Path>,
    predictions: &Path,
    dir: &Path,
    n_scatter: usize,
    seed: u64,
) -> Result<Vec<String>, BoxError> {
    let mut segs: Vec<ThreadSegment> = read_jsonl(segments)?;
    if let Some(p) = split {
        let split: SplitSpec = read_json(p)?;
        segs.retain(|s| split.part(&s.segment_id).is_some());
    }
    let records: Vec<EvalRecord> = read_jsonl(predictions)?;
    let mut written = export_tone_plots(dir, &segs, n_scatter, seed)?;
    written.extend(export_prediction_plots(dir, &records, n_scatter, seed)?);
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    use std::io::Write;
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

// ---- resumable runner ----

pub const MANIFEST: &str = "pipeline_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs_sha256: String,
    /// Work-dir relative path to checksum.
    pub outputs: BTreeMap<String, String>,
    pub chain_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub stages: Vec<(String, StageOutcome)>,
    pub report: PathBuf,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    previous: BTreeMap<String, StageRecord>,
    manifest: PipelineManifest,
    outcomes: Vec<(String, StageOutcome)>,
}

impl Runner<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.work_dir.join(rel)
    }

    /// Runs `body` unless the recorded inputs hash matches and every recorded
    /// output still has its checksum. `body` returns work-dir relative outputs.
    fn stage<F>(&mut self, name: &str, params: serde_json::Value, inputs: &[&str], body: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&Self) -> Result<Vec<String>, BoxError>,
    {
        let mut input_sums = BTreeMap::new();
        for rel in inputs {
            input_sums.insert(rel.to_string(), sha256_file(&self.path(rel)).map_err(at(name))?);
        }
        let key = serde_json::json!({ "stage": name, "params": params, "inputs": input_sums });
        let inputs_sha256 = sha256_hex(key.to_string().as_bytes());
        let fresh = self.previous.get(name).is_some_and(|r| {
            r.inputs_sha256 == inputs_sha256
                && r.outputs
                    .iter()
                    .all(|(rel, sum)| sha256_file(&self.path(rel)).is_ok_and(|s| s == *sum))
        });
        let record = if fresh {
            log::info!("{name}: inputs unchanged, skipping");
            self.outcomes.push((name.to_string(), StageOutcome::Skipped));
            self.previous[name].clone()
        } else {
            log::info!("{name}: running");
            let produced = body(self).map_err(at(name))?;
            let mut outputs = BTreeMap::new();
            for rel in produced {
                let sum = sha256_file(&self.path(&rel)).map_err(at(name))?;
                outputs.insert(rel, sum);
            }
            self.outcomes.push((name.to_string(), StageOutcome::Ran));
            let prev = self.manifest.stages.last().map_or("", |r| r.chain_sha256.as_str());
            let chain = serde_json::json!({ "prev": prev, "stage": name, "inputs": inputs_sha256, "outputs": outputs });
            StageRecord {
                stage: name.to_string(),
                inputs_sha256,
                chain_sha256: sha256_hex(chain.to_string().as_bytes()),
                outputs,
            }
        };
        self.manifest.stages.push(record);
        write_json(&self.path(MANIFEST), &self.manifest).map_err(at(name))?;
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// Runs ingest, select, score, embed, split, train, baselines and evaluate
/// in `cfg.work_dir`, skipping stages whose inputs and outputs are unchanged.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    cfg.validate()?;
    let dir = &cfg.work_dir;
    std::fs::create_dir_all(dir).map_err(at("setup"))?;
    let previous = read_json::<PipelineManifest>(&dir.join(MANIFEST))
        .map(|m| m.stages.into_iter().map(|r| (r.stage.clone(), r)).collect())
        .unwrap_or_default();
    let mut run = Runner {
        cfg,
        previous,
        manifest: PipelineManifest {
            seed: cfg.seed,
            stages: Vec::new(),
        },
        outcomes: Vec::new(),
    };

    // Input files are checksummed inside the params so edits to a dump are noticed.
    let sources = crate::corpus::expand_inputs(&cfg.inputs).map_err(at("ingest"))?;
    let source_sums = sources
        .iter()
        .map(|p| sha256_file(p).map(|s| (p.display().to_string(), s)))
        .collect::<Result<BTreeMap<_, _>, _>>()
        .map_err(at("ingest"))?;
    run.stage("ingest", serde_json::json!({ "sources": source_sums, "subreddits": cfg.subreddits }), &[], |r| {
        ingest(&IngestOptions {
            inputs: cfg.inputs.clone(),
            subreddits: cfg.subreddits.clone(),
            out: r.path("corpus.jsonl"),
        })?;
        Ok(vec!["corpus.jsonl".into()])
    })?;

    run.stage("select", json(&cfg.max_gap_secs()), &["corpus.jsonl"], |r| {
        select_stage(&r.path("corpus.jsonl"), &r.path("segments.jsonl"), &r.path("selection.json"), cfg.max_gap_secs())?;
        Ok(vec!["segments.jsonl".into(), "selection.json".into()])
    })?;

    let scorer = VaderTone::default();
    run.stage(
        "score",
        serde_json::json!({ "scorer": scorer.scorer_id(), "lexicon": lexicon_checksum() }),
        &["segments.jsonl"],
        |r| {
            score_stage(&r.path("segments.jsonl"), &r.path("scored.jsonl"), &scorer)?;
            Ok(vec!["scored.jsonl".into()])
        },
    )?;

    let provider = cfg.provider.build().map_err(at("embed"))?;
    let cache = cfg.cache_path();
    if !cache.exists() {
        run.previous.remove("embed");
    }
    run.stage(
        "embed",
        serde_json::json!({ "provider": provider.provider_id(), "cache": cache }),
        &["scored.jsonl"],
        |r| {
            embed_stage(&r.path("scored.jsonl"), provider.as_ref(), &cache, &r.path("embed.json"))?;
            Ok(vec!["embed.json".into()])
        },
    )?;

    let tc = cfg.train_config();
    run.stage(
        "split",
        serde_json::json!({ "subreddit": cfg.subreddit, "ratios": cfg.split_ratios, "seed": cfg.seed, "n_bins": tc.n_bins }),
        &["scored.jsonl"],
        |r| {
            split_stage(
                &r.path("scored.jsonl"),
                cfg.subreddit.as_deref(),
                cfg.split_ratios,
                cfg.seed,
                tc.n_bins,
                &r.path("split.json"),
            )?;
            Ok(vec!["split.json".into()])
        },
    )?;

    let features = Features::new(provider.clone(), Some(&cache)).map_err(at("train"))?;
    run.stage(
        "train",
        serde_json::json!({ "grid": cfg.grid, "train": tc }),
        &["scored.jsonl", "split.json", "embed.json"],
        |r| {
            train_stage(&r.path("scored.jsonl"), &r.path("split.json"), &features, &cfg.grid, &tc, dir)?;
            Ok(vec!["model.ckpt".into(), "history.json".into(), "leaderboard.json".into()])
        },
    )?;

    let gbt = cfg.gbt_candidates();
    run.stage(
        "baselines",
        serde_json::json!({ "which": cfg.baselines, "gbt": gbt }),
        &["scored.jsonl", "split.json", "embed.json"],
        |r| {
            let with_gbt = cfg.baselines.contains(&BaselineKind::Gbt);
            baselines_stage(
                &r.path("scored.jsonl"),
                &r.path("split.json"),
                &cfg.baselines,
                Some(&features),
                &gbt,
                &r.path("baselines.jsonl"),
                with_gbt.then(|| r.path("gbt.json")).as_deref(),
            )?;
            let mut out = vec!["baselines.jsonl".to_string()];
            if with_gbt {
                out.push("gbt.json".into());
            }
            Ok(out)
        },
    )?;

    run.stage(
        "evaluate",
        serde_json::json!({ "n_scatter": cfg.n_scatter, "seed": cfg.seed }),
        &["scored.jsonl", "split.json", "model.ckpt", "baselines.jsonl"],
        |r| {
            evaluate_stage(
                &r.path("scored.jsonl"),
                &r.path("split.json"),
                &r.path("model.ckpt"),
                Some(&r.path("baselines.jsonl")),
                &features,
                dir,
            )?;
            let plots = export_plots_stage(
                &r.path("scored.jsonl"),
                Some(&r.path("split.json")),
                &r.path("predictions.jsonl"),
                &r.path("plots"),
                cfg.n_scatter,
                cfg.seed,
            )?;
            let mut out: Vec<String> = [
                "predictions.jsonl",
                "report.json",
                "report.txt",
                "characterization.json",
                "characterization.txt",
            ]
            .map(String::from)
            .to_vec();
            for stem in plots {
                out.push(format!("plots/{stem}_density.csv"));
                out.push(format!("plots/{stem}_scatter.csv"));
            }
            Ok(out)
        },
    )?;

    Ok(PipelineSummary {
        stages: run.outcomes,
        report: dir.join("report.txt"),
    })
}
