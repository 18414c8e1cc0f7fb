use std::path::{Path, PathBuf};

use toneshift_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, StageOutcome};
use toneshift_core::regressor::ModelConfig;
use toneshift_core::synth::synthetic_corpus;
use toneshift_core::train::{GridSpec, Part, SplitSpec};

const FIXTURE_SEED: u64 = 1;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synth50.jsonl")
}

#[test]
fn bundled_fixture_is_current() {
    let mut want = synthetic_corpus(50, FIXTURE_SEED).dump_lines().join("\n");
    want.push('\n');
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(fixture(), &want).unwrap();
    }
    assert_eq!(std::fs::read_to_string(fixture()).unwrap(), want);
}

fn smoke_config(work_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        work_dir: work_dir.to_path_buf(),
        inputs: vec![fixture().display().to_string()],
        seed: 11,
        grid: GridSpec::singleton(ModelConfig::best()),
        n_scatter: 50,
        ..Default::default()
    };
    cfg.train.max_epochs = 2;
    cfg.train.patience = 1;
    cfg.gbt.n_estimators = 50;
    cfg
}

fn outcomes(s: &[(String, StageOutcome)]) -> Vec<StageOutcome> {
    s.iter().map(|(_, o)| *o).collect()
}

#[test]
fn smoke_run_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let first = run_pipeline(&cfg).unwrap();
    assert_eq!(first.stages.len(), 8);
    assert!(outcomes(&first.stages).iter().all(|o| *o == StageOutcome::Ran));
    let report = std::fs::read_to_string(&first.report).unwrap();
    for name in ["UNCHANGED", "MEAN", "LAST", "XGB", "MODEL"] {
        assert!(report.contains(name), "{name} missing from report");
    }
    assert!(dir.path().join("plots/pred_model_density.csv").exists());

    let second = run_pipeline(&cfg).unwrap();
    assert!(outcomes(&second.stages).iter().all(|o| *o == StageOutcome::Skipped));

    // an edited stage output is noticed and regenerated, downstream follows
    std::fs::write(dir.path().join("split.json"), "{}").unwrap();
    let third = run_pipeline(&cfg).unwrap();
    let ran: Vec<&str> = third
        .stages
        .iter()
        .filter(|(_, o)| *o == StageOutcome::Ran)
        .map(|(n, _)| n.as_str())
        .collect();
    assert_eq!(ran, ["split"]);
    let mut changed = cfg.clone();
    changed.train.max_epochs = 3;
    let fourth = run_pipeline(&changed).unwrap();
    let ran: Vec<&str> = fourth
        .stages
        .iter()
        .filter(|(_, o)| *o == StageOutcome::Ran)
        .map(|(n, _)| n.as_str())
        .collect();
    assert_eq!(ran, ["train", "evaluate"]);
}

#[test]
fn subreddit_filter_applies_before_split() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("synth200.jsonl");
    std::fs::write(&dump, synthetic_corpus(200, 5).dump_lines().join("\n")).unwrap();
    let mut cfg = smoke_config(&dir.path().join("work"));
    cfg.inputs = vec![dump.display().to_string()];
    cfg.subreddit = Some("anx".into());
    cfg.baselines.retain(|b| *b != toneshift_core::pipeline::BaselineKind::Gbt);
    run_pipeline(&cfg).unwrap();
    let split: SplitSpec = toneshift_core::jsonl::read_json(&dir.path().join("work/split.json")).unwrap();
    let segs: Vec<toneshift_core::threadsel::ThreadSegment> =
        toneshift_core::jsonl::read_jsonl(&dir.path().join("work/scored.jsonl")).unwrap();
    let anx = segs.iter().filter(|s| s.subreddit == "ANX").count();
    assert!(anx > 0 && anx < segs.len());
    assert_eq!(split.assignment.len(), anx);
    assert!(split.count(Part::Train) > 0);
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke_config(dir.path());
    cfg.subreddit = Some("NOPE".into());
    match run_pipeline(&cfg) {
        Err(PipelineError::Stage { stage, .. }) => assert_eq!(stage, "split"),
        other => panic!("expected a split failure, got {other:?}"),
    }
    // earlier stages are recorded and resume
    cfg.subreddit = None;
    let s = run_pipeline(&cfg).unwrap();
    assert_eq!(s.stages[0].1, StageOutcome::Skipped);
    assert_eq!(s.stages[4].1, StageOutcome::Ran);
}
