//! Test-set metrics, extreme-reaction analysis and plot data.

mod characterize;
mod density;
mod extreme;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use characterize::{characterize, export_tone_plots, percentile, render_profiles, Quadrants, Quartiles, ToneProfile};
pub use density::{joint_density, write_density_csv, JointDensityGrid, ScatterPoint, BANDWIDTH_FLOOR, GRID_POINTS};
pub use extreme::{extreme_subsets, ExtremeRow, ExtremeSubset, ExtremeThresholds};

use crate::corpus::ALL_SUBREDDITS;
use crate::train::{l1, mse, weighted_l1, BinWeights};

pub const MODEL: &str = "MODEL";

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions for {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("record {0} lacks a prediction from {1}")]
    MissingPrediction(String, String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub weighted_l1: f64,
    pub l1: f64,
    pub mse: f64,
}

/// Weighted L1 (with training-split weights), L1 and MSE.
pub fn metrics(pred: &[f64], target: &[f64], bw: &BinWeights) -> Result<Metrics, EvalError> {
    if pred.len() != target.len() {
        return Err(EvalError::LengthMismatch {
            predictions: pred.len(),
            targets: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(Metrics {
        weighted_l1: weighted_l1(pred, target, bw),
        l1: l1(pred, target),
        mse: mse(pred, target),
    })
}

/// One test segment and what every predictor said about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub segment_id: String,
    pub subreddit: String,
    pub target: f64,
    /// `|S|`.
    pub n_messages: usize,
    pub second_last_author_emt: Option<f64>,
    pub predictions: BTreeMap<String, f64>,
}

impl EvalRecord {
    /// `EmT(c_n)` minus the tone of the author's previous comment.
    pub fn delta_emt(&self) -> Option<f64> {
        self.second_last_author_emt.map(|p| self.target - p)
    }

    pub fn abs_error(&self, predictor: &str) -> Option<f64> {
        self.predictions.get(predictor).map(|p| (p - self.target).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub subreddit: String,
    pub predictor: String,
    pub n: usize,
    pub metrics: Metrics,
}

fn predictors(records: &[EvalRecord]) -> Vec<String> {
    let set: BTreeSet<&String> = records.iter().flat_map(|r| r.predictions.keys()).collect();
    set.into_iter().cloned().collect()
}

/// Metrics per (subreddit, predictor), with the pooled [`ALL_SUBREDDITS`] rows last.
pub fn metric_table(records: &[EvalRecord], bw: &BinWeights) -> Result<Vec<MetricRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let names = predictors(records);
    let mut groups: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.subreddit).or_default().push(r);
    }
    let mut keyed: Vec<(&str, Vec<&EvalRecord>)> = groups.into_iter().collect();
    if keyed.len() > 1 || keyed[0].0 != ALL_SUBREDDITS {
        keyed.push((ALL_SUBREDDITS, records.iter().collect()));
    }
    let mut rows = Vec::new();
    for (sub, group) in keyed {
        for name in &names {
            let mut pred = Vec::with_capacity(group.len());
            let mut target = Vec::with_capacity(group.len());
            for r in &group {
                let p = r
                    .predictions
                    .get(name)
                    .ok_or_else(|| EvalError::MissingPrediction(r.segment_id.clone(), name.clone()))?;
                pred.push(*p);
                target.push(r.target);
            }
            rows.push(MetricRow {
                subreddit: sub.to_string(),
                predictor: name.clone(),
                n: group.len(),
                metrics: metrics(&pred, &target, bw)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    WeightedL1,
    L1,
    Mse,
}

impl MetricKind {
    fn pick(&self, m: &Metrics) -> f64 {
        match self {
            MetricKind::WeightedL1 => m.weighted_l1,
            MetricKind::L1 => m.l1,
            MetricKind::Mse => m.mse,
        }
    }

    fn title(&self) -> &'static str {
        match self {
            MetricKind::WeightedL1 => "Weighted L1 Loss",
            MetricKind::L1 => "L1 Loss",
            MetricKind::Mse => "MSE Loss",
        }
    }
}

/// Decimal without the leading zero: `.404`, `-.210`, `1.250`.
pub fn fmt_loss(v: f64) -> String {
    let s = format!("{v:.3}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

fn predictor_order(name: &str) -> (usize, &str) {
    let rank = match name {
        "UNCHANGED" => 0,
        "MEAN" => 1,
        "LAST" => 2,
        crate::baselines::GBT => 3,
        MODEL => 5,
        _ => 4,
    };
    (rank, name)
}

/// Predictors as rows, subreddits as columns; best per column marked with `*`.
pub fn render_metric_table(rows: &[MetricRow], kind: MetricKind) -> String {
    let subs: Vec<&str> = {
        let mut seen: Vec<&str> = Vec::new();
        for r in rows {
            if !seen.contains(&r.subreddit.as_str()) {
                seen.push(&r.subreddit);
            }
        }
        seen
    };
    let mut names: Vec<&str> = predictors_of(rows);
    names.sort_by_key(|n| predictor_order(n));
    let cell = |p: &str, s: &str| {
        rows.iter()
            .find(|r| r.predictor == p && r.subreddit == s)
            .map(|r| kind.pick(&r.metrics))
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", kind.title());
    let _ = write!(out, "{:<12}", "Predictor");
    for s in &subs {
        let _ = write!(out, " {s:>9}");
    }
    out.push('\n');
    for p in &names {
        let _ = write!(out, "{p:<12}");
        for s in &subs {
            let best = names
                .iter()
                .filter_map(|q| cell(q, s))
                .fold(f64::INFINITY, f64::min);
            match cell(p, s) {
                Some(v) => {
                    let mark = if v == best { "*" } else { " " };
                    let _ = write!(out, " {:>8}{mark}", fmt_loss(v));
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn predictors_of(rows: &[MetricRow]) -> Vec<&str> {
    let set: BTreeSet<&str> = rows.iter().map(|r| r.predictor.as_str()).collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub test_size: usize,
    pub bin_weights: BinWeights,
    pub metrics: Vec<MetricRow>,
    pub thresholds: ExtremeThresholds,
    pub extreme: Vec<ExtremeRow>,
    /// Definitions that are assumptions rather than given.
    pub notes: Vec<String>,
}

pub fn evaluate(records: &[EvalRecord], bw: &BinWeights, model: &str) -> Result<EvaluationReport, EvalError> {
    let metrics = metric_table(records, bw)?;
    let (thresholds, extreme) = extreme_subsets(records, model);
    let mut notes = vec!["UNCHANGED predicts the tone of the opening post".to_string()];
    let excluded = records.iter().filter(|r| r.second_last_author_emt.is_none()).count();
    if excluded > 0 {
        notes.push(format!(
            "{excluded} of {} test segments have no earlier author comment and are left out of the shift subsets",
            records.len()
        ));
    }
    Ok(EvaluationReport {
        model: model.to_string(),
        test_size: records.len(),
        bin_weights: bw.clone(),
        metrics,
        thresholds,
        extreme,
        notes,
    })
}

impl EvaluationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for kind in [MetricKind::WeightedL1, MetricKind::L1, MetricKind::Mse] {
            out.push_str(&render_metric_table(&self.metrics, kind));
            out.push('\n');
        }
        out.push_str(&extreme::render(&self.extreme, &self.model));
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                let _ = writeln!(out, "note: {n}");
            }
        }
        out
    }
}

/// Per-predictor true-vs-predicted density grids plus scatter, one CSV pair each.
pub fn export_prediction_plots(
    dir: &Path,
    records: &[EvalRecord],
    n_scatter: usize,
    seed: u64,
) -> Result<Vec<String>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let target: Vec<f64> = records.iter().map(|r| r.target).collect();
    let sizes: Vec<f64> = records.iter().map(|r| r.n_messages as f64).collect();
    let mut written = Vec::new();
    for name in predictors(records) {
        let pred = records
            .iter()
            .map(|r| {
                r.predictions
                    .get(&name)
                    .map(|p| p.clamp(-1.0, 1.0))
                    .ok_or_else(|| EvalError::MissingPrediction(r.segment_id.clone(), name.clone()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let grid = joint_density(&target, &pred, Some(&sizes), n_scatter, seed)?;
        let stem = format!("pred_{}", name.to_lowercase());
        write_density_csv(dir, &stem, &grid)?;
        written.push(stem);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::compute_bin_weights;

    fn record(id: &str, sub: &str, target: f64, preds: &[(&str, f64)]) -> EvalRecord {
        EvalRecord {
            segment_id: id.into(),
            subreddit: sub.into(),
            target,
            n_messages: 3,
            second_last_author_emt: None,
            predictions: preds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn perfect_predictions() {
        let y = [0.1, -0.5, 0.9];
        let bw = compute_bin_weights(&y, 10).unwrap();
        let m = metrics(&y, &y, &bw).unwrap();
        assert_eq!((m.weighted_l1, m.l1, m.mse), (0.0, 0.0, 0.0));
        assert_eq!(
            metrics(&y[..2], &y, &bw),
            Err(EvalError::LengthMismatch { predictions: 2, targets: 3 })
        );
    }

    #[test]
    fn uniform_weights_match_l1() {
        let y = [-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9];
        let p = [0.0; 10];
        let bw = compute_bin_weights(&y, 10).unwrap();
        let m = metrics(&p, &y, &bw).unwrap();
        assert!((m.weighted_l1 - m.l1).abs() < 1e-12);
    }

    #[test]
    fn mean_minimizes_constant_mse() {
        let y = [0.3, -0.2, 0.8, 0.1, -0.6];
        let bw = BinWeights::uniform(10);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let at = |c: f64| metrics(&[c; 5], &y, &bw).unwrap().mse;
        for d in [-0.3, -0.01, 0.01, 0.3] {
            assert!(at(mean) < at(mean + d));
        }
    }

    #[test]
    fn table_rows_and_permutation_invariance() {
        let recs = vec![
            record("a", "ANX", 0.5, &[("MEAN", 0.1), (MODEL, 0.4)]),
            record("b", "DEP", -0.5, &[("MEAN", 0.1), (MODEL, -0.2)]),
            record("c", "DEP", 0.2, &[("MEAN", 0.1), (MODEL, 0.3)]),
        ];
        let bw = BinWeights::uniform(10);
        let rows = metric_table(&recs, &bw).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.last().unwrap().subreddit, ALL_SUBREDDITS);
        let mut rev = recs.clone();
        rev.reverse();
        let rows2 = metric_table(&rev, &bw).unwrap();
        for (a, b) in rows.iter().zip(&rows2) {
            assert!((a.metrics.l1 - b.metrics.l1).abs() < 1e-15);
        }
        let text = render_metric_table(&rows, MetricKind::L1);
        assert!(text.contains("MODEL"));
        assert!(text.contains(".100*"));
    }

    #[test]
    fn report_round_trip() {
        let recs = vec![
            record("a", "ANX", 0.5, &[("MEAN", 0.1), (MODEL, 0.4)]),
            record("b", "ANX", -0.5, &[("MEAN", 0.1), (MODEL, -0.2)]),
        ];
        let report = evaluate(&recs, &BinWeights::uniform(10), MODEL).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
        assert!(report.render().contains("Weighted L1 Loss"));
    }

    #[test]
    fn loss_formatting() {
        assert_eq!(fmt_loss(0.4041), ".404");
        assert_eq!(fmt_loss(-0.21), "-.210");
        assert_eq!(fmt_loss(1.25), "1.250");
    }
}
