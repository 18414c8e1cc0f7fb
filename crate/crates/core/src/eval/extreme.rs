use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{fmt_loss, percentile, predictor_order, predictors, EvalRecord};

/// The six extreme-shift subsets, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeSubset {
    ShiftAboveP95,
    ShiftAbovePlusOne,
    TargetAbovePlus08,
    ShiftBelowP5,
    ShiftBelowMinusOne,
    TargetBelowMinus08,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeThresholds {
    /// Percentiles of ΔEmT over test segments that have one.
    pub p95: Option<f64>,
    pub p5: Option<f64>,
    pub n_with_shift: usize,
}

impl ExtremeSubset {
    pub const ALL: [ExtremeSubset; 6] = [
        ExtremeSubset::ShiftAboveP95,
        ExtremeSubset::ShiftAbovePlusOne,
        ExtremeSubset::TargetAbovePlus08,
        ExtremeSubset::ShiftBelowP5,
        ExtremeSubset::ShiftBelowMinusOne,
        ExtremeSubset::TargetBelowMinus08,
    ];

    pub fn label(&self, t: &ExtremeThresholds) -> String {
        let p = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:+.3}"));
        match self {
            ExtremeSubset::ShiftAboveP95 => format!("dEmT > 95th perc. ({})", p(t.p95)),
            ExtremeSubset::ShiftAbovePlusOne => "dEmT > +1.0".into(),
            ExtremeSubset::TargetAbovePlus08 => "EmT(c_n) > +0.8".into(),
            ExtremeSubset::ShiftBelowP5 => format!("dEmT < 5th perc. ({})", p(t.p5)),
            ExtremeSubset::ShiftBelowMinusOne => "dEmT < -1.0".into(),
            ExtremeSubset::TargetBelowMinus08 => "EmT(c_n) < -0.8".into(),
        }
    }

    pub fn contains(&self, r: &EvalRecord, t: &ExtremeThresholds) -> bool {
        let d = r.delta_emt();
        match self {
            ExtremeSubset::ShiftAboveP95 => matches!((d, t.p95), (Some(d), Some(p)) if d > p),
            ExtremeSubset::ShiftAbovePlusOne => d.is_some_and(|d| d > 1.0),
            ExtremeSubset::TargetAbovePlus08 => r.target > 0.8,
            ExtremeSubset::ShiftBelowP5 => matches!((d, t.p5), (Some(d), Some(p)) if d < p),
            ExtremeSubset::ShiftBelowMinusOne => d.is_some_and(|d| d < -1.0),
            ExtremeSubset::TargetBelowMinus08 => r.target < -0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRow {
    pub subset: ExtremeSubset,
    pub label: String,
    pub count: usize,
    /// Unweighted L1 per predictor; absent for an empty subset.
    pub l1: BTreeMap<String, Option<f64>>,
    /// Percentage of the subset where the model's absolute error is strictly lower.
    pub wins: BTreeMap<String, Option<f64>>,
}

/// Thresholds come from this test set, pooled across subreddits.
pub fn extreme_subsets(records: &[EvalRecord], model: &str) -> (ExtremeThresholds, Vec<ExtremeRow>) {
    let shifts: Vec<f64> = records.iter().filter_map(|r| r.delta_emt()).collect();
    let t = ExtremeThresholds {
        p95: percentile(&shifts, 95.0),
        p5: percentile(&shifts, 5.0),
        n_with_shift: shifts.len(),
    };
    let names = predictors(records);
    let rows = ExtremeSubset::ALL
        .iter()
        .map(|s| {
            let members: Vec<&EvalRecord> = records.iter().filter(|r| s.contains(r, &t)).collect();
            let n = members.len();
            let l1 = names
                .iter()
                .map(|p| {
                    let errs: Vec<f64> = members.iter().filter_map(|r| r.abs_error(p)).collect();
                    let v = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
                    (p.clone(), v)
                })
                .collect();
            let wins = names
                .iter()
                .filter(|p| p.as_str() != model)
                .map(|p| {
                    let v = (n > 0).then(|| {
                        let won = members
                            .iter()
                            .filter(|r| match (r.abs_error(model), r.abs_error(p)) {
                                (Some(m), Some(b)) => m < b,
                                _ => false,
                            })
                            .count();
                        100.0 * won as f64 / n as f64
                    });
                    (p.clone(), v)
                })
                .collect();
            ExtremeRow {
                subset: *s,
                label: s.label(&t),
                count: n,
                l1,
                wins,
            }
        })
        .collect();
    (t, rows)
}

pub(super) fn render(rows: &[ExtremeRow], model: &str) -> String {
    let mut out = String::new();
    let mut names: Vec<&String> = rows.first().map(|r| r.l1.keys().collect()).unwrap_or_default();
    names.sort_by_key(|n| predictor_order(n));
    let rivals: Vec<&&String> = names.iter().filter(|n| n.as_str() != model).collect();
    let _ = writeln!(out, "Extreme test cases: L1 loss (unweighted) | % threads where {model} wins");
    let _ = write!(out, "{:<30} {:>6}", "Subset", "n");
    for n in &names {
        let _ = write!(out, " {n:>9}");
    }
    out.push_str(" |");
    for n in &rivals {
        let _ = write!(out, " {n:>9}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<30} {:>6}", r.label, r.count);
        for n in &names {
            let v = r.l1.get(*n).copied().flatten();
            let _ = write!(out, " {:>9}", v.map_or("-".into(), fmt_loss));
        }
        out.push_str(" |");
        for n in &rivals {
            let v = r.wins.get(**n).copied().flatten();
            let _ = write!(out, " {:>9}", v.map_or("-".into(), |v| format!("{v:.1}")));
        }
        out.push('\n');
    }
    out
}
