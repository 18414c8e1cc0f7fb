use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{joint_density, write_density_csv, EvalError};
use crate::corpus::ALL_SUBREDDITS;
use crate::threadsel::ThreadSegment;

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quartiles {
    fn of(values: &[f64]) -> Option<Quartiles> {
        Some(Quartiles {
            q1: percentile(values, 25.0)?,
            q2: percentile(values, 50.0)?,
            q3: percentile(values, 75.0)?,
        })
    }
}

/// Shares of threads by the signs of `(EmT(p), EmT(c_n))`; points on an axis
/// belong to no quadrant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Quadrants {
    pub first: f64,
    pub second: f64,
    pub third: f64,
    pub fourth: f64,
    pub on_axis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneProfile {
    pub subreddit: String,
    pub threads: usize,
    pub post: Quartiles,
    pub last_comment: Quartiles,
    /// Quartiles of the per-thread mean tone of other users' comments.
    pub others_mean: Option<Quartiles>,
    pub quadrants: Quadrants,
}

pub(super) fn others_mean(seg: &ThreadSegment) -> Option<f64> {
    let t: Vec<f64> = seg.messages[1..]
        .iter()
        .filter(|m| !m.is_post_author)
        .map(|m| m.tone())
        .collect();
    (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
}

fn profile(subreddit: &str, segs: &[&ThreadSegment]) -> ToneProfile {
    let post: Vec<f64> = segs.iter().map(|s| s.post().tone()).collect();
    let last: Vec<f64> = segs.iter().map(|s| s.target.tone()).collect();
    let others: Vec<f64> = segs.iter().filter_map(|s| others_mean(s)).collect();
    let n = segs.len() as f64;
    let mut q = Quadrants::default();
    for (p, c) in post.iter().zip(&last) {
        let slot = match (p.partial_cmp(&0.0), c.partial_cmp(&0.0)) {
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Greater)) => &mut q.first,
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Greater)) => &mut q.second,
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Less)) => &mut q.third,
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Less)) => &mut q.fourth,
            _ => &mut q.on_axis,
        };
        *slot += 1.0 / n;
    }
    ToneProfile {
        subreddit: subreddit.to_string(),
        threads: segs.len(),
        post: Quartiles::of(&post).expect("nonempty group"),
        last_comment: Quartiles::of(&last).expect("nonempty group"),
        others_mean: Quartiles::of(&others),
        quadrants: q,
    }
}

/// Per-subreddit tone quartiles and quadrant shares over scored segments,
/// followed by the pooled row.
pub fn characterize(segments: &[ThreadSegment]) -> Vec<ToneProfile> {
    let mut groups: BTreeMap<&str, Vec<&ThreadSegment>> = BTreeMap::new();
    for s in segments {
        groups.entry(&s.subreddit).or_default().push(s);
    }
    let mut out: Vec<ToneProfile> = groups.iter().map(|(k, v)| profile(k, v)).collect();
    if !segments.is_empty() {
        out.push(profile(ALL_SUBREDDITS, &segments.iter().collect::<Vec<_>>()));
    }
    out
}

pub fn render_profiles(profiles: &[ToneProfile]) -> String {
    let mut out = String::new();
    let q = |q: &Quartiles| format!("{:+.3} {:+.3} {:+.3}", q.q1, q.q2, q.q3);
    let _ = writeln!(
        out,
        "{:<10} {:>7}  {:<20}  {:<20}  {:<20}  {:>6} {:>6} {:>6} {:>6}",
        "Subreddit", "threads", "EmT(p) Q1/Q2/Q3", "EmT(c_n) Q1/Q2/Q3", "others Q1/Q2/Q3", "Q1%", "Q2%", "Q3%", "Q4%"
    );
    for p in profiles {
        let _ = writeln!(
            out,
            "{:<10} {:>7}  {:<20}  {:<20}  {:<20}  {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
            p.subreddit,
            p.threads,
            q(&p.post),
            q(&p.last_comment),
            p.others_mean.as_ref().map_or("-".into(), q),
            100.0 * p.quadrants.first,
            100.0 * p.quadrants.second,
            100.0 * p.quadrants.third,
            100.0 * p.quadrants.fourth,
        );
    }
    out
}

/// Pairwise tone densities: post vs last comment, post vs others' mean,
/// others' mean vs last comment.
pub fn export_tone_plots(dir: &Path, segments: &[ThreadSegment], n_scatter: usize, seed: u64) -> Result<Vec<String>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<(f64, f64, f64, f64)> = segments
        .iter()
        .filter_map(|s| others_mean(s).map(|o| (s.post().tone(), s.target.tone(), o, s.len() as f64)))
        .collect();
    let col = |f: fn(&(f64, f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (post, last, others, sizes) = (col(|r| r.0), col(|r| r.1), col(|r| r.2), col(|r| r.3));
    let mut written = Vec::new();
    for (stem, x, y) in [
        ("tone_post_vs_last", &post, &last),
        ("tone_post_vs_others", &post, &others),
        ("tone_others_vs_last", &others, &last),
    ] {
        let g = joint_density(x, y, Some(&sizes), n_scatter, seed)?;
        write_density_csv(dir, stem, &g)?;
        written.push(stem.to_string());
    }
    Ok(written)
}
