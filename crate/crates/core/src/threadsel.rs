//! Thread segment selection.
//!
//! For every thread opened by a user we keep the prefix that ends at the
//! user's last comment before they publish anywhere else, provided another
//! user took part and no two consecutive publications are a day or more apart.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{chronological, Publication, ThreadForest, ThreadTree};

/// Longest `S` fed to the model.
pub const SEQ_CAP: usize = 64;
pub const DEFAULT_MAX_GAP_SECS: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub author: String,
    pub created_utc: i64,
    pub text: String,
    pub is_post_author: bool,
    /// Tone of the message, filled by the scoring stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emt: Option<f64>,
}

impl Message {
    fn from_publication(p: &Publication, segment_author: &str) -> Message {
        Message {
            id: p.id.clone(),
            author: p.author.clone(),
            created_utc: p.created_utc,
            text: p.text.clone(),
            is_post_author: p.author == segment_author,
            emt: None,
        }
    }

    pub fn tone(&self) -> f64 {
        self.emt.expect("message has not been scored")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadSegment {
    pub segment_id: String,
    pub subreddit: String,
    pub author: String,
    /// `S`: the post and every publication before the target.
    pub messages: Vec<Message>,
    /// `c_n`: the author's last comment in the kept prefix.
    pub target: Message,
    /// Position of the target in the thread prefix (the post is 0).
    pub n: usize,
    /// `S` was cut to [`SEQ_CAP`] messages.
    #[serde(default)]
    pub truncated: bool,
    /// The thread continued but the author became active elsewhere first.
    #[serde(default)]
    pub cut_by_overlap: bool,
}

impl ThreadSegment {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn is_scored(&self) -> bool {
        self.target.emt.is_some() && self.messages.iter().all(|m| m.emt.is_some())
    }

    pub fn post(&self) -> &Message {
        &self.messages[0]
    }

    pub fn last(&self) -> &Message {
        self.messages.last().expect("segment has no messages")
    }

    /// Tone of the author's comment preceding the target, if any.
    pub fn second_last_author_emt(&self) -> Option<f64> {
        self.messages[1..]
            .iter()
            .rev()
            .find(|m| m.is_post_author)
            .and_then(|m| m.emt)
    }

    /// Checks the structural invariants for a given gap limit.
    pub fn check(&self, max_gap_secs: i64) -> Result<(), String> {
        let Some(first) = self.messages.first() else {
            return Err("empty S".into());
        };
        if !first.is_post_author || first.author != self.author {
            return Err("S does not start with the author's post".into());
        }
        if self.target.author != self.author {
            return Err("target is not by the author".into());
        }
        if !(2..=SEQ_CAP).contains(&self.messages.len()) {
            return Err(format!("|S| = {} out of range", self.messages.len()));
        }
        if !self.messages[1..].iter().any(|m| m.author != self.author) {
            return Err("no other commenter".into());
        }
        for m in self.messages.iter().chain(std::iter::once(&self.target)) {
            if m.is_post_author != (m.author == self.author) {
                return Err(format!("is_post_author flag wrong on {}", m.id));
            }
        }
        // after truncation the target is no longer adjacent to the last kept message
        let tail = (!self.truncated).then_some(&self.target);
        let times: Vec<i64> = self.messages.iter().chain(tail).map(|m| m.created_utc).collect();
        for w in times.windows(2) {
            if w[1] < w[0] || w[1] - w[0] >= max_gap_secs {
                return Err(format!("gap {} s", w[1] - w[0]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoOtherCommenter,
    GapExceeded,
    AuthorNeverComments,
    CrossThreadOverlap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub threads_considered: usize,
    pub segments: usize,
    pub truncated: usize,
    /// Threads whose opening post has a deleted author; never selectable.
    pub deleted_author_threads: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Per-thread decisions, sorted by thread id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<(String, Result<(), RejectReason>)>,
}

impl SelectionReport {
    pub fn truncated_fraction(&self) -> f64 {
        if self.segments == 0 {
            0.0
        } else {
            self.truncated as f64 / self.segments as f64
        }
    }
}

fn key(p: &Publication) -> (i64, &str) {
    (p.created_utc, p.id.as_str())
}

/// Selects one segment per thread opened by `user`, or explains the rejection.
///
/// `activity` must hold every publication by `user` in the corpus.
pub fn select_segments(
    user: &str,
    threads: &[&ThreadTree],
    activity: &[&Publication],
    max_gap_secs: i64,
) -> Vec<(String, Result<ThreadSegment, RejectReason>)> {
    let mut activity: Vec<&Publication> = activity.to_vec();
    activity.sort_by(|a, b| chronological(a, b));
    let mut out: Vec<_> = threads
        .iter()
        .filter(|t| t.post.author == user)
        .map(|t| (t.post.id.clone(), select_one(user, t, &activity, max_gap_secs)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn select_one(
    user: &str,
    thread: &ThreadTree,
    activity: &[&Publication],
    max_gap_secs: i64,
) -> Result<ThreadSegment, RejectReason> {
    let post_key = key(&thread.post);
    let cut = activity
        .iter()
        .filter(|p| p.thread_id != thread.post.id && key(p) > post_key)
        .map(|p| key(p))
        .next();
    let prefix: Vec<&Publication> = thread
        .publications()
        .take_while(|p| cut.is_none_or(|c| key(p) < c))
        .collect();

    let Some(target_idx) = prefix.iter().rposition(|p| !p.is_post() && p.author == user) else {
        return if thread.comments.iter().any(|c| c.author == user) {
            Err(RejectReason::CrossThreadOverlap)
        } else {
            Err(RejectReason::AuthorNeverComments)
        };
    };
    let s = &prefix[..target_idx];
    if !s[1..].iter().any(|p| p.author != user) {
        return Err(RejectReason::NoOtherCommenter);
    }
    let within_gap = prefix[..=target_idx]
        .windows(2)
        .all(|w| w[1].created_utc - w[0].created_utc < max_gap_secs);
    if !within_gap {
        return Err(RejectReason::GapExceeded);
    }

    let cut_by_overlap = prefix.len() < thread.comments.len() + 1;
    Ok(ThreadSegment {
        segment_id: thread.post.id.clone(),
        subreddit: thread.post.subreddit.clone(),
        author: user.to_string(),
        messages: s.iter().map(|p| Message::from_publication(p, user)).collect(),
        target: Message::from_publication(prefix[target_idx], user),
        n: target_idx,
        truncated: false,
        cut_by_overlap,
    })
}

/// Keeps the first [`SEQ_CAP`] messages of `S`.
pub fn truncate_segment(mut seg: ThreadSegment) -> ThreadSegment {
    if seg.messages.len() > SEQ_CAP {
        seg.messages.truncate(SEQ_CAP);
        seg.truncated = true;
    }
    seg
}

/// Runs selection for every post author of the forest.
///
/// Output is sorted by segment id and independent of thread order.
pub fn select_all(forest: &ThreadForest, max_gap_secs: i64) -> (Vec<ThreadSegment>, SelectionReport) {
    let mut activity: HashMap<&str, Vec<&Publication>> = HashMap::new();
    let mut opened: HashMap<&str, Vec<&ThreadTree>> = HashMap::new();
    let mut report = SelectionReport::default();
    for t in &forest.threads {
        for p in t.publications() {
            activity.entry(&p.author).or_default().push(p);
        }
        if t.post.has_deleted_author() {
            report.deleted_author_threads += 1;
        } else {
            opened.entry(&t.post.author).or_default().push(t);
        }
    }

    let mut users: Vec<&str> = opened.keys().copied().collect();
    users.sort_unstable();
    let mut decisions: Vec<(String, Result<ThreadSegment, RejectReason>)> = users
        .par_iter()
        .flat_map_iter(|u| select_segments(u, &opened[u], &activity[u], max_gap_secs))
        .collect();
    decisions.sort_by(|a, b| a.0.cmp(&b.0));

    let mut segments = Vec::new();
    for (tid, d) in decisions {
        report.threads_considered += 1;
        match d {
            Ok(seg) => {
                let seg = truncate_segment(seg);
                report.truncated += seg.truncated as usize;
                segments.push(seg);
                report.decisions.push((tid, Ok(())));
            }
            Err(r) => {
                *report.rejected.entry(r).or_default() += 1;
                report.decisions.push((tid, Err(r)));
            }
        }
    }
    report.segments = segments.len();
    (segments, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_threads, PublicationKind};

    fn p(id: &str, thread: &str, author: &str, t: i64) -> Publication {
        let kind = if id == thread { PublicationKind::Post } else { PublicationKind::Comment };
        Publication {
            id: id.into(),
            parent_id: (kind == PublicationKind::Comment).then(|| thread.to_string()),
            thread_id: thread.into(),
            author: author.into(),
            created_utc: t,
            text: id.into(),
            subreddit: "s".into(),
            kind,
        }
    }

    fn one(pubs: Vec<Publication>) -> Result<ThreadSegment, RejectReason> {
        let f = build_threads(pubs);
        let (segs, report) = select_all(&f, DEFAULT_MAX_GAP_SECS);
        match report.decisions[0].1 {
            Ok(()) => Ok(segs[0].clone()),
            Err(r) => Err(r),
        }
    }

    #[test]
    fn minimal_accepted() {
        let seg = one(vec![p("t", "t", "u", 10), p("a", "t", "v", 20), p("b", "t", "u", 30)]).unwrap();
        assert_eq!(seg.len(), 2);
        assert_eq!(seg.target.id, "b");
        assert_eq!(seg.n, 2);
        assert!(seg.messages[0].is_post_author && !seg.messages[1].is_post_author);
        seg.check(DEFAULT_MAX_GAP_SECS).unwrap();
    }

    #[test]
    fn only_author_comments() {
        let r = one(vec![p("t", "t", "u", 10), p("a", "t", "u", 20), p("b", "t", "u", 30)]);
        assert_eq!(r, Err(RejectReason::NoOtherCommenter));
    }

    #[test]
    fn author_silent() {
        let r = one(vec![p("t", "t", "u", 10), p("a", "t", "v", 20)]);
        assert_eq!(r, Err(RejectReason::AuthorNeverComments));
    }

    #[test]
    fn gap_boundary_is_strict() {
        let ok = one(vec![p("t", "t", "u", 10), p("a", "t", "v", 20), p("b", "t", "u", 20 + 86_399)]);
        assert!(ok.is_ok());
        let bad = one(vec![p("t", "t", "u", 10), p("a", "t", "v", 20), p("b", "t", "u", 20 + 86_400)]);
        assert_eq!(bad, Err(RejectReason::GapExceeded));
    }

    #[test]
    fn later_comments_excluded_and_earlier_author_comments_kept() {
        let seg = one(vec![
            p("t", "t", "u", 10),
            p("a", "t", "v", 20),
            p("b", "t", "u", 30),
            p("c", "t", "w", 40),
            p("d", "t", "u", 50),
            p("e", "t", "v", 60),
        ])
        .unwrap();
        let ids: Vec<_> = seg.messages.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["t", "a", "b", "c"]);
        assert_eq!(seg.target.id, "d");
        assert!(!seg.cut_by_overlap);
    }

    #[test]
    fn deleted_post_author_is_skipped() {
        let f = build_threads(vec![
            p("t", "t", "[deleted]", 10),
            p("a", "t", "v", 20),
            p("b", "t", "[deleted]", 30),
        ]);
        let (segs, report) = select_all(&f, DEFAULT_MAX_GAP_SECS);
        assert!(segs.is_empty());
        assert_eq!(report.deleted_author_threads, 1);
        assert_eq!(report.threads_considered, 0);
    }

    fn with_len(n: usize) -> ThreadSegment {
        let mut pubs = vec![p("t", "t", "u", 1)];
        for i in 1..n {
            pubs.push(p(&format!("c{i:03}"), "t", if i % 2 == 0 { "u" } else { "v" }, 1 + i as i64));
        }
        pubs.push(p("z", "t", "u", 1000));
        let f = build_threads(pubs);
        let tree = &f.threads[0];
        let all: Vec<&Publication> = tree.publications().filter(|x| x.author == "u").collect();
        select_segments("u", &[tree], &all, DEFAULT_MAX_GAP_SECS).remove(0).1.unwrap()
    }

    #[test]
    fn truncation() {
        let long = truncate_segment(with_len(70));
        assert_eq!(long.len(), 64);
        assert!(long.truncated);
        assert_eq!(long.target.id, "z");
        let edge = truncate_segment(with_len(64));
        assert_eq!(edge.len(), 64);
        assert!(!edge.truncated);
        let short = with_len(3);
        assert_eq!(truncate_segment(short.clone()), short);
    }
}
