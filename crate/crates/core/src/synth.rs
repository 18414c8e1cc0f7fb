//! Synthetic forums with known ground truth, for smoke runs and tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Publication, PublicationKind, ALL_SUBREDDITS};
use crate::threadsel::{Message, RejectReason, ThreadSegment};
use crate::tone::ToneScorer;

const POSITIVE: &[&str] = &[
    "good", "great", "happy", "love", "thanks", "better", "hope", "glad", "kind", "care", "strong", "calm", "proud",
    "wonderful", "support", "smile", "beautiful", "relief",
];
const NEGATIVE: &[&str] = &[
    "sad", "hate", "awful", "hopeless", "terrible", "alone", "hurt", "afraid", "worried", "tired", "panic", "lost",
    "worthless", "pain", "crying", "angry", "scared", "miserable",
];
const FILLER: &[&str] = &[
    "today", "work", "the", "doctor", "and", "my", "family", "week", "night", "again", "really", "this", "morning",
    "school", "friend", "therapy", "sleep", "about", "it", "just",
];
const SUBREDDITS: &[&str] = &["ANX", "BIP", "DEP", "SUI"];
const BASE_UTC: i64 = 1_483_228_800;

/// A short text whose tone leans towards `bias` in [-1, 1].
pub fn toned_text(rng: &mut impl Rng, bias: f64) -> String {
    let n_sent = rng.gen_range(1..=3);
    let mut sentences = Vec::with_capacity(n_sent);
    for _ in 0..n_sent {
        let n_words = rng.gen_range(4..=9);
        let mut words: Vec<&str> = (0..n_words).map(|_| *FILLER.choose(rng).unwrap()).collect();
        let n_tone = rng.gen_range(0..=3);
        for _ in 0..n_tone {
            let positive = rng.gen::<f64>() < 0.5 + 0.5 * bias;
            let w = if positive { POSITIVE } else { NEGATIVE }.choose(rng).unwrap();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, w);
        }
        if rng.gen::<f64>() < 0.1 {
            let at = rng.gen_range(0..words.len());
            words.insert(at, "not");
        }
        let mut s = words.join(" ");
        if let Some(first) = s.get(..1) {
            s = first.to_uppercase() + &s[1..];
        }
        s.push(if rng.gen::<f64>() < 0.2 { '!' } else { '.' });
        sentences.push(s);
    }
    sentences.join(" ")
}

/// Counts the generator kept while emitting the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthTallies {
    pub threads: u64,
    pub comments: u64,
    pub unique_users: u64,
    pub posting_users: u64,
    pub commenters: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub publications: Vec<Publication>,
    /// Per subreddit, plus the pooled row.
    pub tallies: BTreeMap<String, SynthTallies>,
    /// Intended selection outcome per thread id.
    pub expected: BTreeMap<String, Result<(), RejectReason>>,
}

impl SynthCorpus {
    /// The corpus as forum-dump records, one JSON object per line.
    pub fn dump_lines(&self) -> Vec<String> {
        self.publications
            .iter()
            .map(|p| match p.kind {
                PublicationKind::Post => {
                    let (title, body) = p.text.split_once('\n').unwrap_or((&p.text, ""));
                    json!({
                        "id": p.id, "author": p.author, "created_utc": p.created_utc,
                        "subreddit": p.subreddit, "title": title, "selftext": body,
                    })
                    .to_string()
                }
                PublicationKind::Comment => {
                    let parent = p.parent_id.as_deref().unwrap_or_default();
                    let parent = if parent == p.thread_id { format!("t3_{parent}") } else { format!("t1_{parent}") };
                    json!({
                        "id": p.id, "author": p.author, "created_utc": p.created_utc,
                        "subreddit": p.subreddit, "body": p.text,
                        "parent_id": parent, "link_id": format!("t3_{}", p.thread_id),
                    })
                    .to_string()
                }
            })
            .collect()
    }
}

#[derive(Default)]
struct Users {
    posters: BTreeSet<String>,
    commenters: BTreeSet<String>,
    threads: u64,
    comments: u64,
}

impl Users {
    fn tallies(&self) -> SynthTallies {
        SynthTallies {
            threads: self.threads,
            comments: self.comments,
            unique_users: self.posters.union(&self.commenters).count() as u64,
            posting_users: self.posters.len() as u64,
            commenters: self.commenters.len() as u64,
        }
    }
}

/// `n_threads` threads over four communities. Thread kinds cycle so that
/// seven in ten are selectable and the rest exercise each rejection rule.
pub fn synthetic_corpus(n_threads: usize, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pubs = Vec::new();
    let mut expected = BTreeMap::new();
    let mut users: BTreeMap<String, Users> = BTreeMap::new();
    let n_authors = (n_threads * 2 / 3).max(1);
    for i in 0..n_threads {
        let sub = SUBREDDITS[i % SUBREDDITS.len()].to_string();
        let author = format!("op{}", i % n_authors);
        let tid = format!("t{i:04}");
        let mut t = BASE_UTC + i as i64 * 400_000 + rng.gen_range(0..3_600);
        let kind = i % 10;
        let post_bias = rng.gen_range(-1.0..0.3);
        let post = Publication {
            id: tid.clone(),
            parent_id: None,
            thread_id: tid.clone(),
            author: author.clone(),
            created_utc: t,
            text: format!("{}\n{}", toned_text(&mut rng, post_bias), toned_text(&mut rng, post_bias)),
            subreddit: sub.clone(),
            kind: PublicationKind::Post,
        };
        let mut thread_users = vec![(author.clone(), true)];
        pubs.push(post);

        let n_comments = rng.gen_range(2..=8);
        let mut last_id = tid.clone();
        let mut authored = 0;
        for j in 0..n_comments {
            let by_author = match kind {
                7 => false,
                8 => true,
                _ => j == n_comments - 1 || (j > 0 && rng.gen::<f64>() < 0.3),
            };
            let commenter = if by_author { author.clone() } else { format!("helper{}", rng.gen_range(0..30)) };
            authored += by_author as usize;
            let gap = if kind == 9 && j == 2 { 100_000 } else { rng.gen_range(60..20_000) };
            t += gap;
            let id = format!("{tid}c{j}");
            let parent = if rng.gen::<f64>() < 0.5 { tid.clone() } else { last_id.clone() };
            let bias = if by_author { rng.gen_range(-0.3..1.0) } else { rng.gen_range(0.0..1.0) };
            pubs.push(Publication {
                id: id.clone(),
                parent_id: Some(parent),
                thread_id: tid.clone(),
                author: commenter.clone(),
                created_utc: t,
                text: toned_text(&mut rng, bias),
                subreddit: sub.clone(),
                kind: PublicationKind::Comment,
            });
            thread_users.push((commenter, false));
            last_id = id;
        }
        let outcome = match kind {
            7 => Err(RejectReason::AuthorNeverComments),
            8 => Err(RejectReason::NoOtherCommenter),
            9 if n_comments > 2 => Err(RejectReason::GapExceeded),
            _ => Ok(()),
        };
        debug_assert!(kind == 7 || authored > 0);
        expected.insert(tid, outcome);
        for key in [sub.as_str(), ALL_SUBREDDITS] {
            let u = users.entry(key.to_string()).or_default();
            for (name, is_post) in &thread_users {
                if *is_post {
                    u.posters.insert(name.clone());
                } else {
                    u.commenters.insert(name.clone());
                }
            }
            u.threads += 1;
            u.comments += n_comments as u64;
        }
    }
    SynthCorpus {
        publications: pubs,
        tallies: users.into_iter().map(|(k, u)| (k, u.tallies())).collect(),
        expected,
    }
}

/// The order-dependent part of the recoverable-signal target: half the
/// most recent change in tone within `S`.
pub fn recency_perturbation(tones: &[f64]) -> f64 {
    match tones {
        [.., prev, last] => 0.5 * (last - prev),
        _ => 0.0,
    }
}

/// `clamp(0.6 * EmT(last) + 0.4 * mean EmT + recency_perturbation, -1, 1)`.
pub fn recoverable_target(tones: &[f64]) -> f64 {
    let last = *tones.last().expect("nonempty S");
    let mean = tones.iter().sum::<f64>() / tones.len() as f64;
    (0.6 * last + 0.4 * mean + recency_perturbation(tones)).clamp(-1.0, 1.0)
}

/// Scored segments of 2 to 16 messages whose targets follow [`recoverable_target`].
pub fn recoverable_signal_segments(n: usize, seed: u64, scorer: &dyn ToneScorer) -> Vec<ThreadSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(2..=16);
            let other_at = rng.gen_range(1..len);
            let mut t = BASE_UTC + i as i64 * 100_000;
            let messages: Vec<Message> = (0..len)
                .map(|j| {
                    let is_author = j == 0 || (j != other_at && rng.gen::<f64>() < 0.25);
                    let bias = rng.gen_range(-1.0..1.0);
                    let text = toned_text(&mut rng, bias);
                    t += rng.gen_range(60..3_600);
                    Message {
                        id: format!("sig{i:05}m{j}"),
                        author: if is_author { "u".into() } else { format!("h{}", rng.gen_range(0..50)) },
                        created_utc: t,
                        emt: Some(scorer.score_text(&text).compound),
                        text,
                        is_post_author: is_author,
                    }
                })
                .collect();
            let tones: Vec<f64> = messages.iter().map(|m| m.tone()).collect();
            ThreadSegment {
                segment_id: format!("sig{i:05}"),
                subreddit: "SYN".into(),
                author: "u".into(),
                target: Message {
                    id: format!("sig{i:05}t"),
                    author: "u".into(),
                    created_utc: t + 60,
                    text: String::new(),
                    is_post_author: true,
                    emt: Some(recoverable_target(&tones)),
                },
                n: len,
                messages,
                truncated: false,
                cut_by_overlap: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_threads, descriptive_stats, parse_record};
    use crate::threadsel::{select_all, DEFAULT_MAX_GAP_SECS};
    use crate::tone::VaderTone;

    #[test]
    fn stats_match_generator_tallies() {
        let c = synthetic_corpus(50, 1);
        let table = descriptive_stats(&c.publications);
        for (sub, want) in &c.tallies {
            let row = table.row(sub).unwrap();
            assert_eq!(
                (row.threads, row.comments, row.unique_users, row.posting_users, row.commenters),
                (want.threads, want.comments, want.unique_users, want.posting_users, want.commenters),
                "{sub}"
            );
        }
        assert_eq!(c.tallies[ALL_SUBREDDITS].threads, 50);
    }

    #[test]
    fn selection_matches_intent() {
        let c = synthetic_corpus(50, 2);
        let forest = build_threads(c.publications.iter().cloned());
        let (segments, report) = select_all(&forest, DEFAULT_MAX_GAP_SECS);
        let got: BTreeMap<String, Result<(), RejectReason>> = report.decisions.into_iter().collect();
        assert_eq!(got, c.expected);
        assert_eq!(segments.len(), c.expected.values().filter(|r| r.is_ok()).count());
    }

    #[test]
    fn dump_lines_round_trip() {
        let c = synthetic_corpus(10, 3);
        let mut parsed: Vec<Publication> = c.dump_lines().iter().map(|l| parse_record(l).unwrap()).collect();
        let mut want = c.publications.clone();
        parsed.sort_by(|a, b| a.id.cmp(&b.id));
        want.sort_by(|a, b| a.id.cmp(&b.id));
        assert_eq!(parsed, want);
    }

    #[test]
    fn recoverable_targets() {
        assert_eq!(recoverable_target(&[0.0, 0.5]), (0.3 + 0.1 + 0.25f64).clamp(-1.0, 1.0));
        let segs = recoverable_signal_segments(50, 4, &VaderTone::default());
        let tones: Vec<f64> = segs.iter().flat_map(|s| s.messages.iter().map(|m| m.tone())).collect();
        assert!(tones.iter().any(|t| *t > 0.5) && tones.iter().any(|t| *t < -0.5));
        for s in &segs {
            s.check(DEFAULT_MAX_GAP_SECS).unwrap();
            let t: Vec<f64> = s.messages.iter().map(|m| m.tone()).collect();
            assert_eq!(s.target.tone(), recoverable_target(&t));
        }
    }
}
