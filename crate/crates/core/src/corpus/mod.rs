//! Forum dump ingestion, thread reconstruction and the canonical corpus file.

mod io;
mod record;
mod stats;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use io::{
    expand_inputs, ingest, open_maybe_compressed, read_corpus, write_corpus, IngestOptions, IngestReport, SourceChecksum,
};
pub use record::{parse_record, strip_fullname, Publication, PublicationKind, DELETED_AUTHOR};
pub use stats::{descriptive_stats, Distribution, StatsTable, SubredditStats, ALL_SUBREDDITS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("duplicate publication id {0}")]
    DuplicateId(String),
    #[error("no input files matched {0}")]
    NoInput(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A post with its comments in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadTree {
    pub post: Publication,
    pub comments: Vec<Publication>,
}

impl ThreadTree {
    /// Post followed by comments; the chronological message order of the thread.
    pub fn publications(&self) -> impl Iterator<Item = &Publication> {
        std::iter::once(&self.post).chain(self.comments.iter())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThreadForest {
    /// Sorted by thread id.
    pub threads: Vec<ThreadTree>,
    /// Comments whose thread has no post in the input.
    pub orphan_count: usize,
}

/// Total order on publications inside a thread: timestamp, then id.
pub fn chronological(a: &Publication, b: &Publication) -> std::cmp::Ordering {
    (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id))
}

/// Groups publications into threads. Output is independent of input order.
pub fn build_threads<I>(pubs: I) -> ThreadForest
where
    I: IntoIterator<Item = Publication>,
{
    let mut posts: BTreeMap<String, Publication> = BTreeMap::new();
    let mut comments: HashMap<String, Vec<Publication>> = HashMap::new();
    for p in pubs {
        match p.kind {
            PublicationKind::Post => {
                // keep the smallest record under duplicate ids so the result is order independent
                match posts.get(&p.id) {
                    Some(existing) if (existing.created_utc, &existing.text) <= (p.created_utc, &p.text) => {}
                    _ => {
                        posts.insert(p.id.clone(), p);
                    }
                }
            }
            PublicationKind::Comment => comments.entry(p.thread_id.clone()).or_default().push(p),
        }
    }

    let mut orphan_count = 0;
    for (thread_id, list) in &comments {
        if !posts.contains_key(thread_id) {
            orphan_count += list.len();
        }
    }

    let threads = posts
        .into_values()
        .map(|post| {
            let mut cs = comments.remove(&post.id).unwrap_or_default();
            cs.sort_by(chronological);
            ThreadTree { post, comments: cs }
        })
        .collect();

    ThreadForest {
        threads,
        orphan_count,
    }
}
