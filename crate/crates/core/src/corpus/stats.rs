use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{build_threads, Publication, PublicationKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub median: f64,
    pub max: u64,
}

impl Distribution {
    fn of(mut values: Vec<u64>) -> Distribution {
        if values.is_empty() {
            return Distribution { median: 0.0, max: 0 };
        }
        values.sort_unstable();
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2] as f64
        } else {
            (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
        };
        Distribution {
            median,
            max: values[n - 1],
        }
    }
}

/// Interaction statistics of one community (or of the whole corpus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubredditStats {
    pub subreddit: String,
    pub threads: u64,
    pub comments: u64,
    pub unique_users: u64,
    pub posting_users: u64,
    pub commenters: u64,
    pub posts_per_poster: Distribution,
    pub comments_per_commenter: Distribution,
    pub comments_in_thread: Distribution,
    pub post_length_chars: Distribution,
    pub comment_length_chars: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    /// One row per community, sorted by name, followed by the `ALL` row.
    pub rows: Vec<SubredditStats>,
}

pub const ALL_SUBREDDITS: &str = "ALL";

fn stats_for(name: &str, pubs: &[&Publication]) -> SubredditStats {
    let mut posters: HashMap<&str, u64> = HashMap::new();
    let mut commenters: HashMap<&str, u64> = HashMap::new();
    let mut users: HashSet<&str> = HashSet::new();
    let mut post_len = Vec::new();
    let mut comment_len = Vec::new();
    for p in pubs {
        let known = !p.has_deleted_author();
        if known {
            users.insert(&p.author);
        }
        let len = p.text.chars().count() as u64;
        match p.kind {
            PublicationKind::Post => {
                post_len.push(len);
                if known {
                    *posters.entry(&p.author).or_default() += 1;
                }
            }
            PublicationKind::Comment => {
                comment_len.push(len);
                if known {
                    *commenters.entry(&p.author).or_default() += 1;
                }
            }
        }
    }
    let forest = build_threads(pubs.iter().map(|p| (*p).clone()));
    SubredditStats {
        subreddit: name.to_string(),
        threads: post_len.len() as u64,
        comments: comment_len.len() as u64,
        unique_users: users.len() as u64,
        posting_users: posters.len() as u64,
        commenters: commenters.len() as u64,
        posts_per_poster: Distribution::of(posters.into_values().collect()),
        comments_per_commenter: Distribution::of(commenters.into_values().collect()),
        comments_in_thread: Distribution::of(forest.threads.iter().map(|t| t.comments.len() as u64).collect()),
        post_length_chars: Distribution::of(post_len),
        comment_length_chars: Distribution::of(comment_len),
    }
}

/// Per-community counts and median/max distributions.
///
/// `[deleted]` authors cannot be told apart and are left out of the user
/// counts; their publications still count toward threads, comments and lengths.
pub fn descriptive_stats(pubs: &[Publication]) -> StatsTable {
    let mut groups: BTreeMap<&str, Vec<&Publication>> = BTreeMap::new();
    for p in pubs {
        groups.entry(&p.subreddit).or_default().push(p);
    }
    let mut rows: Vec<SubredditStats> = groups.iter().map(|(name, list)| stats_for(name, list)).collect();
    let all: Vec<&Publication> = pubs.iter().collect();
    rows.push(stats_for(ALL_SUBREDDITS, &all));
    StatsTable { rows }
}

impl StatsTable {
    pub fn row(&self, subreddit: &str) -> Option<&SubredditStats> {
        self.rows.iter().find(|r| r.subreddit == subreddit)
    }

    /// Plain-text rendering, one column per community.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = write!(s, "{:<28}", "");
        for r in &self.rows {
            let _ = write!(s, "{:>16}", r.subreddit);
        }
        s.push('\n');
        let counts: [(&str, fn(&SubredditStats) -> u64); 5] = [
            ("Threads (posts)", |r| r.threads),
            ("Comments", |r| r.comments),
            ("Unique users", |r| r.unique_users),
            ("Posting users", |r| r.posting_users),
            ("Commenters", |r| r.commenters),
        ];
        for (label, f) in counts {
            let _ = write!(s, "{label:<28}");
            for r in &self.rows {
                let _ = write!(s, "{:>16}", f(r));
            }
            s.push('\n');
        }
        let dists: [(&str, fn(&SubredditStats) -> Distribution); 5] = [
            ("Posts per posting user", |r| r.posts_per_poster),
            ("Comments per commenter", |r| r.comments_per_commenter),
            ("Comments in thread", |r| r.comments_in_thread),
            ("Post length (chars)", |r| r.post_length_chars),
            ("Comment length (chars)", |r| r.comment_length_chars),
        ];
        for (label, f) in dists {
            let _ = write!(s, "{label:<28}");
            for r in &self.rows {
                let d = f(r);
                let _ = write!(s, "{:>16}", format!("{} / {}", d.median, d.max));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_post_single_comment() {
        let post = Publication {
            id: "p".into(),
            parent_id: None,
            thread_id: "p".into(),
            author: "A".into(),
            created_utc: 1,
            text: "0123456789".into(),
            subreddit: "ANX".into(),
            kind: PublicationKind::Post,
        };
        let comment = Publication {
            id: "c".into(),
            parent_id: Some("p".into()),
            thread_id: "p".into(),
            author: "B".into(),
            created_utc: 2,
            text: "abcd".into(),
            subreddit: "ANX".into(),
            kind: PublicationKind::Comment,
        };
        let table = descriptive_stats(&[post, comment]);
        let row = table.row("ANX").unwrap();
        assert_eq!(row.threads, 1);
        assert_eq!(row.comments, 1);
        assert_eq!(row.unique_users, 2);
        assert_eq!(row.post_length_chars.median, 10.0);
        assert_eq!(row.comment_length_chars.median, 4.0);
        assert_eq!(row.comments_in_thread, Distribution { median: 1.0, max: 1 });
        assert_eq!(table.row(ALL_SUBREDDITS).unwrap().threads, 1);
        assert!(table.render().contains("Threads (posts)"));
    }

    #[test]
    fn even_median_averages() {
        assert_eq!(Distribution::of(vec![4, 1, 3, 2]).median, 2.5);
        assert_eq!(Distribution::of(vec![]).max, 0);
    }
}
