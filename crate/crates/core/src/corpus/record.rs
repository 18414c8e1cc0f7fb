use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PublicationKind {
    Post,
    Comment,
}

/// One post or comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub thread_id: String,
    pub author: String,
    pub created_utc: i64,
    pub text: String,
    pub subreddit: String,
    pub kind: PublicationKind,
}

pub const DELETED_AUTHOR: &str = "[deleted]";

impl Publication {
    pub fn is_post(&self) -> bool {
        self.kind == PublicationKind::Post
    }

    pub fn has_deleted_author(&self) -> bool {
        self.author == DELETED_AUTHOR
    }

    /// Checks the structural invariants of a publication.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let structural = match self.kind {
            PublicationKind::Post => self.parent_id.is_none() && self.id == self.thread_id,
            PublicationKind::Comment => self.parent_id.is_some() && self.id != self.thread_id,
        };
        if !structural {
            return Err(CorpusError::InvalidField {
                field: "kind",
                reason: format!("inconsistent post/comment linkage for id {}", self.id),
            });
        }
        if self.created_utc <= 0 {
            return Err(CorpusError::InvalidField {
                field: "created_utc",
                reason: format!("non-positive timestamp {}", self.created_utc),
            });
        }
        Ok(())
    }

    /// Key of the canonical corpus order.
    pub fn canonical_key(&self) -> (&str, i64, &str) {
        (&self.thread_id, self.created_utc, &self.id)
    }
}

/// Drops a reddit fullname type prefix (`t1_`, `t3_`, ...).
pub fn strip_fullname(s: &str) -> &str {
    match s.split_once('_') {
        Some((prefix, rest))
            if prefix.len() == 2 && prefix.starts_with('t') && prefix[1..].chars().all(|c| c.is_ascii_digit()) =>
        {
            rest
        }
        _ => s,
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<&'a str, CorpusError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(Value::Null) | None => Err(CorpusError::MissingField(key)),
        Some(other) => Err(CorpusError::InvalidField {
            field: key,
            reason: format!("expected string, found {other}"),
        }),
    }
}

fn get_timestamp(obj: &Map<String, Value>) -> Result<i64, CorpusError> {
    let invalid = |reason: String| CorpusError::InvalidField {
        field: "created_utc",
        reason,
    };
    let ts = match obj.get("created_utc") {
        None | Some(Value::Null) => return Err(CorpusError::MissingField("created_utc")),
        Some(Value::Number(n)) => {
            if let Some(i) = n.as_i64() {
                i
            } else {
                n.as_f64().map(|f| f as i64).ok_or_else(|| invalid(n.to_string()))?
            }
        }
        // Some dump months store the timestamp as a string.
        Some(Value::String(s)) => s
            .parse::<i64>()
            .or_else(|_| s.parse::<f64>().map(|f| f as i64))
            .map_err(|_| invalid(s.clone()))?,
        Some(other) => return Err(invalid(other.to_string())),
    };
    if ts <= 0 {
        return Err(invalid(format!("non-positive timestamp {ts}")));
    }
    Ok(ts)
}

/// Parses one line of a forum dump (submission or comment record).
///
/// Submissions carry `title`/`selftext`; comments carry `body`, `parent_id`
/// and `link_id`. Deleted bodies are kept verbatim.
pub fn parse_record(line: &str) -> Result<Publication, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::MalformedRecord("record is not an object".into()));
    };

    let id = get_str(&obj, "id")?.to_string();
    let author = get_str(&obj, "author")?.to_string();
    let created_utc = get_timestamp(&obj)?;
    let subreddit = get_str(&obj, "subreddit")?.to_string();

    let publication = if obj.contains_key("title") {
        let title = get_str(&obj, "title")?;
        let selftext = match obj.get("selftext") {
            Some(Value::String(s)) => s.as_str(),
            _ => "",
        };
        Publication {
            thread_id: id.clone(),
            id,
            parent_id: None,
            author,
            created_utc,
            text: format!("{title}\n{selftext}"),
            subreddit,
            kind: PublicationKind::Post,
        }
    } else if obj.contains_key("body") {
        let body = get_str(&obj, "body")?.to_string();
        let parent = strip_fullname(get_str(&obj, "parent_id")?).to_string();
        let link = strip_fullname(get_str(&obj, "link_id")?).to_string();
        Publication {
            id,
            parent_id: Some(parent),
            thread_id: link,
            author,
            created_utc,
            text: body,
            subreddit,
            kind: PublicationKind::Comment,
        }
    } else {
        return Err(CorpusError::MissingField("title|body"));
    };
    publication.validate()?;
    Ok(publication)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_post() {
        let p = parse_record(r#"{"id":"abc","author":"u1","created_utc":1500000000,"subreddit":"Anxiety","title":"Hi","selftext":""}"#).unwrap();
        assert_eq!(p.kind, PublicationKind::Post);
        assert_eq!(p.text, "Hi\n");
        assert_eq!(p.thread_id, "abc");
        assert_eq!(p.parent_id, None);
    }

    #[test]
    fn missing_selftext_is_empty() {
        let p = parse_record(r#"{"id":"abc","author":"u1","created_utc":"1500000000","subreddit":"a","title":"T"}"#).unwrap();
        assert_eq!(p.text, "T\n");
        assert_eq!(p.created_utc, 1_500_000_000);
    }

    #[test]
    fn comment_strips_fullnames() {
        let p = parse_record(
            r#"{"id":"c1","author":"u2","created_utc":1500000100,"subreddit":"a","body":"[deleted]","parent_id":"t1_c0","link_id":"t3_abc"}"#,
        )
        .unwrap();
        assert_eq!(p.kind, PublicationKind::Comment);
        assert_eq!(p.thread_id, "abc");
        assert_eq!(p.parent_id.as_deref(), Some("c0"));
        assert_eq!(p.text, "[deleted]");
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_record("not json"), Err(CorpusError::MalformedRecord(_))));
        assert!(matches!(parse_record("[1,2]"), Err(CorpusError::MalformedRecord(_))));
        assert!(matches!(
            parse_record(r#"{"id":"x","created_utc":1,"subreddit":"a","title":"t"}"#),
            Err(CorpusError::MissingField("author"))
        ));
        assert!(matches!(
            parse_record(r#"{"id":"x","author":"a","created_utc":1,"subreddit":"a"}"#),
            Err(CorpusError::MissingField("title|body"))
        ));
        assert!(matches!(
            parse_record(r#"{"id":"x","author":"a","created_utc":0,"subreddit":"a","title":"t"}"#),
            Err(CorpusError::InvalidField { field: "created_utc", .. })
        ));
    }

    #[test]
    fn fullname_prefixes() {
        assert_eq!(strip_fullname("t3_abc"), "abc");
        assert_eq!(strip_fullname("t1_x_y"), "x_y");
        assert_eq!(strip_fullname("plain"), "plain");
        assert_eq!(strip_fullname("ab_cd"), "ab_cd");
    }
}
