use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_threads, CorpusError, Publication, PublicationKind};
use crate::jsonl::{self, sha256_file};

/// Opens a dump file, decompressing by extension (`.gz`, `.zst`/`.zstd`, `.bz2`).
pub fn open_maybe_compressed(path: &Path) -> Result<Box<dyn BufRead + Send>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let reader: Box<dyn Read + Send> = match ext {
        "gz" => Box::new(flate2::read::MultiGzDecoder::new(file)),
        "bz2" => Box::new(bzip2::read::MultiBzDecoder::new(file)),
        "zst" | "zstd" => {
            let mut dec = zstd::stream::read::Decoder::new(file).map_err(io_err)?;
            // forum dumps are compressed with a 2 GiB window
            dec.window_log_max(31).map_err(io_err)?;
            Box::new(dec)
        }
        _ => Box::new(file),
    };
    Ok(Box::new(BufReader::with_capacity(1 << 20, reader)))
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Glob patterns or plain paths.
    pub inputs: Vec<String>,
    /// Case-insensitive community filter; empty keeps everything.
    pub subreddits: Vec<String>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceChecksum {
    pub path: String,
    pub sha256: String,
    pub lines: u64,
}

/// Sidecar manifest written next to the canonical corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_parsed: u64,
    pub malformed_lines: u64,
    pub filtered_out: u64,
    pub duplicate_ids: u64,
    pub posts: u64,
    pub comments: u64,
    pub orphan_comments: u64,
    pub sources: Vec<SourceChecksum>,
    pub corpus_sha256: String,
}

struct ShardResult {
    pubs: Vec<Publication>,
    malformed: u64,
    filtered: u64,
    lines: u64,
}

fn read_shard(path: &Path, subreddits: &[String]) -> Result<ShardResult, CorpusError> {
    let reader = open_maybe_compressed(path)?;
    let mut res = ShardResult {
        pubs: Vec::new(),
        malformed: 0,
        filtered: 0,
        lines: 0,
    };
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        res.lines += 1;
        match super::parse_record(&line) {
            Ok(p) => {
                if subreddits.is_empty() || subreddits.iter().any(|s| s.eq_ignore_ascii_case(&p.subreddit)) {
                    res.pubs.push(p);
                } else {
                    res.filtered += 1;
                }
            }
            Err(e) => {
                log::warn!("{}:{}: {e}", path.display(), res.lines);
                res.malformed += 1;
            }
        }
    }
    Ok(res)
}

pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>, CorpusError> {
    let mut paths = Vec::new();
    for pat in patterns {
        let before = paths.len();
        if let Ok(entries) = glob::glob(pat) {
            paths.extend(entries.filter_map(Result::ok).filter(|p| p.is_file()));
        }
        if paths.len() == before && Path::new(pat).is_file() {
            paths.push(PathBuf::from(pat));
        }
        if paths.len() == before {
            return Err(CorpusError::NoInput(pat.clone()));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

/// Sorts into canonical order and drops repeated ids, keeping the record
/// that serialises smallest so the choice is independent of input order.
fn canonicalize(mut pubs: Vec<Publication>) -> (Vec<Publication>, u64) {
    let mut by_id: BTreeMap<String, (String, Publication)> = BTreeMap::new();
    let mut duplicates = 0;
    for p in pubs.drain(..) {
        let ser = serde_json::to_string(&p).expect("publication serialises");
        match by_id.get(&p.id) {
            Some((existing, _)) => {
                duplicates += 1;
                if ser < *existing {
                    by_id.insert(p.id.clone(), (ser, p));
                }
            }
            None => {
                by_id.insert(p.id.clone(), (ser, p));
            }
        }
    }
    let mut out: Vec<Publication> = by_id.into_values().map(|(_, p)| p).collect();
    out.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    (out, duplicates)
}

pub fn write_corpus(path: &Path, pubs: &[Publication]) -> std::io::Result<()> {
    jsonl::write_jsonl(path, pubs)
}

pub fn read_corpus(path: &Path) -> std::io::Result<Vec<Publication>> {
    jsonl::read_jsonl(path)
}

pub fn manifest_path(corpus: &Path) -> PathBuf {
    let mut s = corpus.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Parses every input shard (in parallel), writes the canonical corpus and
/// its manifest, and returns the manifest.
pub fn ingest(opts: &IngestOptions) -> Result<IngestReport, CorpusError> {
    let paths = expand_inputs(&opts.inputs)?;
    let shards: Vec<(PathBuf, ShardResult)> = paths
        .par_iter()
        .map(|p| read_shard(p, &opts.subreddits).map(|r| (p.clone(), r)))
        .collect::<Result<_, _>>()?;

    let mut sources = Vec::new();
    let mut all = Vec::new();
    let (mut malformed, mut filtered) = (0, 0);
    for (path, shard) in shards {
        let sha256 = sha256_file(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        sources.push(SourceChecksum {
            path: path.display().to_string(),
            sha256,
            lines: shard.lines,
        });
        malformed += shard.malformed;
        filtered += shard.filtered;
        all.extend(shard.pubs);
    }
    let records_parsed = all.len() as u64;
    let (pubs, duplicate_ids) = canonicalize(all);
    let posts = pubs.iter().filter(|p| p.kind == PublicationKind::Post).count() as u64;
    let comments = pubs.len() as u64 - posts;
    let forest = build_threads(pubs.iter().cloned());

    let io_err = |source| CorpusError::Io {
        path: opts.out.display().to_string(),
        source,
    };
    write_corpus(&opts.out, &pubs).map_err(io_err)?;
    let report = IngestReport {
        records_parsed,
        malformed_lines: malformed,
        filtered_out: filtered,
        duplicate_ids,
        posts,
        comments,
        orphan_comments: forest.orphan_count as u64,
        sources,
        corpus_sha256: sha256_file(&opts.out).map_err(io_err)?,
    };
    jsonl::write_json(&manifest_path(&opts.out), &report).map_err(io_err)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const LINES: &str = concat!(
        r#"{"id":"p1","author":"a","created_utc":100,"subreddit":"Anxiety","title":"T","selftext":"body"}"#,
        "\n",
        r#"{"id":"c1","author":"b","created_utc":120,"subreddit":"Anxiety","body":"hi","parent_id":"t3_p1","link_id":"t3_p1"}"#,
        "\n",
        r#"{"id":"c1","author":"b","created_utc":120,"subreddit":"Anxiety","body":"hi","parent_id":"t3_p1","link_id":"t3_p1"}"#,
        "\n",
        r#"{"id":"c9","author":"b","created_utc":130,"subreddit":"Anxiety","body":"lost","parent_id":"t3_zz","link_id":"t3_zz"}"#,
        "\n",
        r#"{"id":"x1","author":"q","created_utc":130,"subreddit":"other","title":"T","selftext":""}"#,
        "\n",
        "garbage\n",
    );

    #[test]
    fn compressed_and_plain_inputs_agree() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("d.jsonl");
        std::fs::write(&plain, LINES).unwrap();
        let gz = dir.path().join("d.jsonl.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::default());
        enc.write_all(LINES.as_bytes()).unwrap();
        enc.finish().unwrap();
        let zst = dir.path().join("d.jsonl.zst");
        std::fs::write(&zst, zstd::encode_all(LINES.as_bytes(), 3).unwrap()).unwrap();
        let bz = dir.path().join("d.jsonl.bz2");
        let mut enc = bzip2::write::BzEncoder::new(File::create(&bz).unwrap(), bzip2::Compression::default());
        enc.write_all(LINES.as_bytes()).unwrap();
        enc.finish().unwrap();

        let mut outputs = Vec::new();
        for (i, input) in [&plain, &gz, &zst, &bz].iter().enumerate() {
            let out = dir.path().join(format!("corpus{i}.jsonl"));
            let report = ingest(&IngestOptions {
                inputs: vec![input.display().to_string()],
                subreddits: vec!["anxiety".into()],
                out: out.clone(),
            })
            .unwrap();
            assert_eq!(report.records_parsed, 4);
            assert_eq!(report.malformed_lines, 1);
            assert_eq!(report.filtered_out, 1);
            assert_eq!(report.duplicate_ids, 1);
            assert_eq!(report.posts, 1);
            assert_eq!(report.comments, 2);
            assert_eq!(report.orphan_comments, 1);
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn ingest_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.jsonl");
        std::fs::write(&input, LINES).unwrap();
        let out = dir.path().join("c.jsonl");
        let opts = IngestOptions {
            inputs: vec![input.display().to_string()],
            subreddits: vec![],
            out: out.clone(),
        };
        let r1 = ingest(&opts).unwrap();
        let first = std::fs::read(&out).unwrap();
        let r2 = ingest(&opts).unwrap();
        assert_eq!(first, std::fs::read(&out).unwrap());
        assert_eq!(r1, r2);
        assert!(manifest_path(&out).exists());
        let back = read_corpus(&out).unwrap();
        assert_eq!(back.len(), 4);
    }

    #[test]
    fn missing_input_is_an_error() {
        let err = ingest(&IngestOptions {
            inputs: vec!["/nonexistent/*.zst".into()],
            subreddits: vec![],
            out: PathBuf::from("/tmp/never"),
        });
        assert!(matches!(err, Err(CorpusError::NoInput(_))));
    }
}
