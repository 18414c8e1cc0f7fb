use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::{embed_message, EmbedError, Embedding, EmbeddingProvider};

const MAGIC: &[u8; 8] = b"TSEMB001";
const HEADER_LEN: u64 = 16;
const KEY_LEN: usize = 32;
const SUM_LEN: usize = 8;
const INDEX_ENTRY: usize = KEY_LEN + 8;

type Key = [u8; KEY_LEN];

fn cache_key(provider_id: &str, text_hash: &[u8; 32]) -> Key {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0u8]);
    h.update(text_hash);
    h.finalize().into()
}

fn checksum(key: &Key, payload: &[u8]) -> [u8; SUM_LEN] {
    let mut h = Sha256::new();
    h.update(key);
    h.update(payload);
    let d = h.finalize();
    d[..SUM_LEN].try_into().unwrap()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
}

struct Writer {
    data: File,
    index: File,
    len: u64,
}

/// Append-only store of fixed-width embedding records.
///
/// Data file: 16-byte header (magic, dim), then records of
/// `key | dim little-endian f32 | checksum`. The `.idx` sidecar maps keys to
/// record offsets and is rebuilt from the data file when stale.
pub struct EmbeddingCache {
    path: PathBuf,
    dim: usize,
    reader: File,
    index: RwLock<HashMap<Key, u64>>,
    writer: Option<Mutex<Writer>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl std::fmt::Debug for EmbeddingCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingCache")
            .field("path", &self.path)
            .field("dim", &self.dim)
            .field("read_only", &self.writer.is_none())
            .finish()
    }
}

fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".idx");
    PathBuf::from(s)
}

#[cfg(unix)]
fn read_at(f: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(f, buf, offset)
}

#[cfg(windows)]
fn read_at(f: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = f.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

impl EmbeddingCache {
    fn record_len(&self) -> u64 {
        (KEY_LEN + 4 * self.dim + SUM_LEN) as u64
    }

    /// Opens or creates a cache for vectors of width `dim`.
    pub fn open(path: &Path, dim: usize) -> Result<Self, EmbedError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut data = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        if data.metadata()?.len() == 0 {
            let mut header = Vec::with_capacity(HEADER_LEN as usize);
            header.extend_from_slice(MAGIC);
            header.extend_from_slice(&(dim as u32).to_le_bytes());
            header.extend_from_slice(&0u32.to_le_bytes());
            data.write_all(&header)?;
            data.flush()?;
        }
        let mut index = OpenOptions::new().read(true).append(true).create(true).open(index_path(path))?;
        let mut cache = Self::from_files(path, dim, File::open(path)?)?;
        let len = data.seek(SeekFrom::End(0))?;
        cache.load_index(Some(&mut index), len)?;
        cache.writer = Some(Mutex::new(Writer { data, index, len }));
        Ok(cache)
    }

    /// Opens an existing cache; misses are computed but not stored.
    pub fn open_read_only(path: &Path, dim: usize) -> Result<Self, EmbedError> {
        let reader = File::open(path)?;
        let len = reader.metadata()?.len();
        let mut cache = Self::from_files(path, dim, reader)?;
        cache.load_index(None, len)?;
        Ok(cache)
    }

    fn from_files(path: &Path, dim: usize, reader: File) -> Result<Self, EmbedError> {
        let mut header = [0u8; HEADER_LEN as usize];
        read_at(&reader, &mut header, 0).map_err(|_| EmbedError::CacheCorrupt("short header".into()))?;
        if &header[..8] != MAGIC {
            return Err(EmbedError::CacheCorrupt("bad magic".into()));
        }
        let stored = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if stored != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                found: stored,
            });
        }
        Ok(EmbeddingCache {
            path: path.to_path_buf(),
            dim,
            reader,
            index: RwLock::new(HashMap::new()),
            writer: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    /// Reads the sidecar, then indexes any records it does not cover.
    /// A sidecar pointing past the data is discarded and rebuilt.
    fn load_index(&mut self, sidecar: Option<&mut File>, data_len: u64) -> Result<(), EmbedError> {
        let rec = self.record_len();
        let body = data_len - HEADER_LEN;
        // a torn final record is ignored; the next append overwrites nothing
        let n_records = body / rec;
        let mut map = HashMap::new();
        let mut bytes = Vec::new();
        match &sidecar {
            Some(f) => {
                let mut f: &File = f;
                f.seek(SeekFrom::Start(0))?;
                f.read_to_end(&mut bytes)?;
            }
            None => {
                if let Ok(mut f) = File::open(index_path(&self.path)) {
                    f.read_to_end(&mut bytes)?;
                }
            }
        }
        let mut covered = 0u64;
        let mut valid = true;
        for entry in bytes.chunks_exact(INDEX_ENTRY) {
            let key: Key = entry[..KEY_LEN].try_into().unwrap();
            let off = u64::from_le_bytes(entry[KEY_LEN..].try_into().unwrap());
            if off < HEADER_LEN || (off - HEADER_LEN) % rec != 0 || off + rec > HEADER_LEN + n_records * rec {
                valid = false;
                break;
            }
            map.entry(key).or_insert(off);
            covered = covered.max((off - HEADER_LEN) / rec + 1);
        }
        if !valid {
            map.clear();
            covered = 0;
        }
        let mut missing = Vec::new();
        for i in covered..n_records {
            let off = HEADER_LEN + i * rec;
            let mut key = [0u8; KEY_LEN];
            read_at(&self.reader, &mut key, off)?;
            if let std::collections::hash_map::Entry::Vacant(e) = map.entry(key) {
                e.insert(off);
                missing.push((key, off));
            }
        }
        *self.index.get_mut().unwrap() = map;

        let Some(sidecar) = sidecar else {
            // read-only: nothing to repair on disk
            return Ok(());
        };
        if !valid {
            sidecar.set_len(0)?;
            let map = self.index.get_mut().unwrap();
            let mut all: Vec<_> = map.iter().map(|(k, o)| (*k, *o)).collect();
            all.sort_by_key(|(_, o)| *o);
            missing = all;
        }
        for (key, off) in missing {
            sidecar.write_all(&key)?;
            sidecar.write_all(&off.to_le_bytes())?;
        }
        sidecar.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_read_only(&self) -> bool {
        self.writer.is_none()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.len() as u64,
        }
    }

    fn read_record(&self, key: &Key, off: u64) -> Result<Vec<f32>, EmbedError> {
        let mut buf = vec![0u8; self.record_len() as usize];
        read_at(&self.reader, &mut buf, off)
            .map_err(|e| EmbedError::CacheCorrupt(format!("record at {off}: {e}")))?;
        let payload = &buf[KEY_LEN..KEY_LEN + 4 * self.dim];
        if &buf[..KEY_LEN] != key || buf[KEY_LEN + 4 * self.dim..] != checksum(key, payload) {
            return Err(EmbedError::CacheCorrupt(format!("checksum mismatch at offset {off}")));
        }
        Ok(payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Looks up a stored vector.
    pub fn get(&self, provider_id: &str, text: &str) -> Result<Option<Embedding>, EmbedError> {
        let hash = super::text_hash(text);
        let key = cache_key(provider_id, &hash);
        let off = self.index.read().unwrap().get(&key).copied();
        let Some(off) = off else { return Ok(None) };
        let vector = self.read_record(&key, off)?;
        Ok(Some(Embedding {
            empty: super::normalize_text(text).is_empty(),
            vector,
            provider_id: provider_id.to_string(),
            text_hash: hash,
        }))
    }

    fn append(&self, e: &Embedding) -> Result<(), EmbedError> {
        let Some(writer) = &self.writer else { return Ok(()) };
        let key = cache_key(&e.provider_id, &e.text_hash);
        let mut w = writer.lock().unwrap();
        if self.index.read().unwrap().contains_key(&key) {
            return Ok(());
        }
        let mut rec = Vec::with_capacity(self.record_len() as usize);
        rec.extend_from_slice(&key);
        for x in &e.vector {
            rec.extend_from_slice(&x.to_le_bytes());
        }
        let sum = checksum(&key, &rec[KEY_LEN..]);
        rec.extend_from_slice(&sum);
        let off = w.len;
        w.data.write_all(&rec)?;
        w.data.flush()?;
        w.len += rec.len() as u64;
        w.index.write_all(&key)?;
        w.index.write_all(&off.to_le_bytes())?;
        w.index.flush()?;
        self.index.write().unwrap().insert(key, off);
        Ok(())
    }

    /// Returns the cached vector, or computes, stores and returns it.
    pub fn get_or_compute(&self, text: &str, provider: &dyn EmbeddingProvider) -> Result<Embedding, EmbedError> {
        if provider.dim() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim,
                found: provider.dim(),
            });
        }
        if let Some(e) = self.get(provider.provider_id(), text)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(e);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let e = embed_message(provider, text)?;
        self.append(&e)?;
        Ok(e)
    }
}
