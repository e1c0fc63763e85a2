//! Content-addressed response cache: one pretty-printed JSON file per
//! request hash at `<dir>/<first two hex digits>/<hash>`.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{GatewayError, Result};
use crate::spec::CompletionResponse;

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request_hash: &str) -> PathBuf {
        let prefix = request_hash.get(..2).unwrap_or("__");
        self.dir.join(prefix).join(request_hash)
    }

    /// A missing or unreadable entry is a miss; corrupt entries are logged
    /// and re-fetched.
    pub fn get(&self, request_hash: &str) -> Option<CompletionResponse> {
        let path = self.path_for(request_hash);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CompletionResponse>(&bytes) {
            Ok(mut resp) if resp.request_hash == request_hash => {
                resp.from_cache = true;
                Some(resp)
            }
            Ok(_) => {
                tracing::warn!(path = %path.display(), "cache entry hash mismatch, ignoring");
                None
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "corrupt cache entry, ignoring");
                None
            }
        }
    }

    /// Atomic write via a temporary file in the target directory; the last
    /// writer wins on identical keys.
    pub fn put(&self, resp: &CompletionResponse) -> Result<PathBuf> {
        let path = self.path_for(&resp.request_hash);
        let parent = path.parent().expect("cache path has a parent");
        let io_err = |source| GatewayError::Cache {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(parent).map_err(io_err)?;
        let mut bytes = serde_json::to_vec_pretty(resp).expect("response serializes");
        bytes.push(b'\n');
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io_err)?;
        tmp.write_all(&bytes).map_err(io_err)?;
        tmp.persist(&path).map_err(|e| io_err(e.error))?;
        Ok(path)
    }

    /// Delete one entry; false when it was not cached.
    pub fn remove(&self, request_hash: &str) -> Result<bool> {
        let path = self.path_for(request_hash);
        match std::fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(source) => Err(GatewayError::Cache { path, source }),
        }
    }

    /// All cached request hashes, sorted.
    pub fn entries(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let read = match std::fs::read_dir(&self.dir) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(source) => {
                return Err(GatewayError::Cache {
                    path: self.dir.clone(),
                    source,
                })
            }
        };
        for shard in read.flatten() {
            if !shard.path().is_dir() {
                continue;
            }
            for entry in std::fs::read_dir(shard.path()).into_iter().flatten().flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if name.len() == 64 && name.chars().all(|c| c.is_ascii_hexdigit()) {
                    out.push(name);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pic_core::records::TokenUsage;

    fn response(hash: &str) -> CompletionResponse {
        CompletionResponse {
            request_hash: hash.into(),
            model_name: "m".into(),
            prompt_hash: "p".into(),
            text: "答案：B".into(),
            usage: TokenUsage {
                prompt_tokens: 10,
                completion_tokens: 2,
            },
            latency_ms: 321,
            timestamp: "2024-01-01T00:00:00.000Z".into(),
            provider_meta: Default::default(),
            from_cache: false,
        }
    }

    #[test]
    fn round_trip_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let hash = "ab".repeat(32);
        let path = ResponseCache::new(dir.path()).put(&response(&hash)).unwrap();
        assert_eq!(path, dir.path().join("ab").join(&hash));
        let fresh = ResponseCache::new(dir.path());
        let got = fresh.get(&hash).unwrap();
        assert!(got.from_cache);
        assert_eq!(got.latency_ms, 321);
        assert_eq!(got, CompletionResponse { from_cache: true, ..response(&hash) });
        assert_eq!(fresh.entries().unwrap(), vec![hash]);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let hash = "cd".repeat(32);
        let path = cache.path_for(&hash);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, "{not json").unwrap();
        assert!(cache.get(&hash).is_none());
        assert!(cache.get(&"ef".repeat(32)).is_none());
    }
}
