//! Content-addressed response store.
//!
//! Layout on disk: `{root}/{namespace}/{first two hex chars}/{key}.json`, one
//! file per key. Writes go through a temporary file and a rename, so readers
//! never observe a partial entry.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatRequest, ChatResponse, FinishReason, RequestTag, Usage};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache entry {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredReply {
    text: String,
    finish_reason: FinishReason,
    usage: Usage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Chat {
        key: String,
        model_name: String,
        request_tag: RequestTag,
        response: StoredReply,
    },
    Embedding {
        key: String,
        values: Vec<f64>,
    },
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Entry>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(root: &Path, namespace: &str) -> Result<Self, CacheError> {
        let dir = root.join(namespace);
        fs::create_dir_all(&dir).map_err(|source| CacheError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2.min(key.len())]).join(format!("{key}.json")))
    }

    fn load(&self, key: &str) -> Result<Option<Entry>, CacheError> {
        if let Some(e) = self.memory.lock().unwrap().get(key) {
            return Ok(Some(e.clone()));
        }
        let Some(path) = self.path_for(key) else {
            return Ok(None);
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let entry: Entry = serde_json::from_slice(&bytes).map_err(|e| CacheError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.memory
            .lock()
            .unwrap()
            .insert(key.to_string(), entry.clone());
        Ok(Some(entry))
    }

    fn store(&self, key: &str, entry: Entry) -> Result<(), CacheError> {
        if let Some(path) = self.path_for(key) {
            let parent = path.parent().expect("entry path has a parent");
            let io = |source| CacheError::Io {
                path: path.clone(),
                source,
            };
            fs::create_dir_all(parent).map_err(io)?;
            let tmp = parent.join(format!(
                ".{key}.{}.{:?}.tmp",
                std::process::id(),
                std::thread::current().id()
            ));
            let bytes = serde_json::to_vec_pretty(&entry).expect("cache entries serialize");
            fs::write(&tmp, bytes).map_err(io)?;
            fs::rename(&tmp, &path).map_err(io)?;
        }
        self.memory.lock().unwrap().insert(key.to_string(), entry);
        Ok(())
    }

    pub fn get_chat(&self, key: &str) -> Result<Option<ChatResponse>, CacheError> {
        match self.load(key)? {
            Some(Entry::Chat { response, .. }) => Ok(Some(ChatResponse {
                text: response.text,
                finish_reason: response.finish_reason,
                usage: response.usage,
                from_cache: true,
            })),
            Some(Entry::Embedding { .. }) => Err(CacheError::Corrupt {
                path: self.path_for(key).unwrap_or_default(),
                message: "expected a chat entry".into(),
            }),
            None => Ok(None),
        }
    }

    pub fn put_chat(&self, key: &str, req: &ChatRequest, resp: &ChatResponse) -> Result<(), CacheError> {
        self.store(
            key,
            Entry::Chat {
                key: key.to_string(),
                model_name: req.model_name.clone(),
                request_tag: req.request_tag,
                response: StoredReply {
                    text: resp.text.clone(),
                    finish_reason: resp.finish_reason,
                    usage: resp.usage,
                },
            },
        )
    }

    pub fn get_embedding(&self, key: &str) -> Result<Option<Vec<f64>>, CacheError> {
        match self.load(key)? {
            Some(Entry::Embedding { values, .. }) => Ok(Some(values)),
            Some(Entry::Chat { .. }) => Err(CacheError::Corrupt {
                path: self.path_for(key).unwrap_or_default(),
                message: "expected an embedding entry".into(),
            }),
            None => Ok(None),
        }
    }

    pub fn put_embedding(&self, key: &str, values: &[f64]) -> Result<(), CacheError> {
        self.store(
            key,
            Entry::Embedding {
                key: key.to_string(),
                values: values.to_vec(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(text: &str) -> ChatResponse {
        ChatResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
            from_cache: false,
        }
    }

    #[test]
    fn layout_uses_two_char_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::on_disk(dir.path(), "ns").unwrap();
        let key = "ab".repeat(32);
        let req = ChatRequest::deterministic("m", "u", RequestTag::Generate);
        cache.put_chat(&key, &req, &resp("hi")).unwrap();
        let expected = dir.path().join("ns").join("ab").join(format!("{key}.json"));
        assert!(expected.exists());
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let key = "cd".repeat(32);
        {
            let cache = ResponseCache::on_disk(dir.path(), "ns").unwrap();
            let req = ChatRequest::deterministic("m", "u", RequestTag::Generate);
            cache.put_chat(&key, &req, &resp("stored")).unwrap();
            cache.put_embedding(&"ef".repeat(32), &[0.5, 0.25]).unwrap();
        }
        let cache = ResponseCache::on_disk(dir.path(), "ns").unwrap();
        let hit = cache.get_chat(&key).unwrap().unwrap();
        assert_eq!(hit.text, "stored");
        assert!(hit.from_cache);
        assert_eq!(
            cache.get_embedding(&"ef".repeat(32)).unwrap(),
            Some(vec![0.5, 0.25])
        );
        let other = ResponseCache::on_disk(dir.path(), "other").unwrap();
        assert!(other.get_chat(&key).unwrap().is_none());
    }

    #[test]
    fn corrupt_entry_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::on_disk(dir.path(), "ns").unwrap();
        let key = "00".repeat(32);
        let path = cache.path_for(&key).unwrap();
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "{not json").unwrap();
        assert!(matches!(cache.get_chat(&key), Err(CacheError::Corrupt { .. })));
    }
}
