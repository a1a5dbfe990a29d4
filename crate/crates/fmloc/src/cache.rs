//! Persistent write-through response cache.
//!
//! One JSON record per request in the cache directory, named by the SHA-256
//! of the canonical request key. Records store the key next to the raw
//! response so a hash collision or a damaged file is detected on read.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fmloc_core::{Capability, GatewayError, ImageRef, ModelBackend, ScoreScale};

use crate::error::{Error, Result};
use crate::formats::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub capability: Capability,
    /// Image id for grounding, the input text otherwise.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub backend: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("in-memory serialization");
        hex::encode(Sha256::digest(canonical))
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: CacheKey,
    response: serde_json::Value,
}

/// Wraps a backend so that each distinct request reaches it at most once
/// per cache directory.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ModelBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { inner, dir })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lookup<T: DeserializeOwned>(
        &self,
        key: &CacheKey,
        digest: &str,
    ) -> Result<Option<T>, GatewayError> {
        let path = self.dir.join(format!("{digest}.json"));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(GatewayError::Cache {
                    key: digest.to_string(),
                    message: e.to_string(),
                })
            }
        };
        let corrupt = |message: String| GatewayError::Cache {
            key: digest.to_string(),
            message,
        };
        let record: Record = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if record.key != *key {
            return Err(corrupt("stored key does not match request".into()));
        }
        serde_json::from_value(record.response)
            .map(Some)
            .map_err(|e| corrupt(e.to_string()))
    }

    fn store<T: Serialize>(
        &self,
        key: CacheKey,
        digest: &str,
        value: &T,
    ) -> Result<(), GatewayError> {
        let record = Record {
            key,
            response: serde_json::to_value(value).expect("in-memory serialization"),
        };
        let bytes = serde_json::to_vec(&record).expect("in-memory serialization");
        write_atomic(&self.dir.join(format!("{digest}.json")), &bytes).map_err(|e| {
            GatewayError::Cache {
                key: digest.to_string(),
                message: e.to_string(),
            }
        })
    }

    fn cached<T, F>(&self, key: CacheKey, fetch: F) -> Result<T, GatewayError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, GatewayError>,
    {
        let digest = key.digest();
        if let Some(hit) = self.lookup(&key, &digest)? {
            return Ok(hit);
        }
        let value = fetch()?;
        self.store(key, &digest, &value)?;
        Ok(value)
    }
}

impl<B: ModelBackend> ModelBackend for CachedBackend<B> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn score_scale(&self) -> ScoreScale {
        self.inner.score_scale()
    }

    fn ground_raw(&self, image: &ImageRef, prompt: &str) -> Result<f64, GatewayError> {
        let key = CacheKey {
            capability: Capability::Ground,
            subject: image.id.clone(),
            prompt: Some(prompt.to_string()),
            n: None,
            backend: self.inner.identity(),
        };
        self.cached(key, || self.inner.ground_raw(image, prompt))
    }

    fn complete_raw(&self, prompt: &str, n: usize) -> Result<Vec<String>, GatewayError> {
        let key = CacheKey {
            capability: Capability::Complete,
            subject: prompt.to_string(),
            prompt: None,
            n: Some(n),
            backend: self.inner.identity(),
        };
        self.cached(key, || self.inner.complete_raw(prompt, n))
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let key = CacheKey {
            capability: Capability::Embed,
            subject: text.to_string(),
            prompt: None,
            n: None,
            backend: self.inner.identity(),
        };
        self.cached(key, || self.inner.embed_raw(text))
    }
}
