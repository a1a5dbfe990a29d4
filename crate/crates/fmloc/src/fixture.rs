//! Recorded model responses.
//!
//! The fixture file is a single JSON document:
//!
//! ```json
//! {
//!   "grounding":   { "<image_id>\u001f<prompt>": 0.31 },
//!   "completions": { "<prompt>": ["kitchen", "a pantry"] },
//!   "embeddings":  { "<text>": [0.1, 0.2] }
//! }
//! ```
//!
//! Keys are matched exactly. A missing key is an error.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fmloc_core::gateway::grounding_subject;
use fmloc_core::{Capability, GatewayError, ImageRef, ModelBackend, ScoreScale};

use crate::error::{Error, Result};

/// Separates image id and prompt in grounding keys.
pub const KEY_SEPARATOR: char = '\u{1f}';

pub fn grounding_key(image_id: &str, prompt: &str) -> String {
    format!("{image_id}{KEY_SEPARATOR}{prompt}")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureStore {
    #[serde(default)]
    pub grounding: BTreeMap<String, f64>,
    #[serde(default)]
    pub completions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

impl FixtureStore {
    pub fn insert_grounding(&mut self, image_id: &str, prompt: &str, score: f64) {
        self.grounding
            .insert(grounding_key(image_id, prompt), score);
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (key, v) in &self.grounding {
            if !key.contains(KEY_SEPARATOR) {
                return Err(format!("grounding key {key:?} lacks the U+001F separator"));
            }
            if !(0.0..=1.0).contains(v) {
                return Err(format!("grounding score {v} for {key:?} is outside [0, 1]"));
            }
        }
        for (text, v) in &self.embeddings {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(format!("embedding for {text:?} is empty or not finite"));
            }
        }
        Ok(())
    }
}

/// Read-only backend over a [`FixtureStore`].
#[derive(Debug)]
pub struct FixtureBackend {
    store: FixtureStore,
    identity: String,
}

impl FixtureBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let store: FixtureStore =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))?;
        store.validate().map_err(|e| Error::format(path, e))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        Ok(Self {
            store,
            identity: format!("fixture:{}", &digest[..16]),
        })
    }

    pub fn from_store(store: FixtureStore) -> std::result::Result<Self, String> {
        store.validate()?;
        let digest = hex::encode(Sha256::digest(
            serde_json::to_vec(&store).expect("serializable"),
        ));
        Ok(Self {
            store,
            identity: format!("fixture:{}", &digest[..16]),
        })
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl ModelBackend for FixtureBackend {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn score_scale(&self) -> ScoreScale {
        ScoreScale::Unit
    }

    fn ground_raw(&self, image: &ImageRef, prompt: &str) -> Result<f64, GatewayError> {
        self.store
            .grounding
            .get(&grounding_key(&image.id, prompt))
            .copied()
            .ok_or_else(|| GatewayError::Miss {
                capability: Capability::Ground,
                key: grounding_subject(&image.id, prompt),
            })
    }

    fn complete_raw(&self, prompt: &str, _n: usize) -> Result<Vec<String>, GatewayError> {
        self.store
            .completions
            .get(prompt)
            .cloned()
            .ok_or_else(|| GatewayError::Miss {
                capability: Capability::Complete,
                key: format!("prompt \"{prompt}\""),
            })
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        self.store
            .embeddings
            .get(text)
            .cloned()
            .ok_or_else(|| GatewayError::Miss {
                capability: Capability::Embed,
                key: format!("text \"{text}\""),
            })
    }
}
