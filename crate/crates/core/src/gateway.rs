//! Access to the three model capabilities: image-text grounding, text
//! completion and text embedding.
//!
//! Backends implement [`ModelBackend`] and return raw model output.
//! [`Gateway`] wraps a backend and turns raw output into the canonical forms
//! the pipeline relies on: grounding scores in `[0, 1]`, deduplicated
//! normalized completions, and unit-norm embeddings.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

/// Default number of room proposals requested from the language model.
pub const DEFAULT_COMPLETIONS: usize = 5;

/// Tolerance on the Euclidean norm of a normalized embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// An image known to the backend.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageRef {
    pub id: String,
    pub path: String,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, path: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Ground,
    Complete,
    Embed,
}

impl Capability {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ground => "ground",
            Self::Complete => "complete",
            Self::Embed => "embed",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Range of the raw grounding values a backend produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreScale {
    /// Already in `[0, 1]`; values outside are rejected.
    Unit,
    /// Cosine similarity in `[-1, 1]`, mapped through `(c + 1) / 2`.
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GatewayError {
    /// Recorded fixture has no entry for the request.
    Miss {
        capability: Capability,
        key: String,
    },
    /// Request failed and is not worth retrying.
    Request {
        capability: Capability,
        subject: String,
        message: String,
    },
    RetriesExhausted {
        capability: Capability,
        subject: String,
        attempts: u32,
        last: String,
    },
    /// Response arrived but could not be decoded.
    Malformed {
        capability: Capability,
        subject: String,
        message: String,
    },
    Cache {
        key: String,
        message: String,
    },
    ScoreOutOfRange {
        subject: String,
        value: f64,
    },
    NoCandidates {
        prompt: String,
    },
    ZeroVector {
        text: String,
    },
    EmbeddingDimension {
        expected: usize,
        found: usize,
        text: String,
    },
    EmptyInput(Capability),
}

impl fmt::Display for GatewayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Miss { capability, key } => {
                write!(f, "fixture has no {capability} entry for {key}")
            }
            Self::Request {
                capability,
                subject,
                message,
            } => write!(f, "{capability} request for {subject} failed: {message}"),
            Self::RetriesExhausted {
                capability,
                subject,
                attempts,
                last,
            } => write!(
                f,
                "{capability} request for {subject} failed after {attempts} attempts: {last}"
            ),
            Self::Malformed {
                capability,
                subject,
                message,
            } => write!(f, "malformed {capability} response for {subject}: {message}"),
            Self::Cache { key, message } => write!(f, "cache entry {key} is corrupt: {message}"),
            Self::ScoreOutOfRange { subject, value } => {
                write!(f, "grounding score {value} for {subject} is outside [0, 1]")
            }
            Self::NoCandidates { prompt } => {
                write!(f, "no usable completions for prompt \"{prompt}\"")
            }
            Self::ZeroVector { text } => {
                write!(f, "embedding of \"{text}\" is a zero vector and cannot be normalized")
            }
            Self::EmbeddingDimension {
                expected,
                found,
                text,
            } => write!(
                f,
                "embedding of \"{text}\" has dimension {found}, backend previously returned {expected}"
            ),
            Self::EmptyInput(capability) => write!(f, "empty input for {capability} request"),
        }
    }
}

impl core::error::Error for GatewayError {}

/// Formats the `(image, prompt)` pair used in grounding diagnostics.
pub fn grounding_subject(image_id: &str, prompt: &str) -> String {
    alloc::format!("image \"{image_id}\", prompt \"{prompt}\"")
}

/// Normalized image-text affinity in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundingScore(f64);

impl GroundingScore {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Self(value))
    }

    /// Maps a cosine similarity to `[0, 1]` via `(c + 1) / 2`. Values outside
    /// `[-1, 1]` (numerical overshoot) are clamped; NaN is rejected.
    pub fn from_cosine(cosine: f64) -> Option<Self> {
        if cosine.is_nan() {
            return None;
        }
        Some(Self(((cosine + 1.0) / 2.0).clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Unit-norm embedding vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `raw` to unit Euclidean norm. Returns `None` for zero,
    /// empty or non-finite vectors.
    pub fn normalized(raw: Vec<f64>) -> Option<Self> {
        if raw.is_empty() || raw.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let norm = libm::sqrt(raw.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self(raw.into_iter().map(|x| x / norm).collect()))
    }

    /// Wraps components that are already unit norm; used when reading stored
    /// descriptors. Returns `None` if the norm is off by more than
    /// [`UNIT_NORM_TOLERANCE`].
    pub fn from_unit(components: Vec<f64>) -> Option<Self> {
        let e = Self(components);
        e.is_unit().then_some(e)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|x| x * x).sum::<f64>())
    }

    pub fn is_unit(&self) -> bool {
        !self.0.is_empty() && (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    /// Dot product, or `None` on dimension mismatch.
    pub fn dot(&self, other: &Embedding) -> Option<f64> {
        if self.0.len() != other.0.len() {
            return None;
        }
        Some(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

/// Room proposals from the language model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionSet {
    /// Normalized, deduplicated, non-empty; first-occurrence order.
    pub candidates: Vec<String>,
    pub raw: Vec<String>,
}

/// Canonical form of one completion: first line only, lowercase, collapsed
/// whitespace, terminal punctuation removed, one leading article removed.
pub fn normalize_completion(raw: &str) -> String {
    let first_line = raw.trim_start().lines().next().unwrap_or("");
    let mut text = crate::vocabulary::normalize_label(first_line);
    while text.ends_with(|c: char| c.is_ascii_punctuation()) {
        text.pop();
    }
    let mut text = String::from(text.trim_end());
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = text.strip_prefix(article) {
            text = String::from(rest.trim_start());
            break;
        }
    }
    text
}

/// Normalizes, drops empties, deduplicates and truncates to `n`.
pub fn normalize_completions(raw: Vec<String>, n: usize) -> CompletionSet {
    let mut candidates: Vec<String> = Vec::new();
    for text in &raw {
        let c = normalize_completion(text);
        if !c.is_empty() && !candidates.contains(&c) {
            candidates.push(c);
            if candidates.len() == n {
                break;
            }
        }
    }
    CompletionSet { candidates, raw }
}

/// A source of raw model output.
pub trait ModelBackend: Send + Sync {
    /// Stable identifier used in cache keys, e.g. `http:<url>`.
    fn identity(&self) -> String;

    fn score_scale(&self) -> ScoreScale;

    fn ground_raw(&self, image: &ImageRef, prompt: &str) -> Result<f64, GatewayError>;

    /// Up to (ideally exactly) `n` raw completions of `prompt`.
    fn complete_raw(&self, prompt: &str, n: usize) -> Result<Vec<String>, GatewayError>;

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

macro_rules! forward_backend {
    ($($ty:ty),*) => {$(
        impl<B: ModelBackend + ?Sized> ModelBackend for $ty {
            fn identity(&self) -> String {
                (**self).identity()
            }
            fn score_scale(&self) -> ScoreScale {
                (**self).score_scale()
            }
            fn ground_raw(&self, image: &ImageRef, prompt: &str) -> Result<f64, GatewayError> {
                (**self).ground_raw(image, prompt)
            }
            fn complete_raw(&self, prompt: &str, n: usize) -> Result<Vec<String>, GatewayError> {
                (**self).complete_raw(prompt, n)
            }
            fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
                (**self).embed_raw(text)
            }
        }
    )*};
}

forward_backend!(&B, Box<B>, Arc<B>);

/// Normalizing front end over a [`ModelBackend`].
pub struct Gateway<B> {
    backend: B,
    // 0 until the first embedding is seen.
    embedding_dim: AtomicUsize,
}

impl<B: ModelBackend> Gateway<B> {
    pub fn new(backend: B) -> Self {
        Self {
            backend,
            embedding_dim: AtomicUsize::new(0),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn ground(&self, image: &ImageRef, prompt: &str) -> Result<GroundingScore, GatewayError> {
        if prompt.trim().is_empty() || image.id.is_empty() {
            return Err(GatewayError::EmptyInput(Capability::Ground));
        }
        let raw = self.backend.ground_raw(image, prompt)?;
        let score = match self.backend.score_scale() {
            ScoreScale::Unit => GroundingScore::new(raw),
            ScoreScale::Cosine => GroundingScore::from_cosine(raw),
        };
        score.ok_or_else(|| GatewayError::ScoreOutOfRange {
            subject: grounding_subject(&image.id, prompt),
            value: raw,
        })
    }

    pub fn complete(&self, prompt: &str, n: usize) -> Result<CompletionSet, GatewayError> {
        if prompt.trim().is_empty() || n == 0 {
            return Err(GatewayError::EmptyInput(Capability::Complete));
        }
        let raw = self.backend.complete_raw(prompt, n)?;
        let set = normalize_completions(raw, n);
        if set.candidates.is_empty() {
            return Err(GatewayError::NoCandidates {
                prompt: prompt.to_string(),
            });
        }
        Ok(set)
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyInput(Capability::Embed));
        }
        let raw = self.backend.embed_raw(text)?;
        let found = raw.len();
        let embedding = Embedding::normalized(raw).ok_or_else(|| GatewayError::ZeroVector {
            text: text.to_string(),
        })?;
        match self
            .embedding_dim
            .compare_exchange(0, found, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => Ok(embedding),
            Err(expected) if expected == found => Ok(embedding),
            Err(expected) => Err(GatewayError::EmbeddingDimension {
                expected,
                found,
                text: text.to_string(),
            }),
        }
    }
}
