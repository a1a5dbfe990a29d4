//! Semantic similarity between two descriptors: the sum of an object term
//! and a room term.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::{top_k_where, ImageDescriptor, ScoredLabel};

/// Room embedding similarity threshold.
pub const DEFAULT_THETA: f64 = 0.75;

/// How a landmark set restricts the detected objects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FilterMode {
    /// Keep only the top-k labels that are landmarks (no refill).
    #[default]
    Intersect,
    /// Re-select the top-k among landmark labels from the full score map.
    Reselect,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimilarityError {
    InvalidTheta(f64),
    DimensionMismatch { left: usize, right: usize },
}

impl fmt::Display for SimilarityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidTheta(t) => write!(f, "theta must lie in [0, 1), got {t}"),
            Self::DimensionMismatch { left, right } => {
                write!(
                    f,
                    "room embeddings have different dimensions ({left} vs {right})"
                )
            }
        }
    }
}

impl core::error::Error for SimilarityError {}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityConfig {
    theta: f64,
    landmark_filter: Option<BTreeSet<String>>,
    filter_mode: FilterMode,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            landmark_filter: None,
            filter_mode: FilterMode::Intersect,
        }
    }
}

impl SimilarityConfig {
    pub fn new(theta: f64) -> Result<Self, SimilarityError> {
        if !(0.0..1.0).contains(&theta) {
            return Err(SimilarityError::InvalidTheta(theta));
        }
        Ok(Self {
            theta,
            ..Self::default()
        })
    }

    pub fn with_landmarks<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.landmark_filter = Some(labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_filter_mode(mut self, mode: FilterMode) -> Self {
        self.filter_mode = mode;
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn landmark_filter(&self) -> Option<&BTreeSet<String>> {
        self.landmark_filter.as_ref()
    }

    pub fn filter_mode(&self) -> FilterMode {
        self.filter_mode
    }

    /// The object labels of `d` that take part in the object term.
    pub fn effective_objects<'a>(&self, d: &'a ImageDescriptor) -> EffectiveObjects<'a> {
        match (&self.landmark_filter, self.filter_mode) {
            (None, _) => EffectiveObjects::Borrowed(&d.top_objects),
            (Some(set), FilterMode::Intersect) => EffectiveObjects::Owned(
                d.top_objects
                    .iter()
                    .filter(|o| set.contains(&o.label))
                    .cloned()
                    .collect(),
            ),
            (Some(set), FilterMode::Reselect) => {
                EffectiveObjects::Owned(top_k_where(&d.score_map, d.k(), |l| set.contains(l)))
            }
        }
    }
}

pub enum EffectiveObjects<'a> {
    Borrowed(&'a [ScoredLabel]),
    Owned(Vec<ScoredLabel>),
}

impl core::ops::Deref for EffectiveObjects<'_> {
    type Target = [ScoredLabel];

    fn deref(&self) -> &[ScoredLabel] {
        match self {
            Self::Borrowed(s) => s,
            Self::Owned(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticScore {
    pub total: f64,
    pub object_part: f64,
    pub room_part: f64,
}

impl SemanticScore {
    pub fn new(object_part: f64, room_part: f64) -> Self {
        Self {
            total: object_part + room_part,
            object_part,
            room_part,
        }
    }
}

/// `(x - theta) / (1 - theta)` above the threshold, zero otherwise.
pub fn threshold_renorm(x: f64, theta: f64) -> f64 {
    if x > theta {
        (x - theta) / (1.0 - theta)
    } else {
        0.0
    }
}

/// `min / max` of two nonnegative scores; zero when both are zero.
fn score_ratio(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi <= 0.0 {
        0.0
    } else {
        a.min(b) / hi
    }
}

/// Sum of `min/max` score ratios over the labels detected in both images.
///
/// Terms are added in label order so that the result is bit-identical for
/// `(a, b)` and `(b, a)`.
pub fn object_similarity(
    a: &ImageDescriptor,
    b: &ImageDescriptor,
    config: &SimilarityConfig,
) -> f64 {
    let left = config.effective_objects(a);
    let right = config.effective_objects(b);
    let mut shared: Vec<(&str, f64, f64)> = left
        .iter()
        .filter_map(|l| {
            right
                .iter()
                .find(|r| r.label == l.label)
                .map(|r| (l.label.as_str(), l.score, r.score))
        })
        .collect();
    shared.sort_unstable_by(|x, y| x.0.cmp(y.0));
    shared.iter().map(|&(_, si, sj)| score_ratio(si, sj)).sum()
}

pub fn room_similarity(
    a: &ImageDescriptor,
    b: &ImageDescriptor,
    config: &SimilarityConfig,
) -> Result<f64, SimilarityError> {
    let dot =
        a.room_embedding
            .dot(&b.room_embedding)
            .ok_or(SimilarityError::DimensionMismatch {
                left: a.room_embedding.dimension(),
                right: b.room_embedding.dimension(),
            })?;
    // Rounding can push the dot product of unit vectors slightly past 1.
    Ok(threshold_renorm(dot, config.theta).min(1.0))
}

pub fn semantic_similarity(
    a: &ImageDescriptor,
    b: &ImageDescriptor,
    config: &SimilarityConfig,
) -> Result<SemanticScore, SimilarityError> {
    let room = room_similarity(a, b, config)?;
    Ok(SemanticScore::new(object_similarity(a, b, config), room))
}
