//! Leave-one-out landmark learning.
//!
//! Localization is re-run once per detected object label with that label
//! removed from every descriptor. A label whose removal raises the mean
//! translation error by at least the threshold is a landmark.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::{top_k_where, ImageDescriptor, ScoreMap, ScoredLabel};
use crate::evaluation::{translation_error, DatasetManifest};
use crate::retrieval::{match_queries, MatchResult, RetrievalError};
use crate::similarity::SimilarityConfig;

/// Minimum error increase (meters) on removal for a label to count as a landmark.
pub const DEFAULT_LANDMARK_THRESHOLD: f64 = 0.1;

/// How top-k is rebuilt when a label is eliminated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Elimination {
    /// Re-select k labels from the stored score map without the label.
    #[default]
    Refill,
    /// Drop the label and keep the remaining k-1.
    Shrink,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkOptions {
    pub threshold: f64,
    pub elimination: Elimination,
}

impl Default for LandmarkOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_LANDMARK_THRESHOLD,
            elimination: Elimination::Refill,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LandmarkError {
    EmptySet(&'static str),
    MissingPose(String),
    IncompleteScoreMap(String),
    Retrieval(RetrievalError),
    /// No label reached the threshold.
    EmptyLandmarkSet {
        threshold: f64,
    },
    InvalidThreshold(f64),
}

impl fmt::Display for LandmarkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySet(which) => write!(f, "{which} descriptor set is empty"),
            Self::MissingPose(id) => write!(f, "no pose for image \"{id}\""),
            Self::IncompleteScoreMap(id) => write!(
                f,
                "descriptor \"{id}\" does not carry the full vocabulary score map"
            ),
            Self::Retrieval(e) => write!(f, "{e}"),
            Self::EmptyLandmarkSet { threshold } => write!(
                f,
                "no label reduces the error by at least {threshold} m; lower the threshold"
            ),
            Self::InvalidThreshold(t) => write!(f, "threshold must be finite, got {t}"),
        }
    }
}

impl core::error::Error for LandmarkError {}

impl From<RetrievalError> for LandmarkError {
    fn from(e: RetrievalError) -> Self {
        Self::Retrieval(e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelImpact {
    pub label: String,
    pub error_without: f64,
    /// `error_without - baseline`; positive when the label helps.
    pub error_reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkReport {
    pub threshold: f64,
    pub elimination: Elimination,
    pub baseline_error: f64,
    /// Sorted by `error_reduction` descending, then label.
    pub labels: Vec<LabelImpact>,
    pub landmark_set: Vec<String>,
}

impl LandmarkReport {
    /// Rebuilds the ordering and landmark set from raw per-label results.
    pub fn new(
        threshold: f64,
        elimination: Elimination,
        baseline_error: f64,
        results: Vec<(String, f64)>,
    ) -> Self {
        let mut labels: Vec<LabelImpact> = results
            .into_iter()
            .map(|(label, error_without)| LabelImpact {
                label,
                error_without,
                error_reduction: error_without - baseline_error,
            })
            .collect();
        labels.sort_by(|a, b| {
            b.error_reduction
                .total_cmp(&a.error_reduction)
                .then_with(|| a.label.cmp(&b.label))
        });
        let landmark_set = labels
            .iter()
            .filter(|l| l.error_reduction >= threshold)
            .map(|l| l.label.clone())
            .collect();
        Self {
            threshold,
            elimination,
            baseline_error,
            labels,
            landmark_set,
        }
    }
}

/// Copy of `d` with `label` removed from its score map and top objects.
/// Room fields are left untouched.
pub fn eliminate_label(
    d: &ImageDescriptor,
    label: &str,
    elimination: Elimination,
) -> ImageDescriptor {
    let top_objects: Vec<ScoredLabel> = match elimination {
        Elimination::Refill => top_k_where(&d.score_map, d.k(), |l| l != label),
        Elimination::Shrink => d
            .top_objects
            .iter()
            .filter(|o| o.label != label)
            .cloned()
            .collect(),
    };
    let score_map = ScoreMap::from_entries(
        d.score_map
            .entries()
            .iter()
            .filter(|e| e.label != label)
            .cloned()
            .collect(),
    )
    .expect("subset of a valid score map");
    ImageDescriptor {
        image_id: d.image_id.clone(),
        score_map,
        top_objects,
        room_label: d.room_label.clone(),
        room_candidates: d.room_candidates.clone(),
        room_embedding: d.room_embedding.clone(),
    }
}

/// Mean distance between each query and its matched reference.
pub fn mean_translation_error(
    matches: &[MatchResult],
    queries: &DatasetManifest,
    references: &DatasetManifest,
) -> Result<f64, LandmarkError> {
    let mut sum = 0.0;
    for m in matches {
        let q = queries
            .get(&m.query_id)
            .ok_or_else(|| LandmarkError::MissingPose(m.query_id.clone()))?;
        let r = references
            .get(&m.reference_id)
            .ok_or_else(|| LandmarkError::MissingPose(m.reference_id.clone()))?;
        sum += translation_error(&q.pose, &r.pose);
    }
    Ok(if matches.is_empty() {
        0.0
    } else {
        sum / matches.len() as f64
    })
}

/// Holds the inputs of one landmark learning run.
///
/// [`LandmarkLearner::learn`] runs everything sequentially; callers that
/// want to parallelize can evaluate [`LandmarkLearner::error_without`] per
/// candidate and assemble the result with [`LandmarkReport::new`].
pub struct LandmarkLearner<'a> {
    queries: &'a [ImageDescriptor],
    references: &'a [ImageDescriptor],
    query_manifest: &'a DatasetManifest,
    reference_manifest: &'a DatasetManifest,
    config: &'a SimilarityConfig,
    options: LandmarkOptions,
}

impl<'a> LandmarkLearner<'a> {
    pub fn new(
        queries: &'a [ImageDescriptor],
        references: &'a [ImageDescriptor],
        query_manifest: &'a DatasetManifest,
        reference_manifest: &'a DatasetManifest,
        config: &'a SimilarityConfig,
        options: LandmarkOptions,
    ) -> Result<Self, LandmarkError> {
        if !options.threshold.is_finite() {
            return Err(LandmarkError::InvalidThreshold(options.threshold));
        }
        if queries.is_empty() {
            return Err(LandmarkError::EmptySet("query"));
        }
        if references.is_empty() {
            return Err(LandmarkError::EmptySet("reference"));
        }
        for (set, manifest) in [(queries, query_manifest), (references, reference_manifest)] {
            if let Some(d) = set.iter().find(|d| manifest.get(&d.image_id).is_none()) {
                return Err(LandmarkError::MissingPose(d.image_id.clone()));
            }
        }
        let vocabulary: Vec<&str> = queries[0].score_map.labels().collect();
        for d in queries.iter().chain(references) {
            let complete = d.score_map.len() == vocabulary.len()
                && d.score_map.labels().zip(&vocabulary).all(|(a, b)| a == *b)
                && d.top_objects
                    .iter()
                    .all(|o| d.score_map.get(&o.label) == Some(o.score));
            if !complete {
                return Err(LandmarkError::IncompleteScoreMap(d.image_id.clone()));
            }
        }
        Ok(Self {
            queries,
            references,
            query_manifest,
            reference_manifest,
            config,
            options,
        })
    }

    pub fn options(&self) -> LandmarkOptions {
        self.options
    }

    /// Every label in some descriptor's top objects, sorted.
    pub fn candidates(&self) -> Vec<String> {
        self.queries
            .iter()
            .chain(self.references)
            .flat_map(|d| d.top_objects.iter().map(|o| o.label.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn mean_error(
        &self,
        queries: &[ImageDescriptor],
        references: &[ImageDescriptor],
    ) -> Result<f64, LandmarkError> {
        let matches = match_queries(queries, references, self.config)?;
        mean_translation_error(&matches, self.query_manifest, self.reference_manifest)
    }

    pub fn baseline(&self) -> Result<f64, LandmarkError> {
        self.mean_error(self.queries, self.references)
    }

    /// Mean error with `label` eliminated from every descriptor.
    pub fn error_without(&self, label: &str) -> Result<f64, LandmarkError> {
        let strip = |set: &[ImageDescriptor]| -> Vec<ImageDescriptor> {
            set.iter()
                .map(|d| eliminate_label(d, label, self.options.elimination))
                .collect()
        };
        self.mean_error(&strip(self.queries), &strip(self.references))
    }

    pub fn learn(&self) -> Result<LandmarkReport, LandmarkError> {
        let baseline = self.baseline()?;
        let results = self
            .candidates()
            .into_iter()
            .map(|label| self.error_without(&label).map(|e| (label, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LandmarkReport::new(
            self.options.threshold,
            self.options.elimination,
            baseline,
            results,
        ))
    }
}

/// Matching configuration restricted to the learned landmarks.
pub fn apply_landmark_filter(
    base: &SimilarityConfig,
    landmarks: &[String],
) -> Result<SimilarityConfig, LandmarkError> {
    if landmarks.is_empty() {
        return Err(LandmarkError::EmptyLandmarkSet {
            threshold: DEFAULT_LANDMARK_THRESHOLD,
        });
    }
    Ok(base.clone().with_landmarks(landmarks.iter().cloned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::select_top_objects;
    use crate::evaluation::{ManifestEntry, Pose};
    use crate::similarity::tests::descriptor;
    use crate::similarity::{object_similarity, room_similarity};
    use alloc::vec;

    #[test]
    fn refill_takes_next_best() {
        let mut d = descriptor("a", &[("a", 0.5), ("b", 0.4), ("c", 0.3)], &[1.0, 0.0]);
        d.top_objects = select_top_objects(&d.score_map, 2).unwrap();
        let e = eliminate_label(&d, "a", Elimination::Refill);
        let labels: Vec<_> = e.top_objects.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, vec!["b", "c"]);
        assert_eq!(e.score_map.len(), 2);
        let s = eliminate_label(&d, "a", Elimination::Shrink);
        assert_eq!(s.top_objects.len(), 1);
        assert_eq!(e.room_embedding, d.room_embedding);
        assert_eq!(e.room_label, d.room_label);
    }

    #[test]
    fn elimination_never_changes_room_part() {
        let a = descriptor("a", &[("x", 0.5), ("y", 0.4)], &[1.0, 0.2]);
        let b = descriptor("b", &[("x", 0.3), ("y", 0.1)], &[0.9, 0.3]);
        let cfg = SimilarityConfig::default();
        let before = room_similarity(&a, &b, &cfg).unwrap();
        for l in ["x", "y"] {
            let ea = eliminate_label(&a, l, Elimination::Refill);
            let eb = eliminate_label(&b, l, Elimination::Refill);
            assert_eq!(room_similarity(&ea, &eb, &cfg).unwrap(), before);
        }
    }

    #[test]
    fn report_orders_and_thresholds() {
        let r = LandmarkReport::new(
            0.1,
            Elimination::Refill,
            1.0,
            vec![
                ("cup".into(), 0.8),
                ("desk".into(), 1.1),
                ("door".into(), 1.3),
                ("mirror".into(), 1.0),
            ],
        );
        let order: Vec<_> = r.labels.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(order, vec!["door", "desk", "mirror", "cup"]);
        // 1.1 - 1.0 rounds just above 0.1
        assert_eq!(r.landmark_set, vec!["door", "desk"]);
    }

    #[test]
    fn filter_requires_landmarks() {
        assert!(matches!(
            apply_landmark_filter(&SimilarityConfig::default(), &[]),
            Err(LandmarkError::EmptyLandmarkSet { .. })
        ));
        let a = descriptor("a", &[("chair", 0.2), ("cup", 0.3)], &[1.0, 0.0]);
        let b = descriptor("b", &[("chair", 0.4), ("cup", 0.3)], &[1.0, 0.0]);
        let cfg = apply_landmark_filter(&SimilarityConfig::default(), &["chair".into()]).unwrap();
        assert_eq!(object_similarity(&a, &b, &cfg), 0.5);
    }

    fn manifest(ids: &[(&str, f64)]) -> DatasetManifest {
        DatasetManifest::new(
            ids.iter()
                .map(|(id, x)| ManifestEntry {
                    id: (*id).into(),
                    image: String::new(),
                    pose: Pose::at(*x, 0.0, 0.0),
                    room: "r".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn learner_validates_inputs() {
        let q = vec![descriptor("q", &[("a", 0.5), ("b", 0.2)], &[1.0, 0.0])];
        let r = vec![descriptor("r", &[("a", 0.5), ("b", 0.2)], &[1.0, 0.0])];
        let cfg = SimilarityConfig::default();
        let qm = manifest(&[("q", 0.0)]);
        let rm = manifest(&[("other", 0.0)]);
        assert_eq!(
            LandmarkLearner::new(&q, &r, &qm, &rm, &cfg, LandmarkOptions::default()).err(),
            Some(LandmarkError::MissingPose("r".into()))
        );
        let rm = manifest(&[("r", 0.0)]);
        let partial = vec![descriptor("r", &[("a", 0.5)], &[1.0, 0.0])];
        assert_eq!(
            LandmarkLearner::new(&q, &partial, &qm, &rm, &cfg, LandmarkOptions::default()).err(),
            Some(LandmarkError::IncompleteScoreMap("r".into()))
        );
        let learner =
            LandmarkLearner::new(&q, &r, &qm, &rm, &cfg, LandmarkOptions::default()).unwrap();
        assert_eq!(learner.candidates(), vec!["a", "b"]);
    }
}
