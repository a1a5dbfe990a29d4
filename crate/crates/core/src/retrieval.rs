//! Query-to-reference matching, with optional fusion against externally
//! computed local-feature ("patch") scores.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::ImageDescriptor;
use crate::similarity::{semantic_similarity, SemanticScore, SimilarityConfig, SimilarityError};

#[derive(Clone, Debug, PartialEq)]
pub enum RetrievalError {
    EmptyReferences,
    Similarity {
        query_id: String,
        reference_id: String,
        source: SimilarityError,
    },
    InvalidPatchScore {
        query_id: String,
        reference_id: String,
        value: f64,
    },
    DuplicatePatchScore {
        query_id: String,
        reference_id: String,
    },
    EmptyPatchTable,
    /// The best patch score over the whole query trajectory is zero.
    DegeneratePatchTable,
    MissingPatchScore {
        query_id: String,
        reference_id: String,
    },
    NoPatchCandidate {
        query_id: String,
    },
    UnknownReference {
        query_id: String,
        reference_id: String,
    },
}

impl fmt::Display for RetrievalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyReferences => write!(f, "reference set is empty"),
            Self::Similarity {
                query_id,
                reference_id,
                source,
            } => write!(f, "comparing \"{query_id}\" with \"{reference_id}\": {source}"),
            Self::InvalidPatchScore {
                query_id,
                reference_id,
                value,
            } => write!(
                f,
                "patch score {value} for (\"{query_id}\", \"{reference_id}\") must be finite and nonnegative"
            ),
            Self::DuplicatePatchScore {
                query_id,
                reference_id,
            } => write!(f, "patch score for (\"{query_id}\", \"{reference_id}\") is listed twice"),
            Self::EmptyPatchTable => write!(f, "patch score table is empty"),
            Self::DegeneratePatchTable => {
                write!(f, "every query's best patch score is zero; cannot normalize")
            }
            Self::MissingPatchScore {
                query_id,
                reference_id,
            } => write!(f, "no patch score for (\"{query_id}\", \"{reference_id}\")"),
            Self::NoPatchCandidate { query_id } => {
                write!(f, "patch score table has no entries for query \"{query_id}\"")
            }
            Self::UnknownReference {
                query_id,
                reference_id,
            } => write!(
                f,
                "patch winner \"{reference_id}\" for query \"{query_id}\" is not in the reference set"
            ),
        }
    }
}

impl core::error::Error for RetrievalError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSource {
    Semantic,
    /// Fusion kept the semantic winner (or both methods agreed).
    FusedSemantic,
    /// Fusion switched to the patch winner.
    FusedPatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionDetail {
    pub semantic_winner: String,
    pub patch_winner: String,
    /// Normalized patch score of the semantic winner.
    pub patch_score_semantic_winner: f64,
    /// Normalized patch score of the patch winner.
    pub patch_score_patch_winner: f64,
    /// Semantic plus normalized patch score for the semantic winner.
    pub semantic_side_sum: f64,
    /// Same for the patch winner.
    pub patch_side_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub query_id: String,
    pub reference_id: String,
    /// Semantic score between the query and the chosen reference.
    pub semantic: SemanticScore,
    pub decision_source: DecisionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused_detail: Option<FusionDetail>,
}

/// Index and score of the best reference; the earliest reference wins ties.
pub fn best_reference(
    query: &ImageDescriptor,
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
) -> Result<(usize, SemanticScore), RetrievalError> {
    let mut best: Option<(usize, SemanticScore)> = None;
    for (j, reference) in references.iter().enumerate() {
        let score = semantic_similarity(query, reference, config).map_err(|source| {
            RetrievalError::Similarity {
                query_id: query.image_id.clone(),
                reference_id: reference.image_id.clone(),
                source,
            }
        })?;
        if best.is_none_or(|(_, b)| score.total > b.total) {
            best = Some((j, score));
        }
    }
    best.ok_or(RetrievalError::EmptyReferences)
}

/// Semantic match for one query.
pub fn match_query(
    query: &ImageDescriptor,
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
) -> Result<MatchResult, RetrievalError> {
    let (j, semantic) = best_reference(query, references, config)?;
    Ok(MatchResult {
        query_id: query.image_id.clone(),
        reference_id: references[j].image_id.clone(),
        semantic,
        decision_source: DecisionSource::Semantic,
        fused_detail: None,
    })
}

/// Semantic match for every query, in query order.
pub fn match_queries(
    queries: &[ImageDescriptor],
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
) -> Result<Vec<MatchResult>, RetrievalError> {
    if references.is_empty() {
        return Err(RetrievalError::EmptyReferences);
    }
    queries
        .iter()
        .map(|q| match_query(q, references, config))
        .collect()
}

/// One row of a patch score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchScore(pub String, pub String, pub f64);

/// Pairwise local-feature scores, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchScoreTable {
    entries: Vec<PatchScore>,
    index: BTreeMap<(String, String), usize>,
    /// Per query: entry index of its best reference (first in input order on ties).
    best: BTreeMap<String, usize>,
}

impl PatchScoreTable {
    pub fn from_entries(entries: Vec<PatchScore>) -> Result<Self, RetrievalError> {
        let mut index = BTreeMap::new();
        let mut best: BTreeMap<String, usize> = BTreeMap::new();
        for (i, PatchScore(q, r, v)) in entries.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(RetrievalError::InvalidPatchScore {
                    query_id: q.clone(),
                    reference_id: r.clone(),
                    value: *v,
                });
            }
            if index.insert((q.clone(), r.clone()), i).is_some() {
                return Err(RetrievalError::DuplicatePatchScore {
                    query_id: q.clone(),
                    reference_id: r.clone(),
                });
            }
            match best.get(q) {
                Some(&b) if entries[b].2 >= *v => {}
                _ => {
                    best.insert(q.clone(), i);
                }
            }
        }
        Ok(Self {
            entries,
            index,
            best,
        })
    }

    pub fn entries(&self) -> &[PatchScore] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, query_id: &str, reference_id: &str) -> Option<f64> {
        self.index
            .get(&(String::from(query_id), String::from(reference_id)))
            .map(|&i| self.entries[i].2)
    }

    /// The patch retrieval result for a query: best reference and its score.
    pub fn best_for(&self, query_id: &str) -> Option<(&str, f64)> {
        self.best.get(query_id).map(|&i| {
            let PatchScore(_, r, v) = &self.entries[i];
            (r.as_str(), *v)
        })
    }

    fn divided_by(&self, m: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|PatchScore(q, r, v)| PatchScore(q.clone(), r.clone(), v / m))
                .collect(),
            index: self.index.clone(),
            best: self.best.clone(),
        }
    }
}

/// Patch scores divided by the highest per-query best score of the trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedPatchScores {
    pub table: PatchScoreTable,
    pub normalizer: f64,
}

pub fn normalize_patch_scores(
    table: &PatchScoreTable,
) -> Result<NormalizedPatchScores, RetrievalError> {
    if table.is_empty() {
        return Err(RetrievalError::EmptyPatchTable);
    }
    let m = table
        .best
        .values()
        .map(|&i| table.entries[i].2)
        .fold(0.0f64, f64::max);
    if m <= 0.0 {
        return Err(RetrievalError::DegeneratePatchTable);
    }
    Ok(NormalizedPatchScores {
        table: table.divided_by(m),
        normalizer: m,
    })
}

/// A reference competing in fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionCandidate<'a> {
    pub reference_id: &'a str,
    pub semantic: SemanticScore,
    /// Normalized patch score between the query and this reference.
    pub patch: f64,
}

/// Keeps the semantic winner only if its combined score is strictly larger
/// than the patch winner's; otherwise takes the patch winner.
pub fn fuse(
    query_id: &str,
    semantic_winner: FusionCandidate<'_>,
    patch_winner: FusionCandidate<'_>,
) -> MatchResult {
    let semantic_side_sum = semantic_winner.semantic.total + semantic_winner.patch;
    let patch_side_sum = patch_winner.semantic.total + patch_winner.patch;
    let agree = semantic_winner.reference_id == patch_winner.reference_id;
    let (chosen, source) = if agree || semantic_side_sum > patch_side_sum {
        (&semantic_winner, DecisionSource::FusedSemantic)
    } else {
        (&patch_winner, DecisionSource::FusedPatch)
    };
    MatchResult {
        query_id: String::from(query_id),
        reference_id: String::from(chosen.reference_id),
        semantic: chosen.semantic,
        decision_source: source,
        fused_detail: Some(FusionDetail {
            semantic_winner: String::from(semantic_winner.reference_id),
            patch_winner: String::from(patch_winner.reference_id),
            patch_score_semantic_winner: semantic_winner.patch,
            patch_score_patch_winner: patch_winner.patch,
            semantic_side_sum,
            patch_side_sum,
        }),
    }
}

/// Fused match for one query.
pub fn match_query_fused(
    query: &ImageDescriptor,
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
    patch: &NormalizedPatchScores,
) -> Result<MatchResult, RetrievalError> {
    let qid = query.image_id.as_str();
    let (s_idx, s_sem) = best_reference(query, references, config)?;
    let (p_id, p_pat) =
        patch
            .table
            .best_for(qid)
            .ok_or_else(|| RetrievalError::NoPatchCandidate {
                query_id: String::from(qid),
            })?;
    let p_ref = references
        .iter()
        .find(|r| r.image_id == p_id)
        .ok_or_else(|| RetrievalError::UnknownReference {
            query_id: String::from(qid),
            reference_id: String::from(p_id),
        })?;
    let s_id = references[s_idx].image_id.as_str();
    let s_pat = patch
        .table
        .score(qid, s_id)
        .ok_or_else(|| RetrievalError::MissingPatchScore {
            query_id: String::from(qid),
            reference_id: String::from(s_id),
        })?;
    let p_sem =
        semantic_similarity(query, p_ref, config).map_err(|source| RetrievalError::Similarity {
            query_id: String::from(qid),
            reference_id: String::from(p_id),
            source,
        })?;
    Ok(fuse(
        qid,
        FusionCandidate {
            reference_id: s_id,
            semantic: s_sem,
            patch: s_pat,
        },
        FusionCandidate {
            reference_id: p_id,
            semantic: p_sem,
            patch: p_pat,
        },
    ))
}

pub fn match_fused(
    queries: &[ImageDescriptor],
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
    patch: &NormalizedPatchScores,
) -> Result<Vec<MatchResult>, RetrievalError> {
    if references.is_empty() {
        return Err(RetrievalError::EmptyReferences);
    }
    queries
        .iter()
        .map(|q| match_query_fused(q, references, config, patch))
        .collect()
}
