//! Semantic visual place recognition.
//!
//! Images are described by language: the labels of the objects a
//! vision-language model grounds in the image, plus a room label proposed by
//! a language model and re-ranked by the vision-language model. Query images
//! are matched against reference images by comparing those descriptors.
//!
//! The crate is `no_std` (with `alloc`). Model access goes through the
//! [`gateway::ModelBackend`] trait; file formats, HTTP and caching live in the
//! `fmloc` companion crate.
//!
//! Modules, in pipeline order:
//!
//! 1. [`vocabulary`] – the open-vocabulary object label list.
//! 2. [`gateway`] – grounding, completion and embedding behind one interface.
//! 3. [`descriptor`] – per-image descriptor construction.
//! 4. [`similarity`] – object, room and semantic similarity.
//! 5. [`retrieval`] – query-to-reference matching and patch-score fusion.
//! 6. [`landmarks`] – leave-one-out landmark learning.
//! 7. [`evaluation`] – poses, manifests, translation error and room detection.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod descriptor;
pub mod evaluation;
pub mod gateway;
pub mod landmarks;
pub mod retrieval;
pub mod similarity;
pub mod vocabulary;

pub use descriptor::{
    build_descriptor, build_room_prompt, classify_room, ground_objects, grounding_prompt,
    select_top_objects, DescriptorConfig, DescriptorError, ImageDescriptor, RoomClassification,
    ScoreMap, ScoredLabel, DEFAULT_TOP_K,
};
pub use evaluation::{
    evaluate, translation_error, DatasetManifest, EvaluationError, EvaluationReport, ManifestEntry,
    Pose, QueryEvaluation, RoomSummary, Totals,
};
pub use gateway::{
    Capability, CompletionSet, Embedding, Gateway, GatewayError, GroundingScore, ImageRef,
    ModelBackend, ScoreScale, DEFAULT_COMPLETIONS,
};
pub use landmarks::{
    apply_landmark_filter, eliminate_label, Elimination, LabelImpact, LandmarkError,
    LandmarkLearner, LandmarkOptions, LandmarkReport, DEFAULT_LANDMARK_THRESHOLD,
};
pub use retrieval::{
    fuse, match_fused, match_queries, normalize_patch_scores, DecisionSource, FusionCandidate,
    FusionDetail, MatchResult, NormalizedPatchScores, PatchScore, PatchScoreTable, RetrievalError,
};
pub use similarity::{
    object_similarity, room_similarity, semantic_similarity, threshold_renorm, FilterMode,
    SemanticScore, SimilarityConfig, SimilarityError, DEFAULT_THETA,
};
pub use vocabulary::{normalize_label, parse_label_list, LabelSource, Vocabulary, VocabularyError};
