//! Parallel drivers over the core operations. Results are always returned in
//! input order.

use rayon::prelude::*;

use fmloc_core::retrieval::{match_query, match_query_fused};
use fmloc_core::{
    build_descriptor, DescriptorConfig, DescriptorError, Gateway, ImageDescriptor, ImageRef,
    LandmarkError, LandmarkLearner, LandmarkReport, ManifestEntry, MatchResult, ModelBackend,
    NormalizedPatchScores, RetrievalError, SimilarityConfig, Vocabulary,
};

use crate::error::{Error, Result};

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn build_descriptors<B: ModelBackend>(
    entries: &[ManifestEntry],
    vocab: &Vocabulary,
    gateway: &Gateway<B>,
    config: DescriptorConfig,
    pool: &rayon::ThreadPool,
) -> Vec<Result<ImageDescriptor, DescriptorError>> {
    pool.install(|| {
        entries
            .par_iter()
            .map(|e| build_descriptor(&ImageRef::new(&e.id, &e.image), vocab, gateway, config))
            .collect()
    })
}

pub fn match_all(
    queries: &[ImageDescriptor],
    references: &[ImageDescriptor],
    config: &SimilarityConfig,
    patch: Option<&NormalizedPatchScores>,
    pool: &rayon::ThreadPool,
) -> Result<Vec<MatchResult>, RetrievalError> {
    if references.is_empty() {
        return Err(RetrievalError::EmptyReferences);
    }
    pool.install(|| {
        queries
            .par_iter()
            .map(|q| match patch {
                Some(p) => match_query_fused(q, references, config, p),
                None => match_query(q, references, config),
            })
            .collect()
    })
}

pub fn learn_landmarks(
    learner: &LandmarkLearner<'_>,
    pool: &rayon::ThreadPool,
) -> Result<LandmarkReport, LandmarkError> {
    let baseline = learner.baseline()?;
    let results = pool.install(|| {
        learner
            .candidates()
            .into_par_iter()
            .map(|label| learner.error_without(&label).map(|e| (label, e)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let options = learner.options();
    Ok(LandmarkReport::new(
        options.threshold,
        options.elimination,
        baseline,
        results,
    ))
}
