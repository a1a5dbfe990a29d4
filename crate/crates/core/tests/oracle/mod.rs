//! Independent reference implementations and fixtures shared by the
//! integration tests (also compiled into the `fmloc` acceptance target).
#![allow(dead_code)]

use fmloc_core::{
    select_top_objects, DatasetManifest, Embedding, ImageDescriptor, ManifestEntry, Pose, ScoreMap,
    ScoredLabel, SimilarityConfig,
};
use rand::Rng;

pub const THETA: f64 = 0.75;

// Straight-line similarity --------------------------------------------------

pub fn oracle_f(x: f64, theta: f64) -> f64 {
    if x <= theta {
        return 0.0;
    }
    (x - theta) / (1.0 - theta)
}

pub fn oracle_objects(a: &[ScoredLabel], b: &[ScoredLabel]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            if x.label != y.label {
                continue;
            }
            let (lo, hi) = if x.score < y.score {
                (x.score, y.score)
            } else {
                (y.score, x.score)
            };
            if hi > 0.0 {
                total += lo / hi;
            }
        }
    }
    total
}

pub fn oracle_room(a: &[f64], b: &[f64], theta: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    let mut dot = 0.0;
    for i in 0..a.len() {
        dot += (a[i] / na) * (b[i] / nb);
    }
    oracle_f(dot, theta).min(1.0)
}

/// `(object part, room part, total)` computed from scratch.
pub fn oracle_semantic(a: &ImageDescriptor, b: &ImageDescriptor, theta: f64) -> (f64, f64, f64) {
    let o = oracle_objects(&a.top_objects, &b.top_objects);
    let r = oracle_room(
        a.room_embedding.components(),
        b.room_embedding.components(),
        theta,
    );
    (o, r, o + r)
}

pub fn rel_err(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).abs() / scale
    }
}

// Random descriptors --------------------------------------------------------

pub const LABELS: &[&str] = &[
    "chair", "sink", "tv", "laptop", "book", "clock", "cup", "bottle", "oven", "bed", "couch",
    "vase",
];

/// Descriptor whose score map covers `labels`, unset ones at 0.
pub fn descriptor(
    id: &str,
    labels: &[&str],
    objects: &[(&str, f64)],
    k: usize,
    embedding: &[f64],
) -> ImageDescriptor {
    let entries = labels
        .iter()
        .map(|l| {
            let s = objects
                .iter()
                .find(|(o, _)| o == l)
                .map_or(0.0, |(_, s)| *s);
            ScoredLabel::new(*l, s)
        })
        .collect();
    let score_map = ScoreMap::from_entries(entries).unwrap();
    let top_objects = select_top_objects(&score_map, k).unwrap();
    ImageDescriptor {
        image_id: id.into(),
        score_map,
        top_objects,
        room_label: "room".into(),
        room_candidates: vec![ScoredLabel::new("room", 0.5)],
        room_embedding: Embedding::normalized(embedding.to_vec()).unwrap(),
    }
}

/// Scores are drawn from a small grid now and then so that exact ties and
/// zeros show up.
fn random_score<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0 => 0.0,
        1 | 2 => [0.25, 0.5, 0.75, 1.0][rng.random_range(0..4)],
        _ => rng.random_range(0.0..=1.0),
    }
}

/// Room embeddings cluster around three directions so that many pairs land
/// above the threshold.
fn random_embedding<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut v = vec![0.0; 4];
    v[rng.random_range(0..3)] = 1.0;
    let spread = [0.0, 0.1, 0.3, 1.0][rng.random_range(0..4)];
    for x in &mut v {
        *x += rng.random_range(-spread..=spread);
    }
    if v.iter().all(|x| *x == 0.0) {
        v[3] = 1.0;
    }
    v
}

pub fn random_descriptor<R: Rng>(rng: &mut R, id: &str, k: usize) -> ImageDescriptor {
    let objects: Vec<(&str, f64)> = LABELS.iter().map(|l| (*l, random_score(rng))).collect();
    descriptor(id, LABELS, &objects, k, &random_embedding(rng))
}

// Brute-force retrieval -----------------------------------------------------

/// Exhaustive argmax over every reference; the lowest index wins ties.
pub fn brute_force_match(
    q: &ImageDescriptor,
    refs: &[ImageDescriptor],
    config: &SimilarityConfig,
) -> usize {
    let totals: Vec<f64> = refs
        .iter()
        .map(|r| fmloc_core::semantic_similarity(q, r, config).unwrap().total)
        .collect();
    let best = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    totals.iter().position(|t| *t == best).unwrap()
}

// Landmark fixture ----------------------------------------------------------

pub const ANCHOR: &str = "statue";
pub const DISTRACTOR: &str = "poster";
pub const LANDMARK_LABELS: &[&str] = &["statue", "poster", "chair", "plant", "lamp", "rug"];

fn entry(id: &str, x: f64, room: &str) -> ManifestEntry {
    ManifestEntry {
        id: id.into(),
        image: format!("{id}.jpg"),
        pose: Pose::at(x, 0.0, 0.0),
        room: room.into(),
    }
}

/// Two rooms 20 m apart that share one room label. The statue only stands
/// in room A; the poster hangs in both rooms and in the query views with
/// exactly the same score, so it pulls queries across.
pub struct LandmarkFixture {
    pub queries: Vec<ImageDescriptor>,
    pub references: Vec<ImageDescriptor>,
    pub query_manifest: DatasetManifest,
    pub reference_manifest: DatasetManifest,
}

pub fn landmark_fixture() -> LandmarkFixture {
    let e = [1.0, 0.0];
    let d = |id: &str, objs: &[(&str, f64)]| descriptor(id, LANDMARK_LABELS, objs, 3, &e);
    // References holding the poster come first so that ties favour them.
    let references = vec![
        d("rB1", &[("poster", 0.9), ("lamp", 0.5)]),
        d("rB2", &[("poster", 0.9), ("plant", 0.6)]),
        d("rA1", &[("statue", 0.8), ("chair", 0.5)]),
        d("rA2", &[("chair", 0.5), ("plant", 0.6)]),
    ];
    let queries = vec![
        d("q1", &[("statue", 0.8), ("chair", 0.5), ("poster", 0.9)]),
        d("q2", &[("chair", 0.5), ("plant", 0.6), ("poster", 0.9)]),
        d("q3", &[("poster", 0.9), ("lamp", 0.5)]),
    ];
    let reference_manifest = DatasetManifest::new(vec![
        entry("rB1", 20.0, "B"),
        entry("rB2", 23.0, "B"),
        entry("rA1", 0.0, "A"),
        entry("rA2", 3.0, "A"),
    ])
    .unwrap();
    let query_manifest = DatasetManifest::new(vec![
        entry("q1", 0.2, "A"),
        entry("q2", 3.1, "A"),
        entry("q3", 20.3, "B"),
    ])
    .unwrap();
    LandmarkFixture {
        queries,
        references,
        query_manifest,
        reference_manifest,
    }
}

// Fusion fixture ------------------------------------------------------------

/// One hand-checked fusion case.
pub struct FusionCase {
    pub query: &'static str,
    /// Semantic and patch winners.
    pub s: &'static str,
    pub p: &'static str,
    /// S_sem(s) + P(s) and S_sem(p) + P(p), worked out by hand.
    pub s_sum: f64,
    pub p_sum: f64,
    pub expected: &'static str,
    pub patch_side: bool,
}

/// Three references in one room (room part 1 everywhere). All scores are
/// dyadic so every sum below is exact. The largest per-query best patch
/// score is 1.0, so normalized patch scores equal the raw ones.
///
/// Query objects `a 1, b 0.5`: S(r0) = 3, S(r1) = 1, S(r2) = 1.5.
/// Query objects `a 1, c 0.75`: S(r0) = 2, S(r1) = 1.75, S(r2) = 2.25.
pub fn fusion_fixture() -> (
    Vec<ImageDescriptor>,
    Vec<ImageDescriptor>,
    Vec<fmloc_core::PatchScore>,
    Vec<FusionCase>,
) {
    use fmloc_core::PatchScore;
    let e = [1.0, 0.0];
    let labels = &["a", "b", "c", "d"];
    let d = |id: &str, objs: &[(&str, f64)]| descriptor(id, labels, objs, 2, &e);
    let references = vec![
        d("r0", &[("a", 1.0), ("b", 0.5)]),
        d("r1", &[("c", 1.0), ("d", 0.5)]),
        d("r2", &[("a", 0.5), ("c", 1.0)]),
    ];
    let queries = vec![
        d("keep", &[("a", 1.0), ("b", 0.5)]),
        d("swap", &[("a", 1.0), ("c", 0.75)]),
        d("tie", &[("a", 1.0), ("c", 0.75)]),
        d("agree", &[("a", 1.0), ("b", 0.5)]),
    ];
    let rows: &[(&str, [f64; 3])] = &[
        ("keep", [0.5, 1.0, 0.0]),
        ("swap", [1.0, 0.0, 0.25]),
        ("tie", [0.5, 0.25, 0.25]),
        ("agree", [0.75, 0.5, 0.25]),
    ];
    let patch = rows
        .iter()
        .flat_map(|(q, vs)| {
            vs.iter()
                .enumerate()
                .map(move |(j, v)| PatchScore(q.to_string(), format!("r{j}"), *v))
        })
        .collect();
    let cases = vec![
        // 3 + 0.5 against 1 + 1.
        FusionCase {
            query: "keep",
            s: "r0",
            p: "r1",
            s_sum: 3.5,
            p_sum: 2.0,
            expected: "r0",
            patch_side: false,
        },
        // 2.25 + 0.25 against 2 + 1.
        FusionCase {
            query: "swap",
            s: "r2",
            p: "r0",
            s_sum: 2.5,
            p_sum: 3.0,
            expected: "r0",
            patch_side: true,
        },
        // 2.25 + 0.25 against 2 + 0.5: equal, so the patch winner stays.
        FusionCase {
            query: "tie",
            s: "r2",
            p: "r0",
            s_sum: 2.5,
            p_sum: 2.5,
            expected: "r0",
            patch_side: true,
        },
        FusionCase {
            query: "agree",
            s: "r0",
            p: "r0",
            s_sum: 3.75,
            p_sum: 3.75,
            expected: "r0",
            patch_side: false,
        },
    ];
    (queries, references, patch, cases)
}
