//! Per-image semantic descriptors.
//!
//! A descriptor is built in three steps:
//!
//! 1. every vocabulary label is grounded against the image with the prompt
//!    `a photo of a <label>` and the `k` best labels are kept;
//! 2. the language model is asked which place shows those objects;
//! 3. each proposed room is grounded with the same prompt shape, the best one
//!    wins and is embedded.
//!
//! The full grounding map is kept so that top-k selection can be redone
//! without model calls (see [`crate::landmarks`]).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::gateway::{Embedding, Gateway, GatewayError, GroundingScore, ImageRef, ModelBackend};
use crate::vocabulary::Vocabulary;

pub const DEFAULT_TOP_K: usize = 5;

const ROOM_PROMPT_HEAD: &str = "I think I see a ";
const ROOM_PROMPT_TAIL: &str = " here. Therefore, this place is most probably a";

/// Grounding prompt for a label. No article agreement is applied.
pub fn grounding_prompt(label: &str) -> String {
    format!("a photo of a {label}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub label: String,
    pub score: f64,
}

impl ScoredLabel {
    pub fn new(label: impl Into<String>, score: f64) -> Self {
        Self {
            label: label.into(),
            score,
        }
    }
}

/// Grounding score for every vocabulary label, in vocabulary order.
///
/// Serialized as a JSON object whose key order is the vocabulary order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreMap(Vec<ScoredLabel>);

impl ScoreMap {
    /// Fails on a duplicate label.
    pub fn from_entries(entries: Vec<ScoredLabel>) -> Result<Self, DescriptorError> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|p| p.label == e.label) {
                return Err(DescriptorError::Invalid(format!(
                    "score map repeats label \"{}\"",
                    e.label
                )));
            }
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[ScoredLabel] {
        &self.0
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.0.iter().find(|e| e.label == label).map(|e| e.score)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|e| e.label.as_str())
    }
}

impl Serialize for ScoreMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for e in &self.0 {
            map.serialize_entry(&e.label, &e.score)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ScoreMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OrderedVisitor;

        impl<'de> Visitor<'de> for OrderedVisitor {
            type Value = ScoreMap;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from label to grounding score")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<ScoreMap, A::Error> {
                let mut entries = Vec::with_capacity(access.size_hint().unwrap_or(0));
                while let Some((label, score)) = access.next_entry::<String, f64>()? {
                    entries.push(ScoredLabel { label, score });
                }
                ScoreMap::from_entries(entries).map_err(serde::de::Error::custom)
            }
        }

        deserializer.deserialize_map(OrderedVisitor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescriptorConfig {
    /// Number of detected objects kept per image.
    pub k: usize,
    /// Number of room proposals requested.
    pub n: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            n: crate::gateway::DEFAULT_COMPLETIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DescriptorError {
    Gateway {
        image_id: String,
        /// Object label or room candidate whose request failed.
        label: Option<String>,
        source: GatewayError,
    },
    VocabularyTooSmall {
        available: usize,
        k: usize,
    },
    EmptyTopObjects,
    /// A stored descriptor violates an invariant.
    Invalid(String),
}

impl fmt::Display for DescriptorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gateway {
                image_id,
                label: Some(label),
                source,
            } => write!(f, "image \"{image_id}\", label \"{label}\": {source}"),
            Self::Gateway {
                image_id, source, ..
            } => write!(f, "image \"{image_id}\": {source}"),
            Self::VocabularyTooSmall { available, k } => {
                write!(f, "cannot select {k} objects from {available} labels")
            }
            Self::EmptyTopObjects => write!(f, "no objects to describe the room with"),
            Self::Invalid(msg) => write!(f, "invalid descriptor: {msg}"),
        }
    }
}

impl core::error::Error for DescriptorError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Self::Gateway { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Semantic description of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDescriptor {
    pub image_id: String,
    pub score_map: ScoreMap,
    /// The `k` best entries of `score_map`, descending.
    pub top_objects: Vec<ScoredLabel>,
    pub room_label: String,
    /// Room proposals in generation order with their grounding scores.
    pub room_candidates: Vec<ScoredLabel>,
    pub room_embedding: Embedding,
}

impl ImageDescriptor {
    /// Checks the structural invariants of a stored descriptor.
    pub fn validate(&self) -> Result<(), DescriptorError> {
        let invalid = |msg: String| {
            Err(DescriptorError::Invalid(format!(
                "{}: {msg}",
                self.image_id
            )))
        };
        if self.image_id.is_empty() {
            return invalid("empty image id".into());
        }
        for e in self.score_map.entries() {
            if !(0.0..=1.0).contains(&e.score) {
                return invalid(format!(
                    "score {} for \"{}\" is outside [0, 1]",
                    e.score, e.label
                ));
            }
        }
        if self.top_objects.is_empty() {
            return invalid("no top objects".into());
        }
        let expected = select_top_objects(&self.score_map, self.top_objects.len())?;
        if expected != self.top_objects {
            return invalid("top objects are not the best entries of the score map".into());
        }
        match room_winner(&self.room_candidates) {
            Some(winner) if winner.label == self.room_label => {}
            _ => {
                return invalid(format!(
                    "room label \"{}\" is not the best candidate",
                    self.room_label
                ))
            }
        }
        for c in &self.room_candidates {
            if !(0.0..=1.0).contains(&c.score) {
                return invalid(format!(
                    "room candidate score {} is outside [0, 1]",
                    c.score
                ));
            }
        }
        if !self.room_embedding.is_unit() {
            return invalid("room embedding is not unit norm".into());
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.top_objects.len()
    }
}

/// Grounds every vocabulary label against `image`.
pub fn ground_objects<B: ModelBackend>(
    image: &ImageRef,
    vocab: &Vocabulary,
    gateway: &Gateway<B>,
) -> Result<ScoreMap, DescriptorError> {
    let entries = vocab
        .labels()
        .iter()
        .map(|label| {
            gateway
                .ground(image, &grounding_prompt(label))
                .map(|s| ScoredLabel::new(label.clone(), s.value()))
                .map_err(|source| DescriptorError::Gateway {
                    image_id: image.id.clone(),
                    label: Some(label.clone()),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreMap(entries))
}

/// The `k` highest-scoring labels, descending; ties keep map order.
pub fn select_top_objects(
    score_map: &ScoreMap,
    k: usize,
) -> Result<Vec<ScoredLabel>, DescriptorError> {
    if k == 0 || score_map.len() < k {
        return Err(DescriptorError::VocabularyTooSmall {
            available: score_map.len(),
            k,
        });
    }
    Ok(top_k_where(score_map, k, |_| true))
}

/// Up to `k` best entries among labels accepted by `keep`.
pub(crate) fn top_k_where(
    score_map: &ScoreMap,
    k: usize,
    keep: impl Fn(&str) -> bool,
) -> Vec<ScoredLabel> {
    let mut ranked: Vec<&ScoredLabel> = score_map
        .entries()
        .iter()
        .filter(|e| keep(&e.label))
        .collect();
    // Stable sort keeps map (vocabulary) order among equal scores.
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.into_iter().take(k).cloned().collect()
}

/// `I think I see a <l1>, <l2>, ... here. Therefore, this place is most probably a`
pub fn build_room_prompt(top_objects: &[ScoredLabel]) -> Result<String, DescriptorError> {
    if top_objects.is_empty() {
        return Err(DescriptorError::EmptyTopObjects);
    }
    let mut prompt = String::from(ROOM_PROMPT_HEAD);
    for (i, obj) in top_objects.iter().enumerate() {
        if i > 0 {
            prompt.push_str(", ");
        }
        prompt.push_str(&obj.label);
    }
    prompt.push_str(ROOM_PROMPT_TAIL);
    Ok(prompt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomClassification {
    pub label: String,
    pub candidates: Vec<ScoredLabel>,
    pub embedding: Embedding,
}

/// Highest grounding score; the earliest candidate wins ties.
fn room_winner(candidates: &[ScoredLabel]) -> Option<&ScoredLabel> {
    candidates
        .iter()
        .fold(None, |best: Option<&ScoredLabel>, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
}

pub fn classify_room<B: ModelBackend>(
    image: &ImageRef,
    top_objects: &[ScoredLabel],
    gateway: &Gateway<B>,
    n: usize,
) -> Result<RoomClassification, DescriptorError> {
    let wrap = |label: Option<&str>| {
        let image_id = image.id.clone();
        let label = label.map(String::from);
        move |source| DescriptorError::Gateway {
            image_id,
            label,
            source,
        }
    };
    let prompt = build_room_prompt(top_objects)?;
    let proposals = gateway.complete(&prompt, n).map_err(wrap(None))?;
    let candidates = proposals
        .candidates
        .into_iter()
        .map(|room| {
            let score = gateway
                .ground(image, &grounding_prompt(&room))
                .map(GroundingScore::value)
                .map_err(wrap(Some(&room)))?;
            Ok(ScoredLabel::new(room, score))
        })
        .collect::<Result<Vec<_>, DescriptorError>>()?;
    // Gateway guarantees at least one candidate.
    let label =
        room_winner(&candidates)
            .map(|w| w.label.clone())
            .ok_or(DescriptorError::Gateway {
                image_id: image.id.clone(),
                label: None,
                source: GatewayError::NoCandidates { prompt },
            })?;
    let embedding = gateway.embed(&label).map_err(wrap(Some(&label)))?;
    Ok(RoomClassification {
        label,
        candidates,
        embedding,
    })
}

pub fn build_descriptor<B: ModelBackend>(
    image: &ImageRef,
    vocab: &Vocabulary,
    gateway: &Gateway<B>,
    config: DescriptorConfig,
) -> Result<ImageDescriptor, DescriptorError> {
    if vocab.len() < config.k || config.k == 0 {
        return Err(DescriptorError::VocabularyTooSmall {
            available: vocab.len(),
            k: config.k,
        });
    }
    let score_map = ground_objects(image, vocab, gateway)?;
    let top_objects = select_top_objects(&score_map, config.k)?;
    let room = classify_room(image, &top_objects, gateway, config.n)?;
    Ok(ImageDescriptor {
        image_id: image.id.clone(),
        score_map,
        top_objects,
        room_label: room.label,
        room_candidates: room.candidates,
        room_embedding: room.embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::tests::MapBackend;
    use crate::gateway::Capability;
    use alloc::string::ToString;
    use alloc::vec;
    use core::sync::atomic::Ordering;

    fn map(pairs: &[(&str, f64)]) -> ScoreMap {
        ScoreMap::from_entries(
            pairs
                .iter()
                .map(|(l, s)| ScoredLabel::new(*l, *s))
                .collect(),
        )
        .unwrap()
    }

    fn labels(v: &[ScoredLabel]) -> Vec<&str> {
        v.iter().map(|e| e.label.as_str()).collect()
    }

    #[test]
    fn ground_objects_uses_literal_prompt() {
        let vocab = Vocabulary::from_labels(["chair"]).unwrap();
        let gw = Gateway::new(MapBackend::default().ground("img1", "a photo of a chair", 0.4));
        let m = ground_objects(&ImageRef::new("img1", "img1.png"), &vocab, &gw).unwrap();
        assert_eq!(m, map(&[("chair", 0.4)]));
    }

    #[test]
    fn ground_objects_calls_once_per_label() {
        let vocab = Vocabulary::from_labels(["a", "b", "c"]).unwrap();
        let gw = Gateway::new(
            MapBackend::default()
                .ground("i", "a photo of a a", 0.1)
                .ground("i", "a photo of a b", 0.2)
                .ground("i", "a photo of a c", 0.3),
        );
        ground_objects(&ImageRef::new("i", ""), &vocab, &gw).unwrap();
        assert_eq!(gw.backend().ground_calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn prompt_has_no_article_agreement() {
        assert_eq!(
            grounding_prompt("living wall portrait"),
            "a photo of a living wall portrait"
        );
        assert_eq!(grounding_prompt("oven"), "a photo of a oven");
    }

    #[test]
    fn ground_objects_annotates_failing_label() {
        let vocab = Vocabulary::from_labels(["chair", "desk"]).unwrap();
        let gw = Gateway::new(MapBackend::default().ground("i", "a photo of a chair", 0.4));
        let err = ground_objects(&ImageRef::new("i", ""), &vocab, &gw).unwrap_err();
        assert!(matches!(
            err,
            DescriptorError::Gateway { ref label, source: GatewayError::Miss { capability: Capability::Ground, .. }, .. }
                if label.as_deref() == Some("desk")
        ));
    }

    #[test]
    fn top_objects_sorted_descending() {
        let top = select_top_objects(&map(&[("a", 0.1), ("b", 0.9), ("c", 0.5)]), 2).unwrap();
        assert_eq!(
            top,
            vec![ScoredLabel::new("b", 0.9), ScoredLabel::new("c", 0.5)]
        );
    }

    #[test]
    fn top_objects_ties_keep_vocabulary_order() {
        let top = select_top_objects(&map(&[("a", 0.3), ("b", 0.3), ("c", 0.3)]), 2).unwrap();
        assert_eq!(labels(&top), vec!["a", "b"]);
    }

    #[test]
    fn top_objects_needs_enough_labels() {
        assert_eq!(
            select_top_objects(&map(&[("a", 0.3)]), 2).unwrap_err(),
            DescriptorError::VocabularyTooSmall { available: 1, k: 2 }
        );
    }

    #[test]
    fn room_prompt_template() {
        let top: Vec<_> = ["cup", "plate", "fork", "oven", "sink"]
            .iter()
            .map(|l| ScoredLabel::new(*l, 0.5))
            .collect();
        assert_eq!(
            build_room_prompt(&top).unwrap(),
            "I think I see a cup, plate, fork, oven, sink here. Therefore, this place is most probably a"
        );
        assert_eq!(
            build_room_prompt(&[ScoredLabel::new("desk", 0.2)]).unwrap(),
            "I think I see a desk here. Therefore, this place is most probably a"
        );
        assert_eq!(
            build_room_prompt(&[]).unwrap_err(),
            DescriptorError::EmptyTopObjects
        );
    }

    #[test]
    fn room_prompt_follows_score_order() {
        let m = map(&[("apple", 0.1), ("zebra", 0.9), ("mouse", 0.5)]);
        let top = select_top_objects(&m, 3).unwrap();
        assert_eq!(
            build_room_prompt(&top).unwrap(),
            "I think I see a zebra, mouse, apple here. Therefore, this place is most probably a"
        );
    }

    const DESK_PROMPT: &str = "I think I see a desk here. Therefore, this place is most probably a";

    fn room_backend(texts: &[&str], scores: &[(&str, f64)]) -> MapBackend {
        let mut b = MapBackend::default().complete(DESK_PROMPT, texts);
        for (room, s) in scores {
            b = b
                .ground("i", &grounding_prompt(room), *s)
                .embed(room, &[1.0, 1.0]);
        }
        b
    }

    #[test]
    fn room_is_argmax_of_grounding() {
        let gw = Gateway::new(room_backend(
            &["pantry", "kitchen"],
            &[("kitchen", 0.6), ("pantry", 0.3)],
        ));
        let r = classify_room(
            &ImageRef::new("i", ""),
            &[ScoredLabel::new("desk", 0.2)],
            &gw,
            5,
        )
        .unwrap();
        assert_eq!(r.label, "kitchen");
        assert_eq!(labels(&r.candidates), vec!["pantry", "kitchen"]);
        assert!(r.embedding.is_unit());
    }

    #[test]
    fn single_room_candidate_wins() {
        let gw = Gateway::new(room_backend(&["office"], &[("office", 0.01)]));
        let r = classify_room(
            &ImageRef::new("i", ""),
            &[ScoredLabel::new("desk", 0.2)],
            &gw,
            5,
        )
        .unwrap();
        assert_eq!(r.label, "office");
    }

    #[test]
    fn room_ties_go_to_generation_order() {
        let gw = Gateway::new(room_backend(
            &["study", "office"],
            &[("office", 0.5), ("study", 0.5)],
        ));
        let r = classify_room(
            &ImageRef::new("i", ""),
            &[ScoredLabel::new("desk", 0.2)],
            &gw,
            5,
        )
        .unwrap();
        assert_eq!(r.label, "study");
    }

    fn three_label_backend() -> MapBackend {
        MapBackend::default()
            .ground("img", "a photo of a chair", 0.2)
            .ground("img", "a photo of a desk", 0.7)
            .ground("img", "a photo of a cup", 0.4)
            .complete(
                "I think I see a desk, cup here. Therefore, this place is most probably a",
                &["An office.", "study", "office"],
            )
            .ground("img", "a photo of a office", 0.35)
            .ground("img", "a photo of a study", 0.30)
            .embed("office", &[0.0, 2.0, 0.0])
    }

    #[test]
    fn end_to_end_matches_manual_composition() {
        let vocab = Vocabulary::from_labels(["chair", "desk", "cup"]).unwrap();
        let gw = Gateway::new(three_label_backend());
        let image = ImageRef::new("img", "img.jpg");
        let d = build_descriptor(&image, &vocab, &gw, DescriptorConfig { k: 2, n: 5 }).unwrap();
        // Hand composition: scores {chair .2, desk .7, cup .4} -> top2 [desk, cup];
        // completions normalize to [office, study]; office .35 beats study .30.
        assert_eq!(
            d.score_map,
            map(&[("chair", 0.2), ("desk", 0.7), ("cup", 0.4)])
        );
        assert_eq!(
            d.top_objects,
            vec![ScoredLabel::new("desk", 0.7), ScoredLabel::new("cup", 0.4)]
        );
        assert_eq!(d.room_label, "office");
        assert_eq!(
            d.room_candidates,
            vec![
                ScoredLabel::new("office", 0.35),
                ScoredLabel::new("study", 0.30)
            ]
        );
        assert_eq!(d.room_embedding.components(), &[0.0, 1.0, 0.0]);
        d.validate().unwrap();

        let again = build_descriptor(&image, &vocab, &gw, DescriptorConfig { k: 2, n: 5 }).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn missing_image_is_reported_by_id() {
        let vocab = Vocabulary::from_labels(["chair", "desk", "cup"]).unwrap();
        let gw = Gateway::new(three_label_backend());
        let err = build_descriptor(
            &ImageRef::new("ghost", ""),
            &vocab,
            &gw,
            DescriptorConfig { k: 2, n: 5 },
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn validate_catches_bad_top_objects() {
        let vocab = Vocabulary::from_labels(["chair", "desk", "cup"]).unwrap();
        let gw = Gateway::new(three_label_backend());
        let mut d = build_descriptor(
            &ImageRef::new("img", ""),
            &vocab,
            &gw,
            DescriptorConfig { k: 2, n: 5 },
        )
        .unwrap();
        d.top_objects.swap(0, 1);
        assert!(matches!(d.validate(), Err(DescriptorError::Invalid(_))));
    }

    #[test]
    fn score_map_keeps_json_order() {
        let m = map(&[("zebra", 0.5), ("apple", 0.25)]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"zebra":0.5,"apple":0.25}"#);
        assert_eq!(serde_json::from_str::<ScoreMap>(&json).unwrap(), m);
        assert!(serde_json::from_str::<ScoreMap>(r#"{"a":0.1,"a":0.2}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn top_k_matches_full_sort(scores in proptest::collection::vec(0u32..20, 5..40), k in 1usize..5) {
            let entries: Vec<_> = scores.iter().enumerate()
                .map(|(i, s)| ScoredLabel::new(alloc::format!("l{i}"), *s as f64 / 20.0)).collect();
            let m = ScoreMap::from_entries(entries.clone()).unwrap();
            let top = select_top_objects(&m, k).unwrap();
            // Oracle: full insertion sort by (score desc, index asc).
            let mut idx: Vec<usize> = (0..entries.len()).collect();
            for i in 1..idx.len() {
                let mut j = i;
                while j > 0 && (entries[idx[j]].score > entries[idx[j - 1]].score) {
                    idx.swap(j, j - 1);
                    j -= 1;
                }
            }
            let expected: Vec<_> = idx[..k].iter().map(|&i| entries[i].clone()).collect();
            proptest::prop_assert_eq!(&top, &expected);
            let min_in = top.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
            for e in &entries {
                if !top.iter().any(|t| t.label == e.label) {
                    proptest::prop_assert!(e.score <= min_in);
                }
            }
        }
    }
}
