//! Dataset manifests and localization metrics: mean translation error and
//! room-detection rate, overall and per ground-truth room.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::retrieval::MatchResult;

const QUATERNION_TOLERANCE: f64 = 1e-6;

/// Camera pose in a shared world frame (meters). Orientation is `[w, x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 4]>,
}

impl Pose {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: [x, y, z],
            orientation: None,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.position.iter().any(|c| !c.is_finite()) {
            return Err("position is not finite");
        }
        if let Some(q) = self.orientation {
            if q.iter().any(|c| !c.is_finite()) {
                return Err("orientation is not finite");
            }
            let norm = libm::sqrt(q.iter().map(|c| c * c).sum::<f64>());
            if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
                return Err("orientation is not a unit quaternion");
            }
        }
        Ok(())
    }
}

/// Euclidean distance between camera positions; orientation is ignored.
pub fn translation_error(a: &Pose, b: &Pose) -> f64 {
    let [dx, dy, dz] = [
        a.position[0] - b.position[0],
        a.position[1] - b.position[1],
        a.position[2] - b.position[2],
    ];
    libm::sqrt(dx * dx + dy * dy + dz * dz)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub pose: Pose,
    pub room: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvaluationError {
    DuplicateId(String),
    InvalidEntry { id: String, reason: String },
    UnknownQuery(String),
    UnknownReference(String),
    DuplicateQuery(String),
}

impl fmt::Display for EvaluationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId(id) => write!(f, "image id \"{id}\" appears more than once"),
            Self::InvalidEntry { id, reason } => write!(f, "manifest entry \"{id}\": {reason}"),
            Self::UnknownQuery(id) => write!(f, "query \"{id}\" is not in the query manifest"),
            Self::UnknownReference(id) => {
                write!(f, "reference \"{id}\" is not in the reference manifest")
            }
            Self::DuplicateQuery(id) => write!(f, "query \"{id}\" has more than one match"),
        }
    }
}

impl core::error::Error for EvaluationError {}

/// Images of one trajectory with poses and ground-truth rooms, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    index: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, EvaluationError> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            let invalid = |reason: &str| EvaluationError::InvalidEntry {
                id: e.id.clone(),
                reason: String::from(reason),
            };
            if e.id.is_empty() {
                return Err(invalid("empty id"));
            }
            if e.room.trim().is_empty() {
                return Err(invalid("empty room label"));
            }
            e.pose.validate().map_err(invalid)?;
            if index.insert(e.id.clone(), i).is_some() {
                return Err(EvaluationError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEvaluation {
    pub query_id: String,
    pub reference_id: String,
    pub query_room: String,
    pub reference_room: String,
    pub translation_error: f64,
    pub room_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSummary {
    pub room: String,
    pub queries: usize,
    pub mean_translation_error: f64,
    pub room_detection_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub queries: usize,
    pub mean_translation_error: f64,
    pub room_detection_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total: Totals,
    /// One row per ground-truth query room, in order of first appearance.
    pub rooms: Vec<RoomSummary>,
    pub queries: Vec<QueryEvaluation>,
}

fn summarize<'a>(rows: impl Iterator<Item = &'a QueryEvaluation>) -> Totals {
    let (mut n, mut err, mut correct) = (0usize, 0.0f64, 0usize);
    for r in rows {
        n += 1;
        err += r.translation_error;
        correct += usize::from(r.room_correct);
    }
    if n == 0 {
        return Totals {
            queries: 0,
            mean_translation_error: 0.0,
            room_detection_rate: 0.0,
        };
    }
    Totals {
        queries: n,
        mean_translation_error: err / n as f64,
        room_detection_rate: correct as f64 / n as f64,
    }
}

/// Scores each match against the manifests. A room detection is correct
/// when the retrieved reference has the query's ground-truth room.
pub fn evaluate(
    matches: &[MatchResult],
    queries: &DatasetManifest,
    references: &DatasetManifest,
) -> Result<EvaluationReport, EvaluationError> {
    let mut seen = BTreeMap::new();
    let mut rows = Vec::with_capacity(matches.len());
    for m in matches {
        if seen.insert(m.query_id.as_str(), ()).is_some() {
            return Err(EvaluationError::DuplicateQuery(m.query_id.clone()));
        }
        let q = queries
            .get(&m.query_id)
            .ok_or_else(|| EvaluationError::UnknownQuery(m.query_id.clone()))?;
        let r = references
            .get(&m.reference_id)
            .ok_or_else(|| EvaluationError::UnknownReference(m.reference_id.clone()))?;
        rows.push(QueryEvaluation {
            query_id: q.id.clone(),
            reference_id: r.id.clone(),
            query_room: q.room.clone(),
            reference_room: r.room.clone(),
            translation_error: translation_error(&q.pose, &r.pose),
            room_correct: q.room == r.room,
        });
    }

    let mut room_order: Vec<&str> = Vec::new();
    for r in &rows {
        if !room_order.contains(&r.query_room.as_str()) {
            room_order.push(&r.query_room);
        }
    }
    let rooms = room_order
        .iter()
        .map(|room| {
            let t = summarize(rows.iter().filter(|r| r.query_room == *room));
            RoomSummary {
                room: String::from(*room),
                queries: t.queries,
                mean_translation_error: t.mean_translation_error,
                room_detection_rate: t.room_detection_rate,
            }
        })
        .collect();

    Ok(EvaluationReport {
        total: summarize(rows.iter()),
        rooms,
        queries: rows,
    })
}
