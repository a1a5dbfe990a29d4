//! Regenerates the synthetic demo dataset under `data/demo/`.
//!
//! Four rooms along one corridor-shaped trajectory. Every reference sees a
//! sliding window over its room's object pool, so neighbouring views share
//! most but not all objects. Queries are planted in three flavours:
//!
//! * `plain`: close to a reference, same objects, light score noise;
//! * `rearranged`: objects re-weighted, local features point at a decoy in
//!   another room (the patch score table is wrong on purpose);
//! * `hallway`: near-identical low-confidence objects everywhere, so only the
//!   patch scores can tell positions apart.
//!
//! Run with `cargo run -p fmloc --example make_demo`, then rebless the
//! golden outputs with `FMLOC_BLESS=1 cargo test -p fmloc --test golden`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fmloc::fixture::FixtureStore;
use fmloc::formats::{self, write_atomic};
use fmloc_core::{
    build_room_prompt, grounding_prompt, select_top_objects, DatasetManifest, ManifestEntry,
    PatchScore, PatchScoreTable, Pose, ScoreMap, ScoredLabel, Vocabulary, DEFAULT_TOP_K,
};

const SEED: u64 = 0x464d_4c6f_6344_656d;
const REFS_PER_ROOM: usize = 10;

const EXTENSION: &[&str] = &[
    "whiteboard",
    "projector",
    "monitor",
    "filing cabinet",
    "fire extinguisher",
    "notice board",
    "coat rack",
    "radiator",
];

struct Room {
    name: &'static str,
    /// Ranked room proposals as the language model would phrase them.
    completions: &'static [&'static str],
    pool: &'static [&'static str],
    origin: [f64; 2],
    spacing: f64,
}

const ROOMS: &[Room] = &[
    Room {
        name: "kitchen",
        completions: &["kitchen.", "a break room", "Kitchen", "dining room"],
        pool: &[
            "refrigerator",
            "oven",
            "microwave",
            "sink",
            "cup",
            "bottle",
            "bowl",
            "dining table",
            "toaster",
            "knife",
        ],
        origin: [0.0, 0.0],
        spacing: 1.0,
    },
    Room {
        name: "hallway",
        completions: &["hallway", "corridor", "the lobby"],
        pool: &[
            "fire extinguisher",
            "notice board",
            "coat rack",
            "radiator",
            "bench",
        ],
        origin: [12.0, 1.5],
        spacing: 2.0,
    },
    Room {
        name: "conference room",
        completions: &["conference room", "meeting room.", "a classroom"],
        pool: &[
            "chair",
            "dining table",
            "tv",
            "laptop",
            "whiteboard",
            "projector",
            "cell phone",
            "remote",
            "clock",
            "bottle",
        ],
        origin: [33.0, 0.0],
        spacing: 1.0,
    },
    Room {
        name: "office",
        completions: &[
            "office",
            "study\nbecause of the desk",
            "an office",
            "workspace",
        ],
        pool: &[
            "laptop",
            "keyboard",
            "mouse",
            "monitor",
            "chair",
            "book",
            "potted plant",
            "filing cabinet",
            "cup",
            "scissors",
        ],
        origin: [45.0, 0.0],
        spacing: 1.0,
    },
];

/// Normalized room names each room's proposals turn into, canonical first.
fn candidates(room: &Room) -> Vec<String> {
    fmloc_core::gateway::normalize_completions(
        room.completions.iter().map(|s| s.to_string()).collect(),
        5,
    )
    .candidates
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Reference,
    Plain,
    Rearranged,
    Hallway,
}

struct Image {
    entry: ManifestEntry,
    room: usize,
    /// Reference slot this view was taken next to.
    slot: usize,
    kind: Kind,
    /// Winning room name; a synonym for a few references.
    room_winner: usize,
}

#[derive(Serialize)]
struct Scenario {
    seed: u64,
    plain: Vec<String>,
    rearranged: Vec<String>,
    hallway: Vec<String>,
}

fn round(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

fn yaw_quaternion(yaw: f64) -> [f64; 4] {
    let (s, c) = (yaw / 2.0).sin_cos();
    [c, 0.0, 0.0, s]
}

fn pose(rng: &mut ChaCha8Rng, room: &Room, slot: usize, jitter: f64) -> Pose {
    let x = room.origin[0] + room.spacing * slot as f64 + rng.random_range(-jitter..=jitter);
    let y = room.origin[1] + rng.random_range(-jitter..=jitter);
    Pose {
        position: [round(x, 3), round(y, 3), 1.2],
        orientation: Some(yaw_quaternion(rng.random_range(-0.3..0.3))),
    }
}

fn entry(id: String, pose: Pose, room: &Room) -> ManifestEntry {
    ManifestEntry {
        image: format!("images/{id}.jpg"),
        id,
        pose,
        room: room.name.to_string(),
    }
}

/// Object scores of one image over the whole vocabulary.
fn object_scores(rng: &mut ChaCha8Rng, vocab: &Vocabulary, img: &Image) -> BTreeMap<String, f64> {
    let room = &ROOMS[img.room];
    let mut scores: BTreeMap<String, f64> = vocab
        .labels()
        .iter()
        .map(|l| (l.clone(), rng.random_range(0.01..0.12)))
        .collect();
    let mut set = |label: &str, v: f64| {
        scores.insert(label.to_string(), round(v.clamp(0.0, 1.0), 4));
    };
    match img.kind {
        // Hallway views all look alike.
        Kind::Hallway | Kind::Reference if room.name == "hallway" => {
            for (i, label) in room.pool.iter().enumerate() {
                set(
                    label,
                    0.3 - 0.02 * i as f64 + rng.random_range(-0.003..0.003),
                );
            }
        }
        _ => {
            let pool = room.pool;
            let mut levels: Vec<f64> = (0..5).map(|t| 0.9 - 0.08 * t as f64).collect();
            let noise = match img.kind {
                Kind::Reference => 0.01,
                Kind::Plain => 0.03,
                _ => 0.05,
            };
            if img.kind == Kind::Rearranged {
                levels.shuffle(rng);
            }
            for (t, level) in levels.into_iter().enumerate() {
                set(
                    pool[(img.slot + t) % pool.len()],
                    level + rng.random_range(-noise..noise),
                );
            }
            // Out-of-window pool objects are faintly visible.
            for t in 5..pool.len() {
                set(
                    pool[(img.slot + t) % pool.len()],
                    rng.random_range(0.15..0.3),
                );
            }
        }
    }
    for v in scores.values_mut() {
        *v = round(*v, 4);
    }
    scores
}

fn room_embedding(room: usize, variant: usize) -> Vec<f64> {
    let mut v = vec![0.0; 8];
    let (main, side) = match variant {
        0 => (1.0, 0.0),
        1 => (0.95, 0.312_25),
        _ => (0.8, 0.6),
    };
    v[room] = main;
    v[4 + room] = side;
    v
}

fn main() {
    let out: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let vocab = Vocabulary::coco_with(EXTENSION.iter().copied()).expect("demo vocabulary");

    let mut refs = Vec::new();
    for (r, room) in ROOMS.iter().enumerate() {
        for slot in 0..REFS_PER_ROOM {
            let id = format!("ref-{}-{slot:02}", room.name.replace(' ', "-"));
            let synonym = matches!(
                (room.name, slot),
                ("kitchen", 3) | ("kitchen", 8) | ("conference room", 6)
            );
            refs.push(Image {
                entry: entry(id, pose(&mut rng, room, slot, 0.05), room),
                room: r,
                slot,
                kind: Kind::Reference,
                room_winner: usize::from(synonym),
            });
        }
    }

    let plan: &[(usize, &[(usize, Kind)])] = &[
        (
            0,
            &[
                (1, Kind::Plain),
                (2, Kind::Rearranged),
                (5, Kind::Plain),
                (7, Kind::Rearranged),
                (9, Kind::Plain),
            ],
        ),
        (
            1,
            &[
                (1, Kind::Hallway),
                (3, Kind::Hallway),
                (4, Kind::Hallway),
                (6, Kind::Hallway),
                (8, Kind::Hallway),
            ],
        ),
        (
            2,
            &[
                (0, Kind::Plain),
                (3, Kind::Rearranged),
                (5, Kind::Plain),
                (8, Kind::Plain),
                (9, Kind::Rearranged),
            ],
        ),
        (
            3,
            &[
                (2, Kind::Plain),
                (4, Kind::Rearranged),
                (6, Kind::Plain),
                (7, Kind::Plain),
                (8, Kind::Rearranged),
            ],
        ),
    ];
    let mut queries = Vec::new();
    for &(r, slots) in plan {
        let room = &ROOMS[r];
        for &(slot, kind) in slots {
            let id = format!("q{:02}", queries.len());
            queries.push(Image {
                entry: entry(id, pose(&mut rng, room, slot, 0.35), room),
                room: r,
                slot,
                kind,
                room_winner: 0,
            });
        }
    }

    let mut store = FixtureStore::default();
    for img in refs.iter().chain(&queries) {
        let id = &img.entry.id;
        let scores = object_scores(&mut rng, &vocab, img);
        let map = ScoreMap::from_entries(
            vocab
                .labels()
                .iter()
                .map(|l| ScoredLabel::new(l.clone(), scores[l]))
                .collect(),
        )
        .expect("unique labels");
        for (label, v) in &scores {
            store.insert_grounding(id, &grounding_prompt(label), *v);
        }
        let room = &ROOMS[img.room];
        // Prompts for the default k and for `--k 3` runs.
        for k in [DEFAULT_TOP_K, 3] {
            let top = select_top_objects(&map, k).expect("k fits");
            let prompt = build_room_prompt(&top).expect("non-empty");
            store.completions.insert(
                prompt,
                room.completions.iter().map(|s| s.to_string()).collect(),
            );
        }
        for (i, name) in candidates(room).iter().enumerate() {
            let v = if i == img.room_winner {
                rng.random_range(0.8..0.9)
            } else {
                rng.random_range(0.45..0.7)
            };
            store.insert_grounding(id, &grounding_prompt(name), round(v, 4));
        }
    }
    for (r, room) in ROOMS.iter().enumerate() {
        for (i, name) in candidates(room).iter().enumerate() {
            store
                .embeddings
                .insert(name.clone(), room_embedding(r, i.min(2)));
        }
    }

    // Local-feature scores: strong on the true neighbour, except for the
    // rearranged queries, which look most like a decoy in another room.
    let mut table = Vec::new();
    for q in &queries {
        let decoy_room = (q.room + 2) % ROOMS.len();
        let decoy_slot = rng.random_range(0..REFS_PER_ROOM);
        for r in &refs {
            let same_room = r.room == q.room;
            let v = if same_room && r.slot == q.slot {
                match q.kind {
                    Kind::Rearranged => rng.random_range(0.25..0.35),
                    _ => rng.random_range(0.8..0.95),
                }
            } else if q.kind == Kind::Rearranged && r.room == decoy_room && r.slot == decoy_slot {
                rng.random_range(0.7..0.8)
            } else if same_room && r.slot.abs_diff(q.slot) == 1 {
                rng.random_range(0.45..0.6)
            } else {
                rng.random_range(0.05..0.4)
            };
            table.push(PatchScore(
                q.entry.id.clone(),
                r.entry.id.clone(),
                round(v, 4),
            ));
        }
    }

    let scenario = Scenario {
        seed: SEED,
        plain: ids(&queries, Kind::Plain),
        rearranged: ids(&queries, Kind::Rearranged),
        hallway: ids(&queries, Kind::Hallway),
    };

    let manifest = |imgs: &[Image]| {
        DatasetManifest::new(imgs.iter().map(|i| i.entry.clone()).collect()).unwrap()
    };
    formats::write_manifest(&out.join("reference_manifest.json"), &manifest(&refs)).unwrap();
    formats::write_manifest(&out.join("query_manifest.json"), &manifest(&queries)).unwrap();
    formats::write_patch_scores(
        &out.join("patch_scores.json"),
        &PatchScoreTable::from_entries(table).unwrap(),
    )
    .unwrap();
    write_atomic(&out.join("fixture.json"), &formats::to_json_bytes(&store)).unwrap();
    write_atomic(
        &out.join("scenario.json"),
        &formats::to_json_bytes(&scenario),
    )
    .unwrap();
    let mut ext = String::from("# Labels seen around the demo floor that COCO lacks.\n");
    for l in EXTENSION {
        ext.push_str(l);
        ext.push('\n');
    }
    write_atomic(&out.join("vocab_ext.txt"), ext.as_bytes()).unwrap();
    println!("wrote demo dataset to {}", out.display());
}

fn ids(images: &[Image], kind: Kind) -> Vec<String> {
    images
        .iter()
        .filter(|i| i.kind == kind)
        .map(|i| i.entry.id.clone())
        .collect()
}
