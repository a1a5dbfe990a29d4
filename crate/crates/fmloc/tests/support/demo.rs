//! Runs the command-line tool over the shipped demo dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fmloc::formats;
use fmloc_core::{DatasetManifest, EvaluationReport, PatchScoreTable};
use serde::Deserialize;

pub const OUTPUTS: &[&str] = &[
    "reference_descriptors.json",
    "query_descriptors.json",
    "matches.json",
    "matches_fused.json",
    "landmarks.json",
    "evaluation.json",
    "evaluation_fused.json",
    "evaluation.txt",
];

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo")
}

pub fn golden_dir() -> PathBuf {
    demo_dir().join("golden")
}

pub fn fmloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmloc"))
        .current_dir(demo_dir())
        .env_remove("FMLOC_BACKEND")
        .env_remove("FMLOC_CONFIG")
        .env_remove("FMLOC_CACHE")
        .args(args)
        .output()
        .expect("spawn fmloc")
}

fn run(args: &[&str]) {
    let out = fmloc(args);
    assert!(
        out.status.success(),
        "fmloc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Full pipeline into `out`; returns the stdout table of the semantic run.
pub fn run_pipeline(out: &Path) {
    let p = |name: &str| out.join(name).to_str().unwrap().to_string();
    let fixture = ["--backend", "fixture:fixture.json"];
    for (manifest, target) in [
        ("reference_manifest.json", "reference_descriptors.json"),
        ("query_manifest.json", "query_descriptors.json"),
    ] {
        let mut args = fixture.to_vec();
        let target = p(target);
        args.extend([
            "build-descriptors",
            "--manifest",
            manifest,
            "--vocab-ext",
            "vocab_ext.txt",
            "--out",
            &target,
        ]);
        run(&args);
    }
    let (q, r) = (p("query_descriptors.json"), p("reference_descriptors.json"));
    run(&[
        "match",
        "--query",
        &q,
        "--reference",
        &r,
        "--out",
        &p("matches.json"),
    ]);
    run(&[
        "match",
        "--query",
        &q,
        "--reference",
        &r,
        "--patch-scores",
        "patch_scores.json",
        "--out",
        &p("matches_fused.json"),
    ]);
    run(&[
        "learn-landmarks",
        "--query",
        &q,
        "--reference",
        &r,
        "--query-manifest",
        "query_manifest.json",
        "--reference-manifest",
        "reference_manifest.json",
        "--out",
        &p("landmarks.json"),
    ]);
    for (matches, target) in [
        ("matches.json", "evaluation.json"),
        ("matches_fused.json", "evaluation_fused.json"),
    ] {
        let table = p("evaluation.txt");
        let mut args = vec![
            "evaluate",
            "--query-manifest",
            "query_manifest.json",
            "--reference-manifest",
            "reference_manifest.json",
        ];
        let (m, t) = (p(matches), p(target));
        args.extend(["--matches", &m, "--out", &t]);
        if target == "evaluation.json" {
            args.extend(["--table", &table]);
        }
        run(&args);
    }
}

#[derive(Deserialize)]
pub struct Scenario {
    pub plain: Vec<String>,
    pub rearranged: Vec<String>,
    pub hallway: Vec<String>,
}

pub fn scenario() -> Scenario {
    serde_json::from_slice(&fs::read(demo_dir().join("scenario.json")).unwrap()).unwrap()
}

pub fn manifests() -> (DatasetManifest, DatasetManifest) {
    let d = demo_dir();
    (
        formats::read_manifest(&d.join("query_manifest.json")).unwrap(),
        formats::read_manifest(&d.join("reference_manifest.json")).unwrap(),
    )
}

pub fn patch_table() -> PatchScoreTable {
    formats::read_patch_scores(&demo_dir().join("patch_scores.json")).unwrap()
}

/// Per-query translation error of a report, keyed by query id.
pub fn errors(report: &EvaluationReport) -> std::collections::BTreeMap<String, f64> {
    report
        .queries
        .iter()
        .map(|q| (q.query_id.clone(), q.translation_error))
        .collect()
}

/// Errors of the patch-score-only baseline: the best patch score per query.
pub fn patch_only_errors() -> std::collections::BTreeMap<String, f64> {
    let (qm, rm) = manifests();
    let table = patch_table();
    qm.entries()
        .iter()
        .map(|q| {
            let (r, _) = table.best_for(&q.id).unwrap();
            let r = rm.get(r).unwrap();
            (
                q.id.clone(),
                fmloc_core::translation_error(&q.pose, &r.pose),
            )
        })
        .collect()
}

pub fn total(errors: &std::collections::BTreeMap<String, f64>, ids: &[String]) -> f64 {
    ids.iter().map(|id| errors[id]).sum()
}

/// Byte comparison against the shipped goldens; `FMLOC_BLESS=1` rewrites them.
pub fn compare_with_golden(out: &Path) -> Result<(), String> {
    let golden = golden_dir();
    let bless = std::env::var("FMLOC_BLESS").is_ok_and(|v| v == "1");
    if bless {
        fs::create_dir_all(&golden).unwrap();
    }
    for name in OUTPUTS {
        let fresh = fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if bless {
            fs::write(golden.join(name), &fresh).unwrap();
            continue;
        }
        let shipped = fs::read(golden.join(name)).map_err(|e| format!("golden {name}: {e}"))?;
        if fresh != shipped {
            return Err(format!("{name} differs from the shipped golden"));
        }
    }
    Ok(())
}
