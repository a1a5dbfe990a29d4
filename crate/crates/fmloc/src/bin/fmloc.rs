use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fmloc::config::{ConfigFile, Overrides, RunConfig};
use fmloc::error::{exit, Error, Result};
use fmloc::{formats, pipeline};
use fmloc_core::{
    apply_landmark_filter, evaluate, normalize_patch_scores, DescriptorConfig, Elimination,
    FilterMode, Gateway, LandmarkError, LandmarkLearner, LandmarkOptions, SimilarityConfig,
};

/// Semantic visual place recognition from grounded object and room labels.
#[derive(Parser)]
#[command(name = "fmloc", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model backend: fixture:<path> or http:<url>.
    #[arg(long, global = true, env = "FMLOC_BACKEND")]
    backend: Option<String>,
    /// Directory of the persistent response cache.
    #[arg(long, global = true, env = "FMLOC_CACHE")]
    cache: Option<PathBuf>,
    /// Objects kept per image.
    #[arg(long, global = true, env = "FMLOC_K")]
    k: Option<usize>,
    /// Room proposals requested per image.
    #[arg(long, global = true, env = "FMLOC_N")]
    n: Option<usize>,
    /// Room embedding similarity threshold.
    #[arg(long, global = true, env = "FMLOC_THETA")]
    theta: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true, env = "FMLOC_JOBS")]
    jobs: Option<usize>,
    /// Maximum concurrent HTTP requests.
    #[arg(long, global = true, env = "FMLOC_MAX_IN_FLIGHT")]
    max_in_flight: Option<usize>,
    /// TOML file with defaults for the options above.
    #[arg(long, global = true, env = "FMLOC_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a descriptor for every image of a manifest.
    BuildDescriptors {
        #[arg(long)]
        manifest: PathBuf,
        /// Base vocabulary file (default: bundled COCO labels).
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Extra environment-specific labels.
        #[arg(long)]
        vocab_ext: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the descriptors that succeeded even if some images failed.
        #[arg(long)]
        keep_partial: bool,
    },
    /// Match query descriptors against reference descriptors.
    Match {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Pairwise local-feature scores to fuse with.
        #[arg(long)]
        patch_scores: Option<PathBuf>,
        /// Landmark report whose landmark set filters the object labels.
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FilterArg::Intersect)]
        filter_mode: FilterArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn landmark labels by leave-one-out elimination.
    LearnLandmarks {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        query_manifest: PathBuf,
        #[arg(long)]
        reference_manifest: PathBuf,
        /// Minimum error increase in meters for a landmark.
        #[arg(long, env = "FMLOC_THRESHOLD")]
        threshold: Option<f64>,
        /// Drop eliminated labels instead of refilling top-k.
        #[arg(long)]
        shrink: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute translation error and room detection for a match file.
    Evaluate {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        query_manifest: PathBuf,
        #[arg(long)]
        reference_manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the plain-text table here (it is always printed).
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Intersect,
    Reselect,
}

fn run_config(common: &Common, threshold: Option<f64>) -> Result<RunConfig> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    RunConfig::resolve(
        Overrides {
            backend: common.backend.clone(),
            cache: common.cache.clone(),
            k: common.k,
            n: common.n,
            theta: common.theta,
            jobs: common.jobs,
            threshold,
            max_in_flight: common.max_in_flight,
        },
        file,
    )
}

fn run(cli: Cli) -> Result<()> {
    let threshold = match &cli.command {
        Command::LearnLandmarks { threshold, .. } => *threshold,
        _ => None,
    };
    let config = run_config(&cli.common, threshold)?;
    let pool = pipeline::thread_pool(config.jobs)?;
    let similarity = SimilarityConfig::new(config.theta)?;

    match cli.command {
        Command::BuildDescriptors {
            manifest,
            vocab,
            vocab_ext,
            out,
            keep_partial,
        } => {
            let manifest = formats::read_manifest(&manifest)?;
            let vocab = formats::load_vocabulary(vocab.as_deref(), vocab_ext.as_deref())?;
            let gateway = Gateway::new(config.open_backend()?);
            let results = pipeline::build_descriptors(
                manifest.entries(),
                &vocab,
                &gateway,
                DescriptorConfig {
                    k: config.k,
                    n: config.n,
                },
                &pool,
            );
            let mut built = Vec::with_capacity(results.len());
            let mut first_error = None;
            for r in results {
                match r {
                    Ok(d) => built.push(d),
                    Err(e) => {
                        eprintln!("error: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            if first_error.is_none() || keep_partial {
                formats::write_descriptors(&out, &built)?;
            }
            match first_error {
                Some(e) => Err(e.into()),
                None => Ok(()),
            }
        }
        Command::Match {
            query,
            reference,
            patch_scores,
            landmarks,
            filter_mode,
            out,
        } => {
            let queries = formats::read_descriptors(&query)?;
            let references = formats::read_descriptors(&reference)?;
            let mut similarity = similarity;
            if let Some(path) = landmarks {
                let report = formats::read_landmark_report(&path)?;
                let mode = match filter_mode {
                    FilterArg::Intersect => FilterMode::Intersect,
                    FilterArg::Reselect => FilterMode::Reselect,
                };
                similarity = apply_landmark_filter(&similarity, &report.landmark_set)?
                    .with_filter_mode(mode);
            }
            let patch = patch_scores
                .map(|p| {
                    formats::read_patch_scores(&p).and_then(|t| Ok(normalize_patch_scores(&t)?))
                })
                .transpose()?;
            let matches =
                pipeline::match_all(&queries, &references, &similarity, patch.as_ref(), &pool)?;
            formats::write_matches(&out, &matches)
        }
        Command::LearnLandmarks {
            query,
            reference,
            query_manifest,
            reference_manifest,
            shrink,
            out,
            ..
        } => {
            let queries = formats::read_descriptors(&query)?;
            let references = formats::read_descriptors(&reference)?;
            let qm = formats::read_manifest(&query_manifest)?;
            let rm = formats::read_manifest(&reference_manifest)?;
            let options = LandmarkOptions {
                threshold: config.threshold,
                elimination: if shrink {
                    Elimination::Shrink
                } else {
                    Elimination::Refill
                },
            };
            let learner =
                LandmarkLearner::new(&queries, &references, &qm, &rm, &similarity, options)?;
            let report = pipeline::learn_landmarks(&learner, &pool)?;
            formats::write_landmark_report(&out, &report)?;
            if report.landmark_set.is_empty() {
                return Err(LandmarkError::EmptyLandmarkSet {
                    threshold: config.threshold,
                }
                .into());
            }
            Ok(())
        }
        Command::Evaluate {
            matches,
            query_manifest,
            reference_manifest,
            out,
            table,
        } => {
            let matches = formats::read_matches(&matches)?;
            let qm = formats::read_manifest(&query_manifest)?;
            let rm = formats::read_manifest(&reference_manifest)?;
            let report = evaluate(&matches, &qm, &rm)?;
            formats::write_evaluation(&out, &report)?;
            let text = formats::render_evaluation_table(&report);
            if let Some(p) = table {
                formats::write_atomic(&p, text.as_bytes())?;
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
