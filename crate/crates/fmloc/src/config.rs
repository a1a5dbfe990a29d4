//! Run configuration. Precedence: command-line flags, then environment
//! variables (both resolved by the CLI parser), then the TOML config file,
//! then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Deserialize;

use fmloc_core::{
    ModelBackend, DEFAULT_COMPLETIONS, DEFAULT_LANDMARK_THRESHOLD, DEFAULT_THETA, DEFAULT_TOP_K,
};

use crate::cache::CachedBackend;
use crate::error::{Error, Result};
use crate::fixture::FixtureBackend;
use crate::http::{HttpBackend, HttpConfig, ImageEncoding, AUTH_TOKEN_ENV};
use crate::pipeline::default_jobs;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Fixture(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Self::Http(s.to_string()));
        }
        if let Some(path) = s.strip_prefix("fixture:") {
            if path.is_empty() {
                return Err("fixture backend needs a path".into());
            }
            return Ok(Self::Fixture(PathBuf::from(path)));
        }
        if let Some(url) = s.strip_prefix("http:") {
            if url.is_empty() {
                return Err("http backend needs a base URL".into());
            }
            return Ok(Self::Http(url.to_string()));
        }
        Err(format!(
            "backend must be fixture:<path> or http:<url>, got \"{s}\""
        ))
    }
}

/// Optional settings read from a TOML file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub backend: Option<String>,
    pub cache: Option<PathBuf>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub theta: Option<f64>,
    pub jobs: Option<usize>,
    pub threshold: Option<f64>,
    pub max_in_flight: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub image_encoding: Option<ImageEncoding>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

/// Values given on the command line or through the environment.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub backend: Option<String>,
    pub cache: Option<PathBuf>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub theta: Option<f64>,
    pub jobs: Option<usize>,
    pub threshold: Option<f64>,
    pub max_in_flight: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub backend: Option<BackendSpec>,
    pub cache: Option<PathBuf>,
    pub k: usize,
    pub n: usize,
    pub theta: f64,
    pub jobs: usize,
    pub threshold: f64,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub image_encoding: ImageEncoding,
}

impl RunConfig {
    pub fn resolve(overrides: Overrides, file: ConfigFile) -> Result<Self> {
        let backend = overrides
            .backend
            .or(file.backend)
            .map(|s| s.parse::<BackendSpec>().map_err(Error::Config))
            .transpose()?;
        let max_in_flight = overrides.max_in_flight.or(file.max_in_flight).unwrap_or(4);
        let jobs = overrides
            .jobs
            .or(file.jobs)
            .unwrap_or_else(|| match backend {
                Some(BackendSpec::Http(_)) => default_jobs().min(max_in_flight),
                _ => default_jobs(),
            });
        let config = Self {
            backend,
            cache: overrides.cache.or(file.cache),
            k: overrides.k.or(file.k).unwrap_or(DEFAULT_TOP_K),
            n: overrides.n.or(file.n).unwrap_or(DEFAULT_COMPLETIONS),
            theta: overrides.theta.or(file.theta).unwrap_or(DEFAULT_THETA),
            jobs,
            threshold: overrides
                .threshold
                .or(file.threshold)
                .unwrap_or(DEFAULT_LANDMARK_THRESHOLD),
            max_in_flight,
            timeout: Duration::from_secs(file.timeout_secs.unwrap_or(60)),
            image_encoding: file.image_encoding.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.n == 0 {
            return fail("n must be at least 1");
        }
        if !(0.0..1.0).contains(&self.theta) {
            return fail("theta must lie in [0, 1)");
        }
        if self.jobs == 0 || self.max_in_flight == 0 {
            return fail("jobs and max_in_flight must be at least 1");
        }
        if !self.threshold.is_finite() {
            return fail("threshold must be finite");
        }
        Ok(())
    }

    /// The configured backend, wrapped in the response cache when one is set.
    pub fn open_backend(&self) -> Result<Box<dyn ModelBackend>> {
        let backend: Box<dyn ModelBackend> = match &self.backend {
            None => {
                return Err(Error::Config(
                    "no backend configured (use --backend)".into(),
                ))
            }
            Some(BackendSpec::Fixture(path)) => Box::new(FixtureBackend::load(path)?),
            Some(BackendSpec::Http(url)) => {
                let mut http = HttpConfig::new(url.clone());
                http.auth_token = std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty());
                http.max_in_flight = self.max_in_flight;
                http.timeout = self.timeout;
                http.image_encoding = self.image_encoding;
                Box::new(HttpBackend::new(http))
            }
        };
        Ok(match &self.cache {
            Some(dir) => Box::new(CachedBackend::new(backend, dir)?),
            None => backend,
        })
    }
}
