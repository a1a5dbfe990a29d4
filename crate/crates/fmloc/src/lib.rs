//! Runtime companion to `fmloc-core`: model backends (recorded fixtures,
//! HTTP inference service, persistent cache), the on-disk file formats, and
//! the parallel drivers used by the `fmloc` command-line tool.

pub mod cache;
pub mod config;
pub mod error;
pub mod fixture;
pub mod formats;
pub mod http;
pub mod pipeline;

pub use cache::{CacheKey, CachedBackend};
pub use config::{BackendSpec, ConfigFile, Overrides, RunConfig};
pub use error::{Error, Result};
pub use fixture::{FixtureBackend, FixtureStore};
pub use http::{HttpBackend, HttpConfig, ImageEncoding};
