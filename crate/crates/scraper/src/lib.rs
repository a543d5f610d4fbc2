//! Article retrieval: live pages or dated web-archive snapshots, HTML to
//! plain text, and keyword filtering.

mod availability;
mod extract;
mod fetch;
mod filter;
mod http;
mod urls;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use availability::{nearest_capture, parse_availability, Capture};
pub use extract::{extract, Extracted};
pub use fetch::{fetch_all, fetch_article, lookup_snapshot, snapshot_for, Source};
pub use filter::filter_by_keywords;
pub use urls::canonicalize_url;

pub const DEFAULT_AVAILABILITY_ENDPOINT: &str = "https://archive.org/wayback/available";
pub const DEFAULT_ARCHIVE_BASE: &str = "https://web.archive.org/web";

#[derive(Debug, Error)]
pub enum ScrapeError {
    #[error("invalid URL {url:?}: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("no archived capture of {url} (target {date})")]
    SnapshotNotFound { url: String, date: chrono::NaiveDate },
    #[error("archive unreachable after {attempts} attempt(s): {reason}")]
    ArchiveUnreachable { attempts: u32, reason: String },
    #[error("timed out fetching {url} after {attempts} attempt(s)")]
    FetchTimeout { url: String, attempts: u32 },
    #[error("HTTP {status} from {url}")]
    HttpError { status: u16, url: String },
    #[error("{url}: {reason}")]
    Transport { url: String, reason: String },
    #[error("no extractable text in {url}")]
    ParseFailure { url: String },
    #[error("keyword set is empty")]
    EmptyKeywordSet,
    #[error("invalid fetch config: {0}")]
    InvalidConfig(String),
}

/// Network settings. Every field has a default, so a config file may set
/// any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchConfig {
    /// Per-request timeout, seconds.
    pub request_timeout: f64,
    pub user_agent: String,
    pub max_parallel_fetches: usize,
    /// Extra attempts after a timeout, transport error, 429 or 5xx.
    pub retry_count: u32,
    /// Pause between attempts, seconds.
    pub retry_backoff: f64,
    pub availability_endpoint: String,
    /// Snapshot URLs are `{archive_base}/{timestamp}/{url}`.
    pub archive_base: String,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            request_timeout: 30.0,
            user_agent: concat!("tcontrol-scraper/", env!("CARGO_PKG_VERSION")).to_string(),
            max_parallel_fetches: 4,
            retry_count: 2,
            retry_backoff: 1.0,
            availability_endpoint: DEFAULT_AVAILABILITY_ENDPOINT.to_string(),
            archive_base: DEFAULT_ARCHIVE_BASE.to_string(),
        }
    }
}

impl FetchConfig {
    pub fn validate(&self) -> Result<(), ScrapeError> {
        let bad = |m: &str| Err(ScrapeError::InvalidConfig(m.to_string()));
        if !(self.request_timeout > 0.0 && self.request_timeout.is_finite()) {
            return bad("request_timeout must be a positive number of seconds");
        }
        if self.max_parallel_fetches == 0 {
            return bad("max_parallel_fetches must be at least 1");
        }
        if !(self.retry_backoff >= 0.0 && self.retry_backoff.is_finite()) {
            return bad("retry_backoff must be a non-negative number of seconds");
        }
        if self.user_agent.trim().is_empty() {
            return bad("user_agent must not be empty");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout)
    }

    pub fn backoff(&self) -> Duration {
        Duration::from_secs_f64(self.retry_backoff)
    }
}
