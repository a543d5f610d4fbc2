//! Retrieved news items and where they came from.

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Format of an archive capture timestamp: `YYYYMMDDhhmmss`, UTC.
pub const ARCHIVE_TIMESTAMP_FORMAT: &str = "%Y%m%d%H%M%S";

/// A dated capture of a page in a web archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub original_url: String,
    pub archive_timestamp: String,
    pub archive_url: String,
}

impl SnapshotRef {
    pub fn captured_at(&self) -> Option<DateTime<Utc>> {
        parse_archive_timestamp(&self.archive_timestamp)
    }

    /// Timestamp parses, and the archive URL embeds both the timestamp and
    /// the original URL.
    pub fn is_consistent(&self) -> bool {
        self.captured_at().is_some()
            && self.archive_url.contains(&self.archive_timestamp)
            && self.archive_url.contains(strip_scheme(&self.original_url))
    }
}

fn strip_scheme(url: &str) -> &str {
    url.split_once("://").map_or(url, |(_, rest)| rest)
}

pub fn parse_archive_timestamp(stamp: &str) -> Option<DateTime<Utc>> {
    if stamp.len() != 14 || !stamp.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NaiveDateTime::parse_from_str(stamp, ARCHIVE_TIMESTAMP_FORMAT)
        .ok()
        .map(|n| n.and_utc())
}

pub fn format_archive_timestamp(at: DateTime<Utc>) -> String {
    at.format(ARCHIVE_TIMESTAMP_FORMAT).to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievedVia {
    Live,
    Archive { snapshot: SnapshotRef },
}

/// An article as parsed from HTML, body not yet truncated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub url: String,
    pub title: String,
    pub body: String,
    pub published_at: Option<DateTime<Utc>>,
    pub retrieved_via: RetrievedVia,
    pub fetched_at: DateTime<Utc>,
}

impl RawArticle {
    pub fn id(&self) -> String {
        article_id(&self.url)
    }
}

/// Stable identifier derived from the article URL (16 hex chars of SHA-256).
pub fn article_id(url: &str) -> String {
    let digest = Sha256::digest(url.as_bytes());
    hex::encode(&digest[..8])
}

/// A preprocessed article: whitespace-normalised, body at most
/// [`crate::corpus::MAX_BODY_CHARS`] characters and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    pub published_at: Option<DateTime<Utc>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_timestamps() {
        let t = parse_archive_timestamp("20160317120000").unwrap();
        assert_eq!(format_archive_timestamp(t), "20160317120000");
        assert!(parse_archive_timestamp("20161317120000").is_none());
        assert!(parse_archive_timestamp("2016031712000").is_none());
        assert!(parse_archive_timestamp("2016031712000x").is_none());
    }

    #[test]
    fn snapshot_consistency() {
        let s = SnapshotRef {
            original_url: "http://example.com/a".into(),
            archive_timestamp: "20160317120000".into(),
            archive_url: "http://web.archive.org/web/20160317120000/http://example.com/a".into(),
        };
        assert!(s.is_consistent());
        let bad = SnapshotRef {
            archive_url: "http://web.archive.org/web/2016/http://example.com/a".into(),
            ..s
        };
        assert!(!bad.is_consistent());
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(article_id("http://a"), article_id("http://a"));
        assert_ne!(article_id("http://a"), article_id("http://b"));
        assert_eq!(article_id("http://a").len(), 16);
    }
}
