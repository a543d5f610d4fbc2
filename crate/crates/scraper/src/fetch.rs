use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use chrono::{NaiveDate, NaiveTime, Utc};
use url::Url;

use tcontrol_core::article::{RawArticle, RetrievedVia, SnapshotRef};

use crate::availability::{nearest_capture, parse_availability};
use crate::extract::extract;
use crate::http::{Client, Failure};
use crate::urls::canonicalize_url;
use crate::{FetchConfig, ScrapeError};

/// What to fetch: a live page or an archived capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Live(String),
    Archive(SnapshotRef),
}

/// Captures are compared against midday UTC of the target date.
fn reference_time(date: NaiveDate) -> chrono::DateTime<Utc> {
    date.and_time(NaiveTime::from_hms_opt(12, 0, 0).unwrap()).and_utc()
}

/// Snapshot reference for a capture, built from the configured archive base.
pub fn snapshot_for(canonical_url: &str, timestamp: &str, config: &FetchConfig) -> SnapshotRef {
    SnapshotRef {
        original_url: canonical_url.to_string(),
        archive_timestamp: timestamp.to_string(),
        archive_url: format!(
            "{}/{timestamp}/{canonical_url}",
            config.archive_base.trim_end_matches('/')
        ),
    }
}

/// Ask the availability endpoint for captures of `url` and return the one
/// nearest `target_date`.
pub fn lookup_snapshot(url: &str, target_date: NaiveDate, config: &FetchConfig) -> Result<SnapshotRef, ScrapeError> {
    config.validate()?;
    let canonical = canonicalize_url(url)?;
    let target = reference_time(target_date);
    let mut query = Url::parse(&config.availability_endpoint).map_err(|e| {
        ScrapeError::InvalidConfig(format!("availability_endpoint {:?}: {e}", config.availability_endpoint))
    })?;
    query
        .query_pairs_mut()
        .append_pair("url", &canonical)
        .append_pair("timestamp", &target.format("%Y%m%d%H%M%S").to_string());
    let body = Client::new(config)
        .get(query.as_str())
        .map_err(|(f, attempts)| ScrapeError::ArchiveUnreachable {
            attempts,
            reason: match f {
                Failure::Timeout => "timed out".into(),
                Failure::Status(s) => format!("HTTP {s}"),
                Failure::Transport(t) => t,
            },
        })?;
    let captures =
        parse_availability(&body).map_err(|reason| ScrapeError::ArchiveUnreachable { attempts: 1, reason })?;
    let best = nearest_capture(&captures, target).ok_or_else(|| ScrapeError::SnapshotNotFound {
        url: canonical.clone(),
        date: target_date,
    })?;
    Ok(snapshot_for(&canonical, &best.timestamp, config))
}

fn fetch_with(client: &Client, source: &Source) -> Result<RawArticle, ScrapeError> {
    let (url, fetch_url, retrieved_via) = match source {
        Source::Live(u) => {
            let c = canonicalize_url(u)?;
            (c.clone(), c, RetrievedVia::Live)
        }
        Source::Archive(s) => (
            canonicalize_url(&s.original_url)?,
            s.archive_url.clone(),
            RetrievedVia::Archive { snapshot: s.clone() },
        ),
    };
    let html = client.get(&fetch_url).map_err(|(f, attempts)| match f {
        Failure::Timeout => ScrapeError::FetchTimeout {
            url: fetch_url.clone(),
            attempts,
        },
        Failure::Status(status) => ScrapeError::HttpError {
            status,
            url: fetch_url.clone(),
        },
        Failure::Transport(reason) => ScrapeError::Transport {
            url: fetch_url.clone(),
            reason,
        },
    })?;
    let page = extract(&html);
    if page.title.is_empty() && page.body.is_empty() {
        return Err(ScrapeError::ParseFailure { url: fetch_url });
    }
    Ok(RawArticle {
        url,
        title: page.title,
        body: page.body,
        published_at: page.published_at,
        retrieved_via,
        fetched_at: Utc::now(),
    })
}

/// Download and parse one article.
pub fn fetch_article(source: &Source, config: &FetchConfig) -> Result<RawArticle, ScrapeError> {
    config.validate()?;
    fetch_with(&Client::new(config), source)
}

/// Fetch many sources on up to `max_parallel_fetches` threads. Results are
/// in input order.
pub fn fetch_all(
    sources: &[Source],
    config: &FetchConfig,
) -> Result<Vec<Result<RawArticle, ScrapeError>>, ScrapeError> {
    config.validate()?;
    let client = Client::new(config);
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<RawArticle, ScrapeError>>>> =
        sources.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..config.max_parallel_fetches.min(sources.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(source) = sources.get(i) else { break };
                let r = fetch_with(&client, source);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    Ok(results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every source is fetched"))
        .collect())
}
