//! Parsing of archive availability responses.
//!
//! Two shapes are accepted: the Wayback availability API
//! (`{"archived_snapshots": {"closest": {...}}}`) and CDX JSON output (an
//! array of rows whose first row names the columns).

use chrono::{DateTime, Utc};
use serde_json::Value;

use tcontrol_core::article::parse_archive_timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub timestamp: String,
    /// Archive URL reported by the service, if any.
    pub url: Option<String>,
}

impl Capture {
    pub fn captured_at(&self) -> DateTime<Utc> {
        parse_archive_timestamp(&self.timestamp).expect("captures are validated on parse")
    }
}

fn usable_status(status: Option<&str>) -> bool {
    match status {
        None | Some("-") | Some("") => true,
        Some(s) => s.starts_with('2') || s.starts_with('3'),
    }
}

/// Captures listed in an availability response. Entries marked unavailable,
/// with an error status, or with a malformed timestamp are skipped.
pub fn parse_availability(body: &str) -> Result<Vec<Capture>, String> {
    let value: Value = serde_json::from_str(body).map_err(|e| format!("availability response is not JSON: {e}"))?;
    let mut out = Vec::new();
    match &value {
        Value::Object(obj) => {
            let snapshots = obj
                .get("archived_snapshots")
                .ok_or("availability response has no archived_snapshots")?;
            if let Some(closest) = snapshots.get("closest") {
                let available = closest.get("available").and_then(Value::as_bool).unwrap_or(true);
                let status = closest.get("status").and_then(Value::as_str);
                let timestamp = closest.get("timestamp").and_then(Value::as_str).unwrap_or_default();
                if available && usable_status(status) && parse_archive_timestamp(timestamp).is_some() {
                    out.push(Capture {
                        timestamp: timestamp.to_string(),
                        url: closest.get("url").and_then(Value::as_str).map(str::to_string),
                    });
                }
            }
        }
        Value::Array(rows) => {
            let Some((header, rows)) = rows.split_first() else {
                return Ok(out);
            };
            let columns: Vec<&str> = header
                .as_array()
                .ok_or("CDX header row is not an array")?
                .iter()
                .map(|c| c.as_str().unwrap_or_default())
                .collect();
            let col = |name: &str| columns.iter().position(|c| *c == name);
            let ts_col = col("timestamp").ok_or("CDX header has no timestamp column")?;
            let status_col = col("statuscode");
            for row in rows {
                let cells = row.as_array().ok_or("CDX row is not an array")?;
                let cell = |i: usize| cells.get(i).and_then(Value::as_str);
                let Some(timestamp) = cell(ts_col) else { continue };
                if usable_status(status_col.and_then(cell)) && parse_archive_timestamp(timestamp).is_some() {
                    out.push(Capture {
                        timestamp: timestamp.to_string(),
                        url: None,
                    });
                }
            }
        }
        _ => return Err("availability response is neither an object nor an array".into()),
    }
    Ok(out)
}

/// Capture closest in time to `target`; ties go to the earlier capture.
pub fn nearest_capture(captures: &[Capture], target: DateTime<Utc>) -> Option<&Capture> {
    captures
        .iter()
        .min_by_key(|c| ((c.captured_at() - target).abs(), c.captured_at()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn wayback_shape() {
        let body = r#"{"url": "example.com/a", "archived_snapshots": {"closest": {"status": "200", "available": true,
            "url": "http://web.archive.org/web/20160317120000/http://example.com/a", "timestamp": "20160317120000"}}}"#;
        let caps = parse_availability(body).unwrap();
        assert_eq!(caps.len(), 1);
        assert_eq!(caps[0].timestamp, "20160317120000");
        assert!(parse_availability(r#"{"archived_snapshots": {}}"#).unwrap().is_empty());
        let unavailable = r#"{"archived_snapshots": {"closest": {"available": false, "timestamp": "20160317120000"}}}"#;
        assert!(parse_availability(unavailable).unwrap().is_empty());
        assert!(parse_availability("<html>").is_err());
    }

    #[test]
    fn cdx_shape() {
        let body = r#"[["urlkey","timestamp","original","statuscode"],
            ["com,example)/a","20160301000000","http://example.com/a","200"],
            ["com,example)/a","20160318000000","http://example.com/a","404"],
            ["com,example)/a","2016031","http://example.com/a","200"],
            ["com,example)/a","20160401000000","http://example.com/a","301"]]"#;
        let ts: Vec<String> = parse_availability(body)
            .unwrap()
            .into_iter()
            .map(|c| c.timestamp)
            .collect();
        assert_eq!(ts, ["20160301000000", "20160401000000"]);
        assert!(parse_availability("[]").unwrap().is_empty());
    }

    #[test]
    fn nearest_prefers_earlier_on_ties() {
        let caps: Vec<Capture> = ["20160316120000", "20160318120000", "20100101000000"]
            .iter()
            .map(|t| Capture {
                timestamp: t.to_string(),
                url: None,
            })
            .collect();
        let target = Utc.with_ymd_and_hms(2016, 3, 17, 12, 0, 0).unwrap();
        assert_eq!(nearest_capture(&caps, target).unwrap().timestamp, "20160316120000");
        assert!(nearest_capture(&[], target).is_none());
    }
}
