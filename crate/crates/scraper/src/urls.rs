use url::Url;

use crate::ScrapeError;

/// Parse an absolute http(s) URL, drop the fragment and lowercase scheme and
/// host. Query strings are kept.
pub fn canonicalize_url(raw: &str) -> Result<String, ScrapeError> {
    let invalid = |reason: String| ScrapeError::InvalidUrl {
        url: raw.to_string(),
        reason,
    };
    let mut url = Url::parse(raw.trim()).map_err(|e| invalid(e.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(invalid(format!("unsupported scheme {:?}", url.scheme())));
    }
    if url.host_str().is_none_or(str::is_empty) {
        return Err(invalid("missing host".into()));
    }
    url.set_fragment(None);
    Ok(url.to_string())
}
