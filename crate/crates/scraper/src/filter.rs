use tcontrol_core::article::RawArticle;

use crate::ScrapeError;

/// Articles where some keyword occurs, case-insensitively, as a substring of
/// the title or body. Order is preserved.
pub fn filter_by_keywords<S: AsRef<str>>(
    articles: Vec<RawArticle>,
    keywords: &[S],
) -> Result<Vec<RawArticle>, ScrapeError> {
    let needles: Vec<String> = keywords.iter().map(|k| k.as_ref().to_lowercase()).collect();
    if needles.is_empty() {
        return Err(ScrapeError::EmptyKeywordSet);
    }
    Ok(articles
        .into_iter()
        .filter(|a| {
            let title = a.title.to_lowercase();
            let body = a.body.to_lowercase();
            needles.iter().any(|k| title.contains(k) || body.contains(k))
        })
        .collect())
}
