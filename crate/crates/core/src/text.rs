//! Normalization rules shared by repository matching and citation auditing.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

const DOI_PREFIXES: [&str; 4] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
];

/// Lowercase, trim, and strip a resolver prefix from a DOI.
///
/// Returns `None` when nothing is left.
pub fn normalize_doi(raw: &str) -> Option<String> {
    let mut doi = raw.trim().to_lowercase();
    for prefix in DOI_PREFIXES {
        if let Some(rest) = doi.strip_prefix(prefix) {
            doi = rest.to_string();
            break;
        }
    }
    if let Some(rest) = doi.strip_prefix("doi:") {
        doi = rest.trim_start().to_string();
    }
    let doi = doi.trim().to_string();
    if doi.is_empty() {
        None
    } else {
        Some(doi)
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_title(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else if ch.is_whitespace() {
            pending_space = true;
        }
        // punctuation is dropped without introducing a word break
    }
    out
}

/// Case-fold and strip diacritics (NFD, drop combining marks).
pub fn fold(raw: &str) -> String {
    raw.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Surname of an author string, folded.
///
/// "Last, First" takes the part before the comma; otherwise the final
/// whitespace-separated token.
pub fn surname(author: &str) -> Option<String> {
    let author = author.trim();
    let raw = match author.split_once(',') {
        Some((last, _)) => last.trim(),
        None => author.split_whitespace().last().unwrap_or(""),
    };
    let folded: String = fold(raw)
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '-' || *c == '\'')
        .collect();
    if folded.is_empty() {
        None
    } else {
        Some(folded)
    }
}

/// Sorted surname multiset for an author list.
pub fn surname_multiset<S: AsRef<str>>(authors: &[S]) -> Vec<String> {
    let mut names: Vec<String> = authors.iter().filter_map(|a| surname(a.as_ref())).collect();
    names.sort();
    names
}

/// Leading four-digit year of a date string ("2021", "2021-05", "2021-05-03").
pub fn year_of(date: &str) -> Option<i32> {
    let date = date.trim();
    let digits: String = date.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.len() == 4 {
        digits.parse().ok()
    } else {
        None
    }
}

/// URL normalization for link comparison. DOI resolver URLs collapse to
/// `doi:<normalized doi>` so a DOI link and a bare DOI compare equal.
pub fn normalize_link(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    let lower = trimmed.to_lowercase();
    if DOI_PREFIXES.iter().any(|p| lower.starts_with(p)) || lower.starts_with("doi:") {
        return normalize_doi(trimmed).map(|d| format!("doi:{d}"));
    }
    let without_scheme = lower
        .strip_prefix("https://")
        .or_else(|| lower.strip_prefix("http://"))
        .unwrap_or(&lower);
    let without_www = without_scheme.strip_prefix("www.").unwrap_or(without_scheme);
    let cleaned = without_www.trim_end_matches('/');
    if cleaned.is_empty() {
        None
    } else {
        Some(cleaned.to_string())
    }
}
