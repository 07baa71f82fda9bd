//! A small URL grammar: enough to find links in free text and pull out the host.

use serde::{Deserialize, Serialize};

const SHORTENERS: &[&str] = &[
    "bit.ly",
    "bl.ink",
    "buff.ly",
    "cutt.ly",
    "goo.gl",
    "is.gd",
    "ow.ly",
    "rb.gy",
    "rebrand.ly",
    "s.id",
    "shorturl.at",
    "t.co",
    "t.ly",
    "tiny.cc",
    "tinyurl.com",
    "v.gd",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub raw: String,
    pub host: String,
    pub is_shortened: bool,
    /// Punycode label or a label mixing ASCII letters with non-ASCII letters.
    pub is_homograph_suspect: bool,
}

impl UrlRecord {
    /// Builds a record from a URL string. Returns `None` if no host can be found.
    pub fn from_raw(raw: &str) -> Option<Self> {
        let host = host_of(raw)?;
        Some(UrlRecord {
            raw: raw.to_string(),
            is_shortened: is_shortener(&host),
            is_homograph_suspect: is_homograph_suspect(&host),
            host,
        })
    }
}

pub fn is_shortener(host: &str) -> bool {
    let host = host.strip_prefix("www.").unwrap_or(host);
    SHORTENERS.contains(&host)
}

pub fn is_homograph_suspect(host: &str) -> bool {
    host.split('.').any(|label| {
        if label.starts_with("xn--") {
            return true;
        }
        let ascii = label.chars().any(|c| c.is_ascii_alphabetic());
        let other = label.chars().any(|c| !c.is_ascii() && c.is_alphabetic());
        ascii && other
    })
}

/// Extracts the lowercase host of a URL, with scheme, userinfo and port removed.
pub fn host_of(raw: &str) -> Option<String> {
    let rest = match raw.find("://") {
        Some(i) => &raw[i + 3..],
        None => raw,
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let authority = match authority.rfind('@') {
        Some(i) => &authority[i + 1..],
        None => authority,
    };
    let host = if authority.starts_with('[') {
        match authority.find(']') {
            Some(end) => &authority[..=end],
            None => authority,
        }
    } else {
        authority.split(':').next().unwrap_or("")
    };
    let host = host.trim_end_matches('.').to_lowercase();
    if host.is_empty() || host.chars().any(|c| c.is_whitespace() || c.is_control()) {
        None
    } else {
        Some(host)
    }
}

fn is_url_char(c: char) -> bool {
    !(c.is_whitespace()
        || c.is_control()
        || matches!(c, '<' | '>' | '"' | '\'' | '`' | '{' | '}' | '|' | '\\' | '^'))
}

fn starts_with_ignore_case(hay: &str, needle: &str) -> bool {
    hay.len() >= needle.len()
        && hay.is_char_boundary(needle.len())
        && hay[..needle.len()].eq_ignore_ascii_case(needle)
}

/// Finds URLs in free text: `http://`, `https://` and bare `www.` forms.
/// Returns byte spans and the URL strings in order of appearance.
pub fn find_urls(text: &str) -> Vec<(std::ops::Range<usize>, String)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let at_word_start = i == 0
            || text[..i]
                .chars()
                .next_back()
                .map(|c| !c.is_alphanumeric())
                .unwrap_or(true);
        let scheme_len = if starts_with_ignore_case(rest, "https://") {
            Some(8)
        } else if starts_with_ignore_case(rest, "http://") {
            Some(7)
        } else if at_word_start && starts_with_ignore_case(rest, "www.") {
            Some(0)
        } else {
            None
        };
        if let Some(prefix) = scheme_len {
            let end = rest
                .char_indices()
                .find(|&(_, c)| !is_url_char(c))
                .map(|(j, _)| j)
                .unwrap_or(rest.len());
            let candidate = rest[..end].trim_end_matches(['.', ',', ';', ':', '!', '?', ')', ']']);
            if candidate.len() > prefix.max(4) && host_of(candidate).is_some() {
                out.push((i..i + candidate.len(), candidate.to_string()));
                i += candidate.len().max(1);
                continue;
            }
        }
        i += rest.chars().next().map(char::len_utf8).unwrap_or(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_shortened_link() {
        let found = find_urls("click http://bit.ly/z");
        assert_eq!(found.len(), 1);
        let rec = UrlRecord::from_raw(&found[0].1).unwrap();
        assert_eq!(rec.host, "bit.ly");
        assert!(rec.is_shortened);
        assert!(!rec.is_homograph_suspect);
    }

    #[test]
    fn host_strips_userinfo_port_and_case() {
        assert_eq!(host_of("HTTPS://user:pw@Example.COM:8443/a?b").as_deref(), Some("example.com"));
        assert_eq!(host_of("www.foo.org/path").as_deref(), Some("www.foo.org"));
        assert_eq!(host_of("http://"), None);
    }

    #[test]
    fn trailing_punctuation_is_not_part_of_url() {
        let found = find_urls("see (https://a.com/x). and www.b.net, ok");
        let urls: Vec<_> = found.iter().map(|(_, u)| u.as_str()).collect();
        assert_eq!(urls, vec!["https://a.com/x", "www.b.net"]);
    }

    #[test]
    fn homograph_detection() {
        assert!(is_homograph_suspect("xn--pple-43d.com"));
        // Cyrillic 'а' inside a latin label.
        assert!(is_homograph_suspect("p\u{0430}ypal.com"));
        assert!(!is_homograph_suspect("paypal.com"));
        assert!(!is_homograph_suspect("\u{043f}\u{0440}\u{0438}\u{043c}\u{0435}\u{0440}.\u{0440}\u{0444}"));
    }

    #[test]
    fn embedded_www_is_not_a_url_start() {
        assert!(find_urls("awww.nope").is_empty());
    }
}
