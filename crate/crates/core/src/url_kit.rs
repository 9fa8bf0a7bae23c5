//! URL normalization, core URLs, tokenization, depth and registrable domains.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::net::IpAddr;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;
use url::Url;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UrlError {
    #[error("cannot parse URL {input:?}: {reason}")]
    Unparseable { input: String, reason: String },
    #[error("URL {0:?} has no host")]
    NoHost(String),
}

/// Characters that split a URL into tokens.
pub const URL_DELIMITERS: &[char] = &['/', '.', '-', '_', '?', '&', '=', '+', '%', '~', ':'];

/// A URL in canonical form: lowercase scheme and host, default port dropped,
/// unreserved percent-escapes decoded, fragment removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedUrl {
    scheme: String,
    host: String,
    port: Option<u16>,
    path: String,
    query: Option<String>,
}

impl NormalizedUrl {
    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    /// Host without port.
    pub fn host(&self) -> &str {
        &self.host
    }

    /// Host plus the port when it is not the scheme default.
    pub fn authority(&self) -> String {
        match self.port {
            Some(p) => format!("{}:{}", self.host, p),
            None => self.host.clone(),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query(&self) -> Option<&str> {
        self.query.as_deref()
    }

    pub fn has_query(&self) -> bool {
        self.query.is_some()
    }

    /// The URL without its scheme, e.g. `spiegel.de/thema/angela_merkel`.
    pub fn without_scheme(&self) -> String {
        let mut s = self.authority();
        s.push_str(&self.path);
        if let Some(q) = &self.query {
            s.push('?');
            s.push_str(q);
        }
        s
    }
}

impl fmt::Display for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.without_scheme())
    }
}

impl FromStr for NormalizedUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize(s)
    }
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Decodes `%XX` escapes of unreserved characters and uppercases the hex
/// digits of every remaining escape.
fn normalize_escapes(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let (Some(h), Some(l)) = (hex_val(bytes[i + 1]), hex_val(bytes[i + 2])) {
                let decoded = h * 16 + l;
                if is_unreserved(decoded) {
                    out.push(decoded as char);
                } else {
                    out.push('%');
                    out.push(bytes[i + 1].to_ascii_uppercase() as char);
                    out.push(bytes[i + 2].to_ascii_uppercase() as char);
                }
                i += 3;
                continue;
            }
        }
        let ch = s[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

fn from_parsed(url: &Url, raw: &str) -> Result<NormalizedUrl, UrlError> {
    let host = url
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| UrlError::NoHost(raw.to_string()))?;
    let path = normalize_escapes(url.path());
    let path = if path.is_empty() { "/".to_string() } else { path };
    let query = url
        .query()
        .filter(|q| !q.is_empty())
        .map(normalize_escapes);
    Ok(NormalizedUrl {
        scheme: url.scheme().to_ascii_lowercase(),
        host: host.to_ascii_lowercase(),
        port: url.port(),
        path,
        query,
    })
}

/// `mailto:x`, `javascript:y`: a letters-only scheme not followed by a port.
fn has_opaque_scheme(s: &str) -> bool {
    match s.split_once(':') {
        Some((scheme, rest)) => {
            !scheme.is_empty()
                && scheme.bytes().all(|b| b.is_ascii_alphabetic())
                && !rest.starts_with(|c: char| c.is_ascii_digit())
        }
        None => false,
    }
}

/// Canonicalizes a URL string. Inputs without a scheme are read as `http://`.
pub fn normalize(raw: &str) -> Result<NormalizedUrl, UrlError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(UrlError::Unparseable {
            input: raw.to_string(),
            reason: "empty input".into(),
        });
    }
    let owned;
    let candidate = if trimmed.contains("://") || has_opaque_scheme(trimmed) {
        trimmed
    } else {
        owned = format!("http://{trimmed}");
        owned.as_str()
    };
    let url = Url::parse(candidate).map_err(|e| UrlError::Unparseable {
        input: raw.to_string(),
        reason: e.to_string(),
    })?;
    from_parsed(&url, raw)
}

/// Resolves a link reference against the page it appeared on. Only http(s)
/// targets are returned.
pub fn resolve(base: &Url, reference: &str) -> Option<NormalizedUrl> {
    let reference = reference.trim();
    if reference.is_empty() {
        return None;
    }
    let joined = base.join(reference).ok()?;
    if !matches!(joined.scheme(), "http" | "https") {
        return None;
    }
    from_parsed(&joined, reference).ok()
}

pub fn core_url(u: &NormalizedUrl) -> NormalizedUrl {
    NormalizedUrl {
        query: None,
        ..u.clone()
    }
}

/// Core URL of an already normalized URL string.
pub fn core_url_str(normalized: &str) -> &str {
    match normalized.find('?') {
        Some(i) => &normalized[..i],
        None => normalized,
    }
}

/// Lowercase tokens of authority, path and query.
pub fn tokenize_url(u: &NormalizedUrl) -> Vec<String> {
    tokenize_url_text(&u.without_scheme())
}

/// Tokenizes a URL given as text, ignoring a leading scheme.
pub fn tokenize_url_text(s: &str) -> Vec<String> {
    let s = match s.find("://") {
        Some(i) => &s[i + 3..],
        None => s,
    };
    s.split(URL_DELIMITERS)
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Number of non-empty path segments; a trailing file name counts as one.
pub fn url_depth(u: &NormalizedUrl) -> usize {
    u.path.split('/').filter(|s| !s.is_empty()).count()
}

/// Public suffixes used to derive registrable domains.
#[derive(Debug, Clone)]
pub struct SuffixTable {
    suffixes: HashSet<String>,
}

impl Default for SuffixTable {
    fn default() -> Self {
        SuffixTable {
            suffixes: ["de", "com", "org", "net", "co.uk"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl SuffixTable {
    pub fn insert(&mut self, suffix: &str) {
        let s = suffix.trim().trim_start_matches('.').to_ascii_lowercase();
        if !s.is_empty() {
            self.suffixes.insert(s);
        }
    }

    /// Default table extended with one suffix per line of `path`.
    pub fn load(path: &Path) -> io::Result<Self> {
        let mut table = SuffixTable::default();
        for line in fs::read_to_string(path)?.lines() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                table.insert(line);
            }
        }
        Ok(table)
    }

    /// Registrable domain of a host. IP literals are returned unchanged.
    pub fn domain_of_host(&self, host: &str) -> String {
        let bare = host.trim_start_matches('[').trim_end_matches(']');
        if bare.parse::<IpAddr>().is_ok() {
            return host.to_string();
        }
        let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
        if labels.len() <= 1 {
            return host.to_string();
        }
        // Longest matching suffix wins.
        let mut suffix_len = 0;
        for n in 1..labels.len() {
            let candidate = labels[labels.len() - n..].join(".");
            if self.suffixes.contains(&candidate) {
                suffix_len = n;
            }
        }
        let take = if suffix_len == 0 { 2 } else { suffix_len + 1 };
        labels[labels.len() - take.min(labels.len())..].join(".")
    }

    pub fn domain_of(&self, u: &NormalizedUrl) -> String {
        self.domain_of_host(&u.host)
    }
}

/// Registrable domain using the built-in suffix table.
pub fn domain_of(u: &NormalizedUrl) -> String {
    SuffixTable::default().domain_of(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> NormalizedUrl {
        normalize(s).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let u = n("HTTP://Spiegel.DE/Thema/");
        assert_eq!(u.scheme(), "http");
        assert_eq!(u.authority(), "spiegel.de");
        assert_eq!(u.path(), "/Thema/");
        assert_eq!(n("http://a.de").path(), "/");
        assert_eq!(n("http://a.de/x%41").path(), "/xA");
        assert_eq!(n("http://a.de/x%2fy").path(), "/x%2Fy");
        assert_eq!(n("http://a.de:80/").authority(), "a.de");
        assert_eq!(n("http://a.de:8080/").authority(), "a.de:8080");
        assert_eq!(n("http://a.de/x#frag").to_string(), "http://a.de/x");
        assert_eq!(n("spiegel.de/thema").to_string(), "http://spiegel.de/thema");
    }

    #[test]
    fn normalize_errors_name_input() {
        let err = normalize("http://").unwrap_err();
        assert!(err.to_string().contains("http://"));
        assert!(normalize("").is_err());
        assert!(normalize("mailto:someone@a.de").is_err());
    }

    #[test]
    fn core_url_examples() {
        assert_eq!(core_url(&n("http://a.de/x?q=1")).to_string(), "http://a.de/x");
        assert_eq!(core_url(&n("http://a.de/x")).to_string(), "http://a.de/x");
        assert_eq!(
            core_url(&n("http://a.de/?s=angela+merkel")).to_string(),
            "http://a.de/"
        );
        assert_eq!(core_url_str("http://a.de/x?q=1"), "http://a.de/x");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize_url(&n("spiegel.de/thema/angela_merkel")),
            ["spiegel", "de", "thema", "angela", "merkel"]
        );
        assert_eq!(tokenize_url(&n("a.de/")), ["a", "de"]);
        assert_eq!(
            tokenize_url(&n("kino.de/star/bruce-willis/8453")),
            ["kino", "de", "star", "bruce", "willis", "8453"]
        );
        assert_eq!(
            tokenize_url(&n("http://a.de/suche?query=Merkel&x=1")),
            ["a", "de", "suche", "query", "merkel", "x", "1"]
        );
    }

    #[test]
    fn depth_examples() {
        assert_eq!(url_depth(&n("http://volkswagen.de/de.html")), 1);
        assert_eq!(url_depth(&n("http://a.de/")), 0);
        assert_eq!(
            url_depth(&n(
                "http://w.de/koepfe-der-wirtschaft/angela-merkel/5288044.html"
            )),
            3
        );
    }

    #[test]
    fn domain_examples() {
        assert_eq!(domain_of(&n("http://www.spiegel.de/x")), "spiegel.de");
        assert_eq!(domain_of(&n("http://a.b.example.de/")), "example.de");
        assert_eq!(domain_of(&n("http://127.0.0.1/")), "127.0.0.1");
        assert_eq!(domain_of(&n("http://news.bbc.co.uk/")), "bbc.co.uk");
        assert_eq!(domain_of(&n("http://x.y.example.fr/")), "example.fr");
        let mut t = SuffixTable::default();
        t.insert("gv.at");
        assert_eq!(t.domain_of(&n("http://a.bmf.gv.at/")), "bmf.gv.at");
    }

    #[test]
    fn resolve_relative_links() {
        let base = Url::parse("http://s.de/p/").unwrap();
        assert_eq!(resolve(&base, "/x").unwrap().to_string(), "http://s.de/x");
        assert_eq!(resolve(&base, "y.html").unwrap().to_string(), "http://s.de/p/y.html");
        assert!(resolve(&base, "javascript:void(0)").is_none());
        assert!(resolve(&base, "mailto:a@b.de").is_none());
        assert!(resolve(&base, "  ").is_none());
    }

    fn url_strategy() -> impl Strategy<Value = String> {
        let seg = "[A-Za-z0-9_~%.-]{0,6}";
        (
            prop_oneof![Just("http"), Just("HTTPS"), Just("Http")],
            "[A-Za-z]{1,5}(\\.[A-Za-z]{1,5}){0,2}",
            prop_oneof![Just(""), Just(":80"), Just(":8080")],
            proptest::collection::vec(seg, 0..4),
            proptest::option::of("[a-z]{1,3}=[A-Za-z0-9%+]{0,5}"),
        )
            .prop_map(|(scheme, host, port, segs, query)| {
                let mut s = format!("{scheme}://{host}{port}");
                for seg in segs {
                    s.push('/');
                    s.push_str(&seg);
                }
                if let Some(q) = query {
                    s.push('?');
                    s.push_str(&q);
                }
                s
            })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in url_strategy()) {
            if let Ok(once) = normalize(&raw) {
                let twice = normalize(&once.to_string()).unwrap();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn core_url_properties(raw in url_strategy()) {
            if let Ok(u) = normalize(&raw) {
                let c = core_url(&u);
                prop_assert_eq!(core_url(&c), c.clone());
                prop_assert_eq!(url_depth(&c), url_depth(&u));
                prop_assert!(!c.has_query());
            }
        }

        #[test]
        fn tokens_are_clean(raw in url_strategy()) {
            if let Ok(u) = normalize(&raw) {
                for t in tokenize_url(&u) {
                    prop_assert!(!t.is_empty());
                    prop_assert!(!t.contains(URL_DELIMITERS));
                }
            }
        }

        #[test]
        fn domain_is_host_suffix(raw in url_strategy()) {
            if let Ok(u) = normalize(&raw) {
                prop_assert!(u.host().ends_with(&domain_of(&u)));
            }
        }
    }
}
