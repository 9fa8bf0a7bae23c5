//! Hyperlink extraction from captured HTML with a tolerant linear tag scanner.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use encoding_rs::Encoding;
use url::Url;

use crate::url_kit::{self, NormalizedUrl};
use crate::Timestamp;

/// Anchor texts longer than this many characters are truncated.
pub const MAX_ANCHOR_CHARS: usize = 8192;

/// The fourteen `TAG/attribute` link patterns recognised in archived pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TagPattern {
    AHref,
    ImgSrc,
    AreaHref,
    EmbedSrc,
    FrameSrc,
    InputSrc,
    IframeSrc,
    FormAction,
    TdBackground,
    TrBackground,
    BodyBackground,
    ObjectCodebase,
    TableBackground,
    FbLoginButtonBackground,
}

impl TagPattern {
    pub const ALL: [TagPattern; 14] = [
        TagPattern::AHref,
        TagPattern::ImgSrc,
        TagPattern::AreaHref,
        TagPattern::EmbedSrc,
        TagPattern::FrameSrc,
        TagPattern::InputSrc,
        TagPattern::IframeSrc,
        TagPattern::FormAction,
        TagPattern::TdBackground,
        TagPattern::TrBackground,
        TagPattern::BodyBackground,
        TagPattern::ObjectCodebase,
        TagPattern::TableBackground,
        TagPattern::FbLoginButtonBackground,
    ];

    /// Lowercase tag name and attribute.
    pub fn tag_and_attr(self) -> (&'static str, &'static str) {
        match self {
            TagPattern::AHref => ("a", "href"),
            TagPattern::ImgSrc => ("img", "src"),
            TagPattern::AreaHref => ("area", "href"),
            TagPattern::EmbedSrc => ("embed", "src"),
            TagPattern::FrameSrc => ("frame", "src"),
            TagPattern::InputSrc => ("input", "src"),
            TagPattern::IframeSrc => ("iframe", "src"),
            TagPattern::FormAction => ("form", "action"),
            TagPattern::TdBackground => ("td", "background"),
            TagPattern::TrBackground => ("tr", "background"),
            TagPattern::BodyBackground => ("body", "background"),
            TagPattern::ObjectCodebase => ("object", "codebase"),
            TagPattern::TableBackground => ("table", "background"),
            TagPattern::FbLoginButtonBackground => ("fb:login-button", "background"),
        }
    }

    /// Token used in `links.tsv`, e.g. `A/href`.
    pub fn token(self) -> &'static str {
        match self {
            TagPattern::AHref => "A/href",
            TagPattern::ImgSrc => "IMG/src",
            TagPattern::AreaHref => "AREA/href",
            TagPattern::EmbedSrc => "EMBED/src",
            TagPattern::FrameSrc => "FRAME/src",
            TagPattern::InputSrc => "INPUT/src",
            TagPattern::IframeSrc => "IFRAME/src",
            TagPattern::FormAction => "FORM/action",
            TagPattern::TdBackground => "TD/background",
            TagPattern::TrBackground => "TR/background",
            TagPattern::BodyBackground => "BODY/background",
            TagPattern::ObjectCodebase => "OBJECT/codebase",
            TagPattern::TableBackground => "TABLE/background",
            TagPattern::FbLoginButtonBackground => "FB:LOGIN-BUTTON/background",
        }
    }

    /// Link attribute of a (lowercase) tag name, if the tag is one of the patterns.
    fn for_tag(tag: &str) -> Option<TagPattern> {
        TagPattern::ALL
            .iter()
            .copied()
            .find(|p| p.tag_and_attr().0 == tag)
    }
}

impl fmt::Display for TagPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TagPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TagPattern::ALL
            .iter()
            .copied()
            .find(|p| p.token() == s)
            .ok_or_else(|| format!("unknown tag pattern {s:?}"))
    }
}

/// One extracted hyperlink.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinkRecord {
    pub source_full_url: String,
    pub source_capture_time: Timestamp,
    pub target_url: String,
    pub tag_pattern: TagPattern,
    /// Visible text of an `<a>` element; empty for every other pattern.
    pub anchor_text: String,
}

impl LinkRecord {
    pub fn target_core(&self) -> &str {
        url_kit::core_url_str(&self.target_url)
    }

    pub fn source_core(&self) -> &str {
        url_kit::core_url_str(&self.source_full_url)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkExtraction {
    pub links: Vec<LinkRecord>,
    /// The payload did not look like text.
    pub decode_failed: bool,
    pub truncated_anchors: usize,
}

/// Keeps only links to content pages (the `A/href` pattern), in order.
pub fn filter_content_links(links: &[LinkRecord]) -> Vec<LinkRecord> {
    links
        .iter()
        .filter(|l| l.tag_pattern == TagPattern::AHref)
        .cloned()
        .collect()
}

/// Finds a `charset=` declaration inside a `<meta>` tag near the top of the page.
fn sniff_meta_charset(bytes: &[u8]) -> Option<&'static Encoding> {
    let head = &bytes[..bytes.len().min(4096)];
    let lower: Vec<u8> = head.iter().map(|b| b.to_ascii_lowercase()).collect();
    let mut from = 0;
    while let Some(rel) = find(&lower[from..], b"<meta") {
        let start = from + rel;
        let end = lower[start..]
            .iter()
            .position(|&b| b == b'>')
            .map(|e| start + e)
            .unwrap_or(lower.len());
        let tag = &lower[start..end];
        if let Some(pos) = find(tag, b"charset=") {
            let value: Vec<u8> = tag[pos + 8..]
                .iter()
                .copied()
                .skip_while(|&b| b == b'"' || b == b'\'' || b == b' ')
                .take_while(|&b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b':' | b'.'))
                .collect();
            if let Some(enc) = Encoding::for_label(&value) {
                return Some(enc);
            }
        }
        from = end.max(start + 1);
    }
    None
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Decodes a page: declared meta charset, else UTF-8, else Latin-1.
/// Returns `None` for payloads that look binary.
pub fn decode_html(bytes: &[u8]) -> Option<Cow<'_, str>> {
    if bytes[..bytes.len().min(1024)].contains(&0) {
        return None;
    }
    if let Some(enc) = sniff_meta_charset(bytes) {
        let (text, _, _) = enc.decode(bytes);
        return Some(text);
    }
    match std::str::from_utf8(bytes) {
        Ok(s) => Some(Cow::Borrowed(s)),
        Err(_) => Some(Cow::Owned(bytes.iter().map(|&b| b as char).collect())),
    }
}

/// Decodes the character references found in attribute values and text.
pub fn decode_entities(s: &str) -> Cow<'_, str> {
    if !s.contains('&') {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest.as_bytes()[..rest.len().min(12)]
            .iter()
            .position(|&b| b == b';');
        let decoded = semi.and_then(|semi| {
            let name = &rest[1..semi];
            let ch = if let Some(num) = name.strip_prefix('#') {
                let code = match num.strip_prefix(['x', 'X']) {
                    Some(hex) => u32::from_str_radix(hex, 16).ok(),
                    None => num.parse().ok(),
                };
                code.and_then(char::from_u32)
            } else {
                named_entity(name)
            };
            ch.map(|c| (c, semi + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    Cow::Owned(out)
}

fn named_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "auml" => 'ä',
        "ouml" => 'ö',
        "uuml" => 'ü',
        "Auml" => 'Ä',
        "Ouml" => 'Ö',
        "Uuml" => 'Ü',
        "szlig" => 'ß',
        "eacute" => 'é',
        _ => return None,
    })
}

/// Collects anchor text with whitespace collapsed and a character cap.
#[derive(Default)]
struct AnchorText {
    text: String,
    chars: usize,
    pending_space: bool,
    truncated: bool,
}

impl AnchorText {
    fn push_str(&mut self, s: &str) {
        for c in s.chars() {
            if c.is_whitespace() {
                self.pending_space = !self.text.is_empty();
                continue;
            }
            let needed = if self.pending_space { 2 } else { 1 };
            if self.chars + needed > MAX_ANCHOR_CHARS {
                self.truncated = true;
                return;
            }
            if self.pending_space {
                self.text.push(' ');
                self.chars += 1;
                self.pending_space = false;
            }
            self.text.push(c);
            self.chars += 1;
        }
    }

    fn boundary(&mut self) {
        self.pending_space = !self.text.is_empty();
    }
}

struct Tag<'a> {
    name: String,
    closing: bool,
    attrs: Vec<(String, Cow<'a, str>)>,
    /// Byte offset just past the tag.
    end: usize,
}

impl Tag<'_> {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_ref())
    }
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b':' | b'-' | b'_')
}

/// Parses the tag starting at `start` (which points at `<`).
fn parse_tag(html: &str, start: usize) -> Option<Tag<'_>> {
    let bytes = html.as_bytes();
    let mut i = start + 1;
    let closing = bytes.get(i) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && is_name_byte(bytes[i]) {
        i += 1;
    }
    if i == name_start || !bytes[name_start].is_ascii_alphabetic() {
        return None;
    }
    let name = html[name_start..i].to_ascii_lowercase();
    let mut attrs = Vec::new();
    loop {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'/') {
            i += 1;
        }
        if i >= bytes.len() {
            return Some(Tag { name, closing, attrs, end: bytes.len() });
        }
        if bytes[i] == b'>' {
            return Some(Tag { name, closing, attrs, end: i + 1 });
        }
        let attr_start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !matches!(bytes[i], b'=' | b'>' | b'/') {
            i += 1;
        }
        let attr_name = html[attr_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value: Cow<'_, str> = Cow::Borrowed("");
        if bytes.get(i) == Some(&b'=') {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            match bytes.get(i) {
                Some(&q @ (b'"' | b'\'')) => {
                    let vstart = i + 1;
                    let vend = bytes[vstart..]
                        .iter()
                        .position(|&b| b == q)
                        .map(|p| vstart + p)
                        .unwrap_or(bytes.len());
                    value = decode_entities(&html[vstart..vend]);
                    i = (vend + 1).min(bytes.len());
                }
                Some(_) => {
                    let vstart = i;
                    while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>' {
                        i += 1;
                    }
                    value = decode_entities(&html[vstart..i]);
                }
                None => {}
            }
        }
        if attr_name.is_empty() {
            i += 1;
        } else {
            attrs.push((attr_name, value));
        }
    }
}

fn find_ci(haystack: &str, from: usize, needle: &str) -> Option<usize> {
    let hay = haystack.as_bytes();
    let n = needle.as_bytes();
    if from >= hay.len() {
        return None;
    }
    hay[from..]
        .windows(n.len())
        .position(|w| w.eq_ignore_ascii_case(n))
        .map(|p| from + p)
}

struct Scanner {
    base: Url,
    source_full: String,
    time: Timestamp,
    out: LinkExtraction,
    /// Index into `out.links` of the open `<a>` and its text so far.
    open_anchor: Option<(usize, AnchorText)>,
    saw_base: bool,
}

impl Scanner {
    fn emit(&mut self, pattern: TagPattern, reference: &str) -> Option<usize> {
        let target = url_kit::resolve(&self.base, reference)?;
        self.out.links.push(LinkRecord {
            source_full_url: self.source_full.clone(),
            source_capture_time: self.time,
            target_url: target.to_string(),
            tag_pattern: pattern,
            anchor_text: String::new(),
        });
        Some(self.out.links.len() - 1)
    }

    fn close_anchor(&mut self) {
        if let Some((idx, text)) = self.open_anchor.take() {
            if text.truncated {
                self.out.truncated_anchors += 1;
            }
            self.out.links[idx].anchor_text = text.text;
        }
    }

    fn handle_tag(&mut self, tag: &Tag<'_>) {
        if tag.closing {
            if tag.name == "a" {
                self.close_anchor();
            } else if let Some((_, text)) = self.open_anchor.as_mut() {
                text.boundary();
            }
            return;
        }
        if tag.name == "base" && !self.saw_base {
            if let Some(href) = tag.attr("href") {
                if let Ok(b) = self.base.join(href.trim()) {
                    self.base = b;
                    self.saw_base = true;
                }
            }
            return;
        }
        if tag.name == "a" {
            // An unclosed <a> ends where the next one starts.
            self.close_anchor();
            if let Some(href) = tag.attr("href") {
                if let Some(idx) = self.emit(TagPattern::AHref, href) {
                    self.open_anchor = Some((idx, AnchorText::default()));
                }
            }
            return;
        }
        if let Some((_, text)) = self.open_anchor.as_mut() {
            text.boundary();
        }
        if let Some(pattern) = TagPattern::for_tag(&tag.name) {
            let (_, attr) = pattern.tag_and_attr();
            if let Some(value) = tag.attr(attr) {
                let value = value.to_string();
                self.emit(pattern, &value);
            }
        }
    }

    fn run(&mut self, html: &str) {
        let bytes = html.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let next_lt = bytes[i..].iter().position(|&b| b == b'<').map(|p| i + p);
            let text_end = next_lt.unwrap_or(bytes.len());
            if text_end > i {
                if let Some((_, text)) = self.open_anchor.as_mut() {
                    text.push_str(&decode_entities(&html[i..text_end]));
                }
            }
            let Some(lt) = next_lt else { break };
            if html[lt..].starts_with("<!--") {
                i = html[lt + 4..]
                    .find("-->")
                    .map(|p| lt + 4 + p + 3)
                    .unwrap_or(bytes.len());
                continue;
            }
            match parse_tag(html, lt) {
                Some(tag) => {
                    i = tag.end;
                    if !tag.closing && (tag.name == "script" || tag.name == "style") {
                        let close = format!("</{}", tag.name);
                        i = find_ci(html, i, &close).unwrap_or(bytes.len());
                        continue;
                    }
                    self.handle_tag(&tag);
                }
                None => {
                    // A stray '<' is ordinary text.
                    if let Some((_, text)) = self.open_anchor.as_mut() {
                        text.push_str("<");
                    }
                    i = lt + 1;
                }
            }
        }
        self.close_anchor();
    }
}

/// Extracts every link of the fourteen patterns from an HTML payload.
/// Relative references are resolved against `base`.
pub fn extract_links(payload: &[u8], base: &NormalizedUrl, source_time: Timestamp) -> LinkExtraction {
    let Some(html) = decode_html(payload) else {
        return LinkExtraction {
            decode_failed: true,
            ..Default::default()
        };
    };
    let Ok(base_url) = Url::parse(&base.to_string()) else {
        return LinkExtraction::default();
    };
    let mut scanner = Scanner {
        base: base_url,
        source_full: base.to_string(),
        time: source_time,
        out: LinkExtraction::default(),
        open_anchor: None,
        saw_base: false,
    };
    scanner.run(&html);
    scanner.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn extract(html: &str, base: &str) -> LinkExtraction {
        extract_links(html.as_bytes(), &url_kit::normalize(base).unwrap(), Timestamp(0))
    }

    pub(crate) const ALL_PATTERNS_HTML: &str = r#"<html><body background="bg.png">
        <a href="/x">Angela  Merkel</a>
        <img src="logo.png">
        <map><area href="area.html"></map>
        <embed src="movie.swf">
        <frameset><frame src="frame.html"></frameset>
        <input type="image" src="button.png">
        <iframe src="inner.html"></iframe>
        <form action="/search"></form>
        <table background="t.png"><tr background="r.png"><td background="c.png">x</td></tr></table>
        <object codebase="http://cdn.de/obj/"></object>
        <fb:login-button background="fb.png"></fb:login-button>
        </body></html>"#;

    #[test]
    fn anchor_resolution_and_whitespace() {
        let out = extract(r#"<a href="/x">Angela  Merkel</a>"#, "http://s.de/p/");
        assert_eq!(out.links.len(), 1);
        let l = &out.links[0];
        assert_eq!(l.target_url, "http://s.de/x");
        assert_eq!(l.tag_pattern, TagPattern::AHref);
        assert_eq!(l.anchor_text, "Angela Merkel");
        assert_eq!(l.source_full_url, "http://s.de/p/");
    }

    #[test]
    fn image_source_has_no_anchor() {
        let out = extract(r#"<img src="logo.png">"#, "http://s.de/p/");
        assert_eq!(out.links.len(), 1);
        assert_eq!(out.links[0].tag_pattern, TagPattern::ImgSrc);
        assert_eq!(out.links[0].target_url, "http://s.de/p/logo.png");
        assert_eq!(out.links[0].anchor_text, "");
    }

    #[test]
    fn one_of_each_pattern() {
        let out = extract(ALL_PATTERNS_HTML, "http://s.de/");
        assert_eq!(out.links.len(), 14);
        let mut got: Vec<_> = out.links.iter().map(|l| l.tag_pattern).collect();
        got.sort();
        let mut want = TagPattern::ALL.to_vec();
        want.sort();
        assert_eq!(got, want);
        let content = filter_content_links(&out.links);
        assert_eq!(content.len(), 1);
        assert_eq!(content[0].anchor_text, "Angela Merkel");
    }

    #[test]
    fn filter_keeps_order() {
        assert!(filter_content_links(&[]).is_empty());
        let out = extract(
            r#"<a href="1">a</a><img src="i1"><a href="2">b</a><img src="i2"><a href="3">c</a>"#,
            "http://s.de/",
        );
        let kept: Vec<_> = filter_content_links(&out.links)
            .into_iter()
            .map(|l| l.anchor_text)
            .collect();
        assert_eq!(kept, ["a", "b", "c"]);
    }

    #[test]
    fn inner_markup_and_entities() {
        let out = extract(
            r#"<A HREF='/m?a=1&amp;b=2'><b>Angela</b><i>Merkel</i> &amp; Co</A>"#,
            "http://s.de/",
        );
        assert_eq!(out.links[0].target_url, "http://s.de/m?a=1&b=2");
        assert_eq!(out.links[0].anchor_text, "Angela Merkel & Co");
    }

    #[test]
    fn unclosed_anchor_closes_at_next_anchor() {
        let out = extract(r#"<a href="/1">one <a href="/2">two</a> tail"#, "http://s.de/");
        let texts: Vec<_> = out.links.iter().map(|l| l.anchor_text.as_str()).collect();
        assert_eq!(texts, ["one", "two"]);
        let out = extract(r#"<a href="/1">runs to the end"#, "http://s.de/");
        assert_eq!(out.links[0].anchor_text, "runs to the end");
    }

    #[test]
    fn comments_and_scripts_are_ignored() {
        let html = r#"<!-- <a href="/c">c</a> --><script>var s = '<a href="/s">s</a>';</script><a href="/ok">ok</a>"#;
        let out = extract(html, "http://s.de/");
        assert_eq!(out.links.len(), 1);
        assert_eq!(out.links[0].target_url, "http://s.de/ok");
    }

    #[test]
    fn base_href_changes_resolution() {
        let out = extract(r#"<base href="http://other.de/dir/"><a href="x">x</a>"#, "http://s.de/");
        assert_eq!(out.links[0].target_url, "http://other.de/dir/x");
    }

    #[test]
    fn anchor_text_is_capped() {
        let long = "w ".repeat(MAX_ANCHOR_CHARS);
        let out = extract(&format!(r#"<a href="/x">{long}</a>"#), "http://s.de/");
        assert_eq!(out.truncated_anchors, 1);
        assert!(out.links[0].anchor_text.chars().count() <= MAX_ANCHOR_CHARS);
    }

    #[test]
    fn charset_handling() {
        let latin1 = b"<meta charset=\"iso-8859-1\"><a href=\"/x\">M\xfcller</a>";
        let out = extract_links(latin1, &url_kit::normalize("http://s.de/").unwrap(), Timestamp(0));
        assert_eq!(out.links[0].anchor_text, "Müller");
        // No declaration and invalid UTF-8: Latin-1 fallback.
        let raw = b"<a href=\"/x\">Gr\xf6\xdfe</a>";
        let out = extract_links(raw, &url_kit::normalize("http://s.de/").unwrap(), Timestamp(0));
        assert_eq!(out.links[0].anchor_text, "Größe");
        let binary = b"\x89PNG\r\n\x1a\n\0\0\0\rIHDR";
        let out = extract_links(binary, &url_kit::normalize("http://s.de/").unwrap(), Timestamp(0));
        assert!(out.decode_failed);
        assert!(out.links.is_empty());
    }

    #[test]
    fn pattern_tokens_roundtrip() {
        for p in TagPattern::ALL {
            assert_eq!(p.token().parse::<TagPattern>().unwrap(), p);
        }
    }

    fn soup() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            Just("<a href=\"/a\">".to_string()),
            Just("</a>".to_string()),
            Just("<img src=x.png>".to_string()),
            Just("<td background='b.png'>".to_string()),
            Just("<form action=/f>".to_string()),
            Just("<div class=x>".to_string()),
            Just("<!-- c".to_string()),
            Just("-->".to_string()),
            Just("<".to_string()),
            Just(">".to_string()),
            Just("\"".to_string()),
            Just("<script>".to_string()),
            "[a-zA-Z &;]{0,8}",
            "<[a-z:]{1,8} [a-z]{1,6}=[a-z./]{0,6}>",
        ];
        proptest::collection::vec(piece, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn soup_never_yields_foreign_patterns(html in soup()) {
            let out = extract(&html, "http://s.de/p/");
            for l in &out.links {
                prop_assert!(TagPattern::ALL.contains(&l.tag_pattern));
                prop_assert!(url_kit::normalize(&l.target_url).is_ok());
                if l.tag_pattern != TagPattern::AHref {
                    prop_assert!(l.anchor_text.is_empty());
                }
            }
        }
    }
}
