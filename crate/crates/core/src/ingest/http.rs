/// Status, content type and body offset of a captured HTTP response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct HttpHead {
    pub status: Option<u16>,
    pub content_type: Option<String>,
    pub body_offset: usize,
}

/// Splits a captured HTTP response into head and body. Payloads that do not
/// start with an HTTP status line are treated as a bare body.
pub(crate) fn parse_http_head(buf: &[u8]) -> HttpHead {
    if !buf.starts_with(b"HTTP/") {
        return HttpHead {
            status: None,
            content_type: None,
            body_offset: 0,
        };
    }
    let (head_end, body_offset) = match find(buf, b"\r\n\r\n") {
        Some(i) => (i, i + 4),
        None => match find(buf, b"\n\n") {
            Some(i) => (i, i + 2),
            None => (buf.len(), buf.len()),
        },
    };
    let head = String::from_utf8_lossy(&buf[..head_end]);
    let mut lines = head.lines();
    let status = lines
        .next()
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|code| code.parse().ok());
    let content_type = lines.find_map(|l| {
        let (name, value) = l.split_once(':')?;
        name.trim()
            .eq_ignore_ascii_case("content-type")
            .then(|| mime_essence(value))
    });
    HttpHead {
        status,
        content_type,
        body_offset,
    }
}

/// `text/html; charset=utf-8` -> `text/html`.
pub(crate) fn mime_essence(value: &str) -> String {
    value
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_head_and_body() {
        let raw = b"HTTP/1.1 200 OK\r\nContent-Type: text/html; charset=utf-8\r\n\r\n<html>";
        let h = parse_http_head(raw);
        assert_eq!(h.status, Some(200));
        assert_eq!(h.content_type.as_deref(), Some("text/html"));
        assert_eq!(&raw[h.body_offset..], b"<html>");
    }

    #[test]
    fn bare_body() {
        let h = parse_http_head(b"<html></html>");
        assert_eq!(h.status, None);
        assert_eq!(h.body_offset, 0);
    }

    #[test]
    fn lf_only_head() {
        let raw = b"HTTP/1.0 404 Not Found\nContent-type: text/plain\n\nnope";
        let h = parse_http_head(raw);
        assert_eq!(h.status, Some(404));
        assert_eq!(h.content_type.as_deref(), Some("text/plain"));
        assert_eq!(&raw[h.body_offset..], b"nope");
    }
}
