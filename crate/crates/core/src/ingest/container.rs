//! Writers for WARC and ARC records, used to build fixtures and synthetic archives.

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;

/// One WARC/1.0 record with the given type, target and date, followed by
/// the two-CRLF record separator.
pub fn warc_record(warc_type: &str, target_uri: &str, date: &str, content: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(content.len() + 256);
    let content_type = match warc_type {
        "response" => "application/http; msgtype=response",
        "request" => "application/http; msgtype=request",
        _ => "application/warc-fields",
    };
    write!(
        out,
        "WARC/1.0\r\nWARC-Type: {warc_type}\r\nWARC-Target-URI: {target_uri}\r\nWARC-Date: {date}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\n\r\n",
        content.len()
    )
    .unwrap();
    out.extend_from_slice(content);
    out.extend_from_slice(b"\r\n\r\n");
    out
}

/// An HTTP/1.1 response with an HTML body.
pub fn http_response(status: u16, body: &str) -> Vec<u8> {
    let reason = if (200..300).contains(&status) { "OK" } else { "Other" };
    format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .into_bytes()
}

/// One ARC v1 record: header line, content, newline separator.
pub fn arc_record(url: &str, date14: &str, content: &[u8]) -> Vec<u8> {
    let mut out = format!("{url} 192.0.2.1 {date14} text/html {}\n", content.len()).into_bytes();
    out.extend_from_slice(content);
    out.push(b'\n');
    out
}

/// The `filedesc://` version block that opens an ARC file.
pub fn arc_filedesc(name: &str) -> Vec<u8> {
    let body = b"1 0 archive-rank\nURL IP-address Archive-date Content-type Archive-length\n";
    let mut out = format!(
        "filedesc://{name} 0.0.0.0 20000101000000 text/plain {}\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(body);
    out.push(b'\n');
    out
}

/// Compresses `data` as a single gzip member.
pub fn gzip(data: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(data).unwrap();
    enc.finish().unwrap()
}
