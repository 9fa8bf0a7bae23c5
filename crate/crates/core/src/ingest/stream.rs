//! Byte-stream plumbing shared by the WARC and ARC readers.

use std::io::{self, BufRead, BufReader, Read};

use flate2::bufread::MultiGzDecoder;

/// Longest header line the readers accept before treating the rest as junk.
pub(crate) const MAX_LINE_BYTES: usize = 64 * 1024;

/// A `BufRead` that can push bytes back in front of the underlying stream.
pub(crate) struct Rewind<R> {
    front: Vec<u8>,
    pos: usize,
    inner: R,
}

impl<R: BufRead> Rewind<R> {
    pub(crate) fn new(inner: R) -> Self {
        Rewind {
            front: Vec::new(),
            pos: 0,
            inner,
        }
    }

    pub(crate) fn push_front(&mut self, bytes: &[u8]) {
        if bytes.is_empty() {
            return;
        }
        let mut merged = Vec::with_capacity(bytes.len() + self.front.len() - self.pos);
        merged.extend_from_slice(bytes);
        merged.extend_from_slice(&self.front[self.pos..]);
        self.front = merged;
        self.pos = 0;
    }

    /// Reads one line including its terminator. Lines longer than
    /// `MAX_LINE_BYTES` are cut; the remainder is returned by the next call.
    pub(crate) fn read_line_bounded(&mut self, out: &mut Vec<u8>) -> io::Result<usize> {
        out.clear();
        loop {
            let available = self.fill_buf()?;
            if available.is_empty() {
                return Ok(out.len());
            }
            let room = MAX_LINE_BYTES - out.len();
            let window = &available[..available.len().min(room)];
            if let Some(nl) = window.iter().position(|&b| b == b'\n') {
                out.extend_from_slice(&window[..=nl]);
                self.consume(nl + 1);
                return Ok(out.len());
            }
            let n = window.len();
            out.extend_from_slice(window);
            self.consume(n);
            if out.len() >= MAX_LINE_BYTES {
                return Ok(out.len());
            }
        }
    }

    /// Reads up to `n` bytes; a short result means the stream ended.
    pub(crate) fn read_up_to(&mut self, n: usize, out: &mut Vec<u8>) -> io::Result<()> {
        out.clear();
        out.reserve(n.min(1 << 20));
        (&mut *self).take(n as u64).read_to_end(out)?;
        Ok(())
    }

    /// Discards up to `n` bytes and returns how many were discarded.
    pub(crate) fn skip(&mut self, n: u64) -> io::Result<u64> {
        io::copy(&mut (&mut *self).take(n), &mut io::sink())
    }

    pub(crate) fn peek_byte(&mut self) -> io::Result<Option<u8>> {
        Ok(self.fill_buf()?.first().copied())
    }
}

impl<R: BufRead> Read for Rewind<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let available = self.fill_buf()?;
        let n = available.len().min(buf.len());
        buf[..n].copy_from_slice(&available[..n]);
        self.consume(n);
        Ok(n)
    }
}

impl<R: BufRead> BufRead for Rewind<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        if self.pos < self.front.len() {
            return Ok(&self.front[self.pos..]);
        }
        if !self.front.is_empty() {
            self.front.clear();
            self.pos = 0;
        }
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        if self.pos < self.front.len() {
            self.pos += amt;
        } else {
            self.inner.consume(amt);
        }
    }
}

/// Wraps a reader, transparently decompressing when it starts with a gzip
/// magic number. Concatenated gzip members (one per record) are supported.
pub fn maybe_gunzip<'a, R: Read + 'a>(reader: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut buffered = BufReader::with_capacity(1 << 16, reader);
    let head = buffered.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::with_capacity(
            1 << 16,
            MultiGzDecoder::new(buffered),
        )))
    } else {
        Ok(Box::new(buffered))
    }
}

pub(crate) fn trim_line(line: &[u8]) -> &[u8] {
    let mut end = line.len();
    while end > 0 && matches!(line[end - 1], b'\n' | b'\r') {
        end -= 1;
    }
    &line[..end]
}

pub(crate) fn is_blank(line: &[u8]) -> bool {
    line.iter().all(|b| b.is_ascii_whitespace())
}
