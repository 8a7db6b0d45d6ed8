//! Minimal HTTP/1.1 client: one request per connection, `Connection: close`.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::time::timeout;
use url::Url;

const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("unsupported URL `{0}` (only http:// is supported)")]
    Url(String),
    #[error("connect: {0}")]
    Connect(io::Error),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Protocol(String),
    /// The connection broke after `received` body bytes were written out.
    #[error("interrupted after {received} bytes: {source}")]
    Interrupted { received: u64, source: io::Error },
    #[error("writing output: {0}")]
    Sink(io::Error),
    #[error("timed out")]
    Timeout,
}

/// Status line facts the engine acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchOutcome {
    pub status: u16,
    /// Body bytes written.
    pub bytes: u64,
    /// Full resource size, from `Content-Range` or a 200's `Content-Length`.
    pub total: Option<u64>,
}

enum Framing {
    Length(u64),
    Chunked,
    Close,
}

type Body = BufReader<tokio::io::Chain<io::Cursor<Vec<u8>>, TcpStream>>;

/// An open response whose body has not been read yet.
pub(crate) struct Response {
    pub status: u16,
    /// Full resource size when the server said so.
    pub total: Option<u64>,
    /// Lower-cased names.
    headers: Vec<(String, String)>,
    framing: Framing,
    body: Body,
    io_timeout: Duration,
}

fn target(url: &Url) -> Result<(String, String), FetchError> {
    if url.scheme() != "http" {
        return Err(FetchError::Url(url.to_string()));
    }
    let host = url.host_str().ok_or_else(|| FetchError::Url(url.to_string()))?;
    let port = url.port_or_known_default().unwrap_or(80);
    let mut path = url.path().to_owned();
    if let Some(q) = url.query() {
        path.push('?');
        path.push_str(q);
    }
    Ok((format!("{host}:{port}"), path))
}

async fn with_timeout<T>(d: Duration, f: impl std::future::Future<Output = T>) -> Result<T, FetchError> {
    timeout(d, f).await.map_err(|_| FetchError::Timeout)
}

/// Sends `method` for `url`, optionally with `Range: bytes=start-end`
/// (inclusive), and reads the response head.
pub(crate) async fn open(
    method: &str,
    url: &Url,
    range: Option<(u64, u64)>,
    bs: usize,
    io_timeout: Duration,
) -> Result<Response, FetchError> {
    open_with(method, url, range, &[], &[], bs, io_timeout).await
}

async fn open_with(
    method: &str,
    url: &Url,
    range: Option<(u64, u64)>,
    extra: &[(&str, &str)],
    payload: &[u8],
    bs: usize,
    io_timeout: Duration,
) -> Result<Response, FetchError> {
    let (addr, path) = target(url)?;
    let mut stream = with_timeout(io_timeout, TcpStream::connect(&addr))
        .await?
        .map_err(FetchError::Connect)?;
    stream.set_nodelay(true).ok();
    let mut req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {}\r\nUser-Agent: fasthla\r\nAccept-Encoding: identity\r\nConnection: close\r\n",
        url.host_str().unwrap_or_default()
    );
    if let Some((start, end)) = range {
        req.push_str(&format!("Range: bytes={start}-{end}\r\n"));
    }
    for (name, value) in extra {
        req.push_str(&format!("{name}: {value}\r\n"));
    }
    if !payload.is_empty() || method == "POST" || method == "PUT" {
        req.push_str(&format!("Content-Length: {}\r\n", payload.len()));
    }
    req.push_str("\r\n");
    let mut wire = req.into_bytes();
    wire.extend_from_slice(payload);
    with_timeout(io_timeout, stream.write_all(&wire))
        .await?
        .map_err(FetchError::Connect)?;

    let mut head = Vec::with_capacity(1024);
    let mut buf = vec![0u8; bs.clamp(512, 16 * 1024)];
    let head_len = loop {
        if let Some(pos) = head.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        if head.len() > MAX_HEADER_BYTES {
            return Err(FetchError::Protocol("header section too large".into()));
        }
        let n = with_timeout(io_timeout, stream.read(&mut buf))
            .await?
            .map_err(|e| FetchError::Interrupted { received: 0, source: e })?;
        if n == 0 {
            return Err(FetchError::Protocol("connection closed before headers".into()));
        }
        head.extend_from_slice(&buf[..n]);
    };

    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut parsed = httparse::Response::new(&mut headers);
    match parsed.parse(&head[..head_len]) {
        Ok(httparse::Status::Complete(_)) => {}
        Ok(httparse::Status::Partial) => return Err(FetchError::Protocol("incomplete head".into())),
        Err(e) => return Err(FetchError::Protocol(e.to_string())),
    }
    let status = parsed.code.unwrap_or(0);
    let header = |name: &str| {
        parsed
            .headers
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .and_then(|h| std::str::from_utf8(h.value).ok())
            .map(str::trim)
    };
    let length = match header("content-length") {
        Some(v) => Some(
            v.parse::<u64>()
                .map_err(|_| FetchError::Protocol(format!("bad Content-Length `{v}`")))?,
        ),
        None => None,
    };
    let chunked = header("transfer-encoding").is_some_and(|v| v.to_ascii_lowercase().contains("chunked"));
    let framing = if method == "HEAD" || status == 204 || status == 304 {
        Framing::Length(0)
    } else if chunked {
        Framing::Chunked
    } else if let Some(n) = length {
        Framing::Length(n)
    } else {
        Framing::Close
    };
    let total = match status {
        206 => {
            let cr = header("content-range")
                .ok_or_else(|| FetchError::Protocol("206 without Content-Range".into()))?;
            let (span, size) = parse_content_range(cr)?;
            if let (Some((want, _)), Some((got, _))) = (range, span) {
                if want != got {
                    return Err(FetchError::Protocol(format!("asked for offset {want}, got {got}")));
                }
            }
            size
        }
        200 => length,
        _ => None,
    };

    let headers = parsed
        .headers
        .iter()
        .map(|h| (h.name.to_ascii_lowercase(), String::from_utf8_lossy(h.value).trim().to_owned()))
        .collect();
    let leftover = head.split_off(head_len);
    Ok(Response {
        status,
        total,
        headers,
        framing,
        body: BufReader::with_capacity(bs.max(1), io::Cursor::new(leftover).chain(stream)),
        io_timeout,
    })
}

/// `bytes a-b/total`, where either part may be `*`.
fn parse_content_range(v: &str) -> Result<(Option<(u64, u64)>, Option<u64>), FetchError> {
    let bad = || FetchError::Protocol(format!("bad Content-Range `{v}`"));
    let rest = v.strip_prefix("bytes ").ok_or_else(bad)?;
    let (span, size) = rest.split_once('/').ok_or_else(bad)?;
    let size = if size == "*" { None } else { Some(size.parse().map_err(|_| bad())?) };
    let span = if span == "*" {
        None
    } else {
        let (a, b) = span.split_once('-').ok_or_else(bad)?;
        Some((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
    };
    Ok((span, size))
}

impl Response {
    /// Streams the body into `out` in reads of at most `bs` bytes, adding
    /// every written byte to `progress`.
    pub(crate) async fn copy_to<W: AsyncWrite + Unpin>(
        mut self,
        out: &mut W,
        bs: usize,
        progress: &AtomicU64,
    ) -> Result<u64, FetchError> {
        let mut buf = vec![0u8; bs.max(1)];
        let mut written = 0u64;
        let io_timeout = self.io_timeout;
        let broken = |received: u64, e: io::Error| FetchError::Interrupted { received, source: e };
        let eof = || io::Error::new(io::ErrorKind::UnexpectedEof, "body ended early");

        macro_rules! pump {
            ($limit:expr) => {{
                let mut left: u64 = $limit;
                while left > 0 {
                    let want = buf.len().min(usize::try_from(left).unwrap_or(usize::MAX));
                    let n = with_timeout(io_timeout, self.body.read(&mut buf[..want]))
                        .await?
                        .map_err(|e| broken(written, e))?;
                    if n == 0 {
                        return Err(broken(written, eof()));
                    }
                    out.write_all(&buf[..n]).await.map_err(FetchError::Sink)?;
                    progress.fetch_add(n as u64, Ordering::Relaxed);
                    written += n as u64;
                    left -= n as u64;
                }
            }};
        }

        match self.framing {
            Framing::Length(n) => pump!(n),
            Framing::Close => loop {
                let n = with_timeout(io_timeout, self.body.read(&mut buf))
                    .await?
                    .map_err(|e| broken(written, e))?;
                if n == 0 {
                    break;
                }
                out.write_all(&buf[..n]).await.map_err(FetchError::Sink)?;
                progress.fetch_add(n as u64, Ordering::Relaxed);
                written += n as u64;
            },
            Framing::Chunked => loop {
                let mut line = String::new();
                with_timeout(io_timeout, self.body.read_line(&mut line))
                    .await?
                    .map_err(|e| broken(written, e))?;
                let size_text = line.trim().split(';').next().unwrap_or_default();
                let size = u64::from_str_radix(size_text, 16)
                    .map_err(|_| FetchError::Protocol(format!("bad chunk size `{}`", line.trim())))?;
                if size == 0 {
                    break;
                }
                pump!(size);
                let mut crlf = [0u8; 2];
                with_timeout(io_timeout, self.body.read_exact(&mut crlf))
                    .await?
                    .map_err(|e| broken(written, e))?;
            },
        }
        out.flush().await.map_err(FetchError::Sink)?;
        Ok(written)
    }
}

/// Fetches `url` (optionally one inclusive byte range) into `out`.
///
/// Fails with [`FetchError::Status`] unless the server answers 200 or 206.
pub async fn fetch<W: AsyncWrite + Unpin>(
    url: &Url,
    range: Option<(u64, u64)>,
    bs: usize,
    out: &mut W,
    progress: &AtomicU64,
    io_timeout: Duration,
) -> Result<FetchOutcome, FetchError> {
    let resp = open("GET", url, range, bs, io_timeout).await?;
    if resp.status != 200 && resp.status != 206 {
        return Err(FetchError::Status(resp.status));
    }
    let (status, total) = (resp.status, resp.total);
    let bytes = resp.copy_to(out, bs, progress).await?;
    Ok(FetchOutcome { status, bytes, total })
}

/// A fully read response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    /// `(lower-cased name, value)` in wire order.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers.iter().find(|h| h.0 == name).map(|h| h.1.as_str())
    }
}

/// Sends one request with extra headers and a body, and reads the whole
/// response whatever its status.
pub async fn request(
    method: &str,
    url: &Url,
    headers: &[(&str, &str)],
    body: &[u8],
    io_timeout: Duration,
) -> Result<Reply, FetchError> {
    let resp = open_with(method, url, None, headers, body, 16 * 1024, io_timeout).await?;
    let (status, headers) = (resp.status, resp.headers.clone());
    let mut out = Vec::new();
    resp.copy_to(&mut out, 16 * 1024, &AtomicU64::new(0)).await?;
    Ok(Reply { status, headers, body: out })
}

/// Size of `url` from a HEAD request's `Content-Length`.
pub async fn content_length(url: &Url, io_timeout: Duration) -> Result<Option<u64>, FetchError> {
    let resp = open("HEAD", url, None, 4096, io_timeout).await?;
    if resp.status != 200 {
        return Err(FetchError::Status(resp.status));
    }
    Ok(resp.total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_range_forms() {
        assert_eq!(parse_content_range("bytes 0-9/100").unwrap(), (Some((0, 9)), Some(100)));
        assert_eq!(parse_content_range("bytes */100").unwrap(), (None, Some(100)));
        assert_eq!(parse_content_range("bytes 5-9/*").unwrap(), (Some((5, 9)), None));
        assert!(parse_content_range("items 0-1/2").is_err());
    }

    #[test]
    fn only_http() {
        let u = Url::parse("https://example.com/a").unwrap();
        assert!(matches!(target(&u), Err(FetchError::Url(_))));
        let u = Url::parse("http://example.com:8080/a/b?x=1").unwrap();
        assert_eq!(target(&u).unwrap(), ("example.com:8080".into(), "/a/b?x=1".into()));
    }
}
