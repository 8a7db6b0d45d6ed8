//! Loopback HTTP origin for tests and demos.
//!
//! Serves an in-memory corpus on `127.0.0.1` with optional `Range` support
//! and injectable faults.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use bytes::Bytes;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Honours single `bytes=a-b` ranges with 206.
    Ranges,
    /// Ignores `Range` and always answers 200 with the whole file.
    NoRanges,
    /// Like `Ranges`, but the first `failures` responses for each path stop
    /// halfway through the body.
    Faulty { failures: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureConfig {
    pub mode: Mode,
    /// Body chunk size.
    pub chunk: usize,
    /// Pause before each chunk, to keep connections open longer.
    pub chunk_delay: Option<Duration>,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            mode: Mode::Ranges,
            chunk: 16 * 1024,
            chunk_delay: None,
        }
    }
}

#[derive(Default)]
struct Counters {
    requests: AtomicUsize,
    range_requests: AtomicUsize,
    open_bodies: AtomicUsize,
    peak_bodies: AtomicUsize,
    failures: Mutex<HashMap<String, usize>>,
}

struct Shared {
    files: BTreeMap<String, Bytes>,
    config: FixtureConfig,
    counters: Counters,
}

/// A running server; stopped on drop.
pub struct Fixture {
    addr: SocketAddr,
    shared: Arc<Shared>,
    task: JoinHandle<()>,
}

impl Fixture {
    pub async fn start(files: Vec<(String, Vec<u8>)>, config: FixtureConfig) -> std::io::Result<Self> {
        let shared = Arc::new(Shared {
            files: files.into_iter().map(|(n, b)| (n, Bytes::from(b))).collect(),
            config,
            counters: Counters::default(),
        });
        let app = Router::new()
            .route("/files/{name}", get(serve))
            .with_state(shared.clone());
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            axum::serve(listener, app).await.ok();
        });
        Ok(Fixture { addr, shared, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, name: &str) -> String {
        format!("http://{}/files/{name}", self.addr)
    }

    /// `(url, size)` of every file, in name order.
    pub fn dataset(&self) -> Vec<(String, u64)> {
        self.shared
            .files
            .iter()
            .map(|(n, b)| (self.url(n), b.len() as u64))
            .collect()
    }

    pub fn content(&self, name: &str) -> Option<&[u8]> {
        self.shared.files.get(name).map(|b| &b[..])
    }

    /// GET and HEAD requests seen so far.
    pub fn requests(&self) -> usize {
        self.shared.counters.requests.load(Ordering::SeqCst)
    }

    pub fn range_requests(&self) -> usize {
        self.shared.counters.range_requests.load(Ordering::SeqCst)
    }

    /// Largest number of response bodies streamed at the same time.
    pub fn peak_bodies(&self) -> usize {
        self.shared.counters.peak_bodies.load(Ordering::SeqCst)
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Parses a single `bytes=a-b`, `bytes=a-` or `bytes=-n` range against `len`.
fn parse_range(value: &str, len: u64) -> Option<(u64, u64)> {
    let spec = value.trim().strip_prefix("bytes=")?;
    if spec.contains(',') || len == 0 {
        return None;
    }
    let (a, b) = spec.split_once('-')?;
    let (start, end) = if a.is_empty() {
        let n: u64 = b.parse().ok()?;
        (len.saturating_sub(n), len - 1)
    } else {
        let start: u64 = a.parse().ok()?;
        let end = if b.is_empty() { len - 1 } else { b.parse::<u64>().ok()?.min(len - 1) };
        (start, end)
    };
    (start <= end && start < len).then_some((start, end))
}

struct BodyGuard(Arc<Shared>);

impl BodyGuard {
    fn new(shared: Arc<Shared>) -> Self {
        let now = shared.counters.open_bodies.fetch_add(1, Ordering::SeqCst) + 1;
        shared.counters.peak_bodies.fetch_max(now, Ordering::SeqCst);
        BodyGuard(shared)
    }
}

impl Drop for BodyGuard {
    fn drop(&mut self) {
        self.0.counters.open_bodies.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Streams `data` in chunks; with `cut`, fails after that many bytes.
fn body(shared: Arc<Shared>, data: Bytes, cut: Option<usize>) -> Body {
    let chunk = shared.config.chunk.max(1);
    let delay = shared.config.chunk_delay;
    let guard = BodyGuard::new(shared);
    let stream = futures::stream::unfold((0usize, data, guard), move |(pos, data, guard)| async move {
        if pos >= data.len() {
            return None;
        }
        if cut.is_some_and(|c| pos >= c) {
            return Some((Err(std::io::Error::other("injected fault")), (data.len(), data, guard)));
        }
        if let Some(d) = delay {
            tokio::time::sleep(d).await;
        }
        let mut end = (pos + chunk).min(data.len());
        if let Some(cut) = cut {
            end = end.min(cut);
        }
        let piece = data.slice(pos..end);
        Some((Ok::<_, std::io::Error>(piece), (end, data, guard)))
    });
    Body::from_stream(stream)
}

async fn serve(State(shared): State<Arc<Shared>>, Path(name): Path<String>, headers: HeaderMap) -> Result<Response, Infallible> {
    let counters = &shared.counters;
    counters.requests.fetch_add(1, Ordering::SeqCst);
    let Some(data) = shared.files.get(&name).cloned() else {
        return Ok(Response::builder()
            .status(StatusCode::NOT_FOUND)
            .body(Body::empty())
            .expect("static response"));
    };
    let len = data.len() as u64;
    let honour_ranges = shared.config.mode != Mode::NoRanges;
    let range = headers.get(header::RANGE).and_then(|v| v.to_str().ok());
    if range.is_some() {
        counters.range_requests.fetch_add(1, Ordering::SeqCst);
    }

    let (status, slice, content_range) = match range.filter(|_| honour_ranges) {
        Some(value) => match parse_range(value, len) {
            Some((a, b)) => (
                StatusCode::PARTIAL_CONTENT,
                data.slice(a as usize..=b as usize),
                Some(format!("bytes {a}-{b}/{len}")),
            ),
            None => {
                return Ok(Response::builder()
                    .status(StatusCode::RANGE_NOT_SATISFIABLE)
                    .header(header::CONTENT_RANGE, format!("bytes */{len}"))
                    .body(Body::empty())
                    .expect("static response"))
            }
        },
        None => (StatusCode::OK, data, None),
    };

    let cut = match shared.config.mode {
        Mode::Faulty { failures } if !slice.is_empty() => {
            let mut seen = counters.failures.lock().expect("fault table");
            let n = seen.entry(name).or_insert(0);
            (*n < failures).then(|| {
                *n += 1;
                slice.len() / 2
            })
        }
        _ => None,
    };

    let mut resp = Response::builder()
        .status(status)
        .header(header::CONTENT_LENGTH, slice.len())
        .header(header::CONTENT_TYPE, "application/octet-stream");
    if honour_ranges {
        resp = resp.header(header::ACCEPT_RANGES, "bytes");
    }
    if let Some(cr) = content_range {
        resp = resp.header(header::CONTENT_RANGE, cr);
    }
    Ok(resp.body(body(shared.clone(), slice, cut)).expect("valid response"))
}

/// Deterministic pseudo-random bytes.
pub fn random_bytes(seed: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut out);
    out
}

/// `n` files of `size` bytes named `f000.bin`, `f001.bin`, ...
pub fn uniform_corpus(seed: u64, n: usize, size: usize) -> Vec<(String, Vec<u8>)> {
    (0..n)
        .map(|i| (format!("f{i:03}.bin"), random_bytes(seed.wrapping_add(i as u64), size)))
        .collect()
}

/// `n` files cycling through small (2-20 KB), medium (50-200 KB) and large
/// (0.5-1 MB) sizes.
pub fn mixed_corpus(seed: u64, n: usize) -> Vec<(String, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let size = match i % 3 {
                0 => rng.gen_range(2_000..20_000),
                1 => rng.gen_range(50_000..200_000),
                _ => rng.gen_range(500_000..1_000_000),
            };
            (format!("m{i:03}.bin"), random_bytes(rng.next_u64(), size))
        })
        .collect()
}
