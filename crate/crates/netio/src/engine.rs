use std::collections::HashSet;
use std::io::SeekFrom;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fasthla_core::broker::SchedulePlan;
use fasthla_core::ParamSetting;
use sha2::{Digest, Sha256};
use tokio::fs::{File, OpenOptions};
use tokio::io::{AsyncReadExt, AsyncSeekExt};
use tokio::sync::{watch, Semaphore};
use tokio::task::JoinSet;
use url::Url;

use crate::client::{open, FetchError, Response};
use crate::ranges::split_ranges;
use crate::report::{FileReport, TransferReport};

/// Extra attempts per byte range after the first one fails.
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub retries: u32,
    /// Limit for connecting and for each socket read.
    pub io_timeout: Duration,
    pub sample_interval: Duration,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            retries: DEFAULT_RETRIES,
            io_timeout: Duration::from_secs(30),
            sample_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Default)]
struct Meters {
    bytes: AtomicU64,
    open: AtomicUsize,
    peak_open: AtomicUsize,
    files: AtomicUsize,
    peak_files: AtomicUsize,
}

/// Decrements a gauge when dropped.
struct Gauge<'a>(&'a AtomicUsize);

impl<'a> Gauge<'a> {
    fn enter(current: &'a AtomicUsize, peak: &AtomicUsize) -> Self {
        let now = current.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        Gauge(current)
    }
}

impl Drop for Gauge<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

struct Job {
    index: usize,
    url: String,
    size: u64,
    p: u32,
    bs: usize,
    path: PathBuf,
    name: String,
}

/// Runs `plan` with default options. See [`execute_with`].
pub async fn execute(plan: &SchedulePlan, dest: &Path) -> std::io::Result<TransferReport> {
    execute_with(plan, dest, EngineOptions::default()).await
}

/// Downloads every file of `plan` into `dest`.
///
/// Files of one plan entry share `entry.cc` slots; entries run side by side.
/// A file's outcome never affects other files. Fails only when `dest`
/// cannot be created.
pub async fn execute_with(plan: &SchedulePlan, dest: &Path, opts: EngineOptions) -> std::io::Result<TransferReport> {
    tokio::fs::create_dir_all(dest).await?;
    if plan.file_count() == 0 {
        return Ok(TransferReport::empty());
    }

    let meters = Arc::new(Meters::default());
    let started = Instant::now();
    let (stop_tx, stop_rx) = watch::channel(false);
    let sampler = tokio::spawn(sample(meters.clone(), started, opts.sample_interval, stop_rx));

    let mut used_names = HashSet::new();
    let mut tasks = JoinSet::new();
    let mut index = 0;
    for entry in &plan.entries {
        let slots = Arc::new(Semaphore::new(entry.cc.max(1) as usize));
        for (url, size) in &entry.cluster.files {
            let name = unique_name(url, &mut used_names);
            let job = Job {
                index,
                url: url.clone(),
                size: *size,
                p: entry.theta.p(),
                bs: entry.theta.bs() as usize,
                path: dest.join(&name),
                name,
            };
            index += 1;
            let (slots, meters) = (slots.clone(), meters.clone());
            tasks.spawn(async move {
                let _permit = slots.acquire_owned().await.expect("semaphore open");
                let _in_flight = Gauge::enter(&meters.files, &meters.peak_files);
                let i = job.index;
                (i, transfer_file(job, &meters, opts).await)
            });
        }
    }

    let mut files: Vec<Option<FileReport>> = vec![None; index];
    while let Some(done) = tasks.join_next().await {
        let (i, report) = done.expect("transfer task panicked");
        files[i] = Some(report);
    }
    let wall_time = started.elapsed().as_secs_f64();
    stop_tx.send(true).ok();
    let samples = sampler.await.expect("sampler task panicked");

    let files: Vec<FileReport> = files.into_iter().map(|f| f.expect("every file reported")).collect();
    let total: u64 = files.iter().map(|f| f.bytes).sum();
    let errors = files
        .iter()
        .filter_map(|f| f.error.as_ref().map(|e| format!("{}: {e}", f.url)))
        .collect();
    let theta = plan
        .entries
        .iter()
        .max_by_key(|e| e.cluster.total_bytes())
        .map(|e| {
            // Scaled concurrency rounded down to a lattice level.
            let cc = 1 << (31 - e.cc.max(1).leading_zeros());
            ParamSetting::new(cc.min(e.theta.cc()), e.theta.p(), e.theta.bs()).unwrap_or(e.theta)
        });
    Ok(TransferReport {
        files,
        throughput: if wall_time > 0.0 { 8.0 * total as f64 / wall_time / 1e6 } else { 0.0 },
        wall_time,
        samples,
        theta,
        errors,
        peak_connections: meters.peak_open.load(Ordering::SeqCst),
        peak_files: meters.peak_files.load(Ordering::SeqCst),
    })
}

/// Throughput over each sampling interval until told to stop, plus the
/// final partial interval.
async fn sample(meters: Arc<Meters>, started: Instant, every: Duration, mut stop: watch::Receiver<bool>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut last_bytes = 0;
    let mut last_t = 0.0;
    let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + every, every);
    loop {
        let finished = tokio::select! {
            _ = tick.tick() => false,
            _ = stop.changed() => true,
        };
        let t = started.elapsed().as_secs_f64();
        let bytes = meters.bytes.load(Ordering::Relaxed);
        if t > last_t {
            out.push((t, 8.0 * (bytes - last_bytes) as f64 / (t - last_t) / 1e6));
        }
        last_bytes = bytes;
        last_t = t;
        if finished {
            return out;
        }
    }
}

/// Last path segment of `url`, made unique within one transfer.
fn unique_name(url: &str, used: &mut HashSet<String>) -> String {
    let base = Url::parse(url)
        .ok()
        .and_then(|u| u.path_segments().and_then(|s| s.filter(|x| !x.is_empty()).last().map(str::to_owned)))
        .unwrap_or_else(|| "index".to_owned());
    let base: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    let mut name = base.clone();
    let mut n = 1;
    while !used.insert(name.clone()) {
        name = format!("{base}.{n}");
        n += 1;
    }
    name
}

async fn transfer_file(job: Job, meters: &Meters, opts: EngineOptions) -> FileReport {
    let started = Instant::now();
    let mut report = FileReport {
        url: job.url.clone(),
        name: job.name.clone(),
        bytes: 0,
        duration: 0.0,
        checksum: None,
        streams: job.p,
        range_fallback: false,
        retries: 0,
        error: None,
    };
    let result = run_file(&job, meters, opts, &mut report).await;
    report.duration = started.elapsed().as_secs_f64();
    match result {
        Ok(()) => match checksum(&job.path, job.bs).await {
            Ok((sum, len)) => {
                report.checksum = Some(sum);
                report.bytes = len;
            }
            Err(e) => report.error = Some(format!("checksum: {e}")),
        },
        Err(e) => report.error = Some(e),
    }
    report
}

async fn run_file(job: &Job, meters: &Meters, opts: EngineOptions, report: &mut FileReport) -> Result<(), String> {
    let url = Url::parse(&job.url).map_err(|e| format!("bad URL: {e}"))?;
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&job.path)
        .await
        .map_err(|e| format!("create {}: {e}", job.path.display()))?;
    file.set_len(job.size).await.map_err(|e| format!("preallocate: {e}"))?;
    drop(file);

    let ranges = split_ranges(job.size, job.p);
    if ranges.len() <= 1 {
        report.streams = 1;
        let retries = whole_file(&url, job, meters, opts).await?;
        report.retries = retries;
        return Ok(());
    }
    report.streams = ranges.len() as u32;

    // The first range doubles as the probe for range support; the rest start
    // once it answered 206, so a server that ignores ranges gets one
    // connection.
    let conn = Gauge::enter(&meters.open, &meters.peak_open);
    let first = match open("GET", &url, Some((ranges[0].0, ranges[0].0 + ranges[0].1 - 1)), job.bs, opts.io_timeout).await {
        Ok(resp) if resp.status == 200 => {
            report.range_fallback = true;
            report.streams = 1;
            let written = write_whole(resp, job, meters).await;
            drop(conn);
            report.retries = match written {
                Ok(()) => 0,
                Err(_) => 1 + whole_file(&url, job, meters, opts).await?,
            };
            return Ok(());
        }
        Ok(resp) if resp.status == 206 => Some((resp, conn)),
        Ok(resp) => return Err(FetchError::Status(resp.status).to_string()),
        Err(_) => {
            drop(conn);
            report.retries += 1;
            None
        }
    };
    let mut first = first;
    let results = futures::future::join_all(
        ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| fetch_range(&url, job, r, if i == 0 { first.take() } else { None }, meters, opts)),
    )
    .await;
    let mut first_error = None;
    for r in results {
        match r {
            Ok(retries) => report.retries += retries,
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

/// Writes a 200 body from offset 0 and trims the file to what arrived.
async fn write_whole(resp: Response, job: &Job, meters: &Meters) -> Result<(), String> {
    let mut out = open_at(&job.path, 0).await?;
    let n = resp.copy_to(&mut out, job.bs, &meters.bytes).await.map_err(|e| e.to_string())?;
    out.set_len(n).await.map_err(|e| format!("truncate: {e}"))?;
    Ok(())
}

async fn open_at(path: &Path, offset: u64) -> Result<File, String> {
    let mut f = OpenOptions::new()
        .write(true)
        .open(path)
        .await
        .map_err(|e| format!("open {}: {e}", path.display()))?;
    f.seek(SeekFrom::Start(offset)).await.map_err(|e| format!("seek: {e}"))?;
    Ok(f)
}

/// Plain GET of the whole file, restarted from scratch on failure.
async fn whole_file(url: &Url, job: &Job, meters: &Meters, opts: EngineOptions) -> Result<u32, String> {
    let mut last = String::new();
    for attempt in 0..=opts.retries {
        let _conn = Gauge::enter(&meters.open, &meters.peak_open);
        match open("GET", url, None, job.bs, opts.io_timeout).await {
            Ok(r) if r.status == 200 => match write_whole(r, job, meters).await {
                Ok(()) => return Ok(attempt),
                Err(e) => last = e,
            },
            Ok(r) => return Err(FetchError::Status(r.status).to_string()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(format!("gave up after {} retries: {last}", opts.retries))
}

/// Fetches `[offset, offset + len)` into place, resuming after failures.
/// `initial` is an already opened 206 response for the first attempt.
async fn fetch_range(
    url: &Url,
    job: &Job,
    (offset, len): (u64, u64),
    mut initial: Option<(Response, Gauge<'_>)>,
    meters: &Meters,
    opts: EngineOptions,
) -> Result<u32, String> {
    let end = offset + len - 1;
    let mut got = 0;
    let mut last = String::new();
    for attempt in 0..=opts.retries {
        let start = offset + got;
        let (resp, _conn) = match initial.take() {
            Some(opened) => opened,
            None => {
                let conn = Gauge::enter(&meters.open, &meters.peak_open);
                match open("GET", url, Some((start, end)), job.bs, opts.io_timeout).await {
                    Ok(r) => (r, conn),
                    Err(e) => {
                        last = e.to_string();
                        continue;
                    }
                }
            }
        };
        if resp.status != 206 {
            return Err(format!("range request answered with status {}", resp.status));
        }
        if let Some(total) = resp.total {
            if total != job.size {
                return Err(format!("server reports {total} bytes, expected {}", job.size));
            }
        }
        let want = end + 1 - start;
        let mut out = open_at(&job.path, start).await?;
        let mut limited = Limit { inner: &mut out, left: want };
        match resp.copy_to(&mut limited, job.bs, &meters.bytes).await {
            Ok(n) if n == want => return Ok(attempt),
            Ok(n) => {
                got += n;
                last = format!("short range body ({n} of {want} bytes)");
            }
            Err(FetchError::Interrupted { received, source }) => {
                got += received;
                last = source.to_string();
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Err(format!("range at {offset}: gave up after {} retries: {last}", opts.retries))
}

/// Writer that refuses to go past the end of its range.
struct Limit<'a> {
    inner: &'a mut File,
    left: u64,
}

impl tokio::io::AsyncWrite for Limit<'_> {
    fn poll_write(
        mut self: std::pin::Pin<&mut Self>,
        cx: &mut std::task::Context<'_>,
        buf: &[u8],
    ) -> std::task::Poll<std::io::Result<usize>> {
        if buf.len() as u64 > self.left {
            return std::task::Poll::Ready(Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "server sent more than the requested range",
            )));
        }
        let this = &mut *self;
        match std::pin::Pin::new(&mut *this.inner).poll_write(cx, buf) {
            std::task::Poll::Ready(Ok(n)) => {
                this.left -= n as u64;
                std::task::Poll::Ready(Ok(n))
            }
            other => other,
        }
    }

    fn poll_flush(mut self: std::pin::Pin<&mut Self>, cx: &mut std::task::Context<'_>) -> std::task::Poll<std::io::Result<()>> {
        std::pin::Pin::new(&mut *self.inner).poll_flush(cx)
    }

    fn poll_shutdown(mut self: std::pin::Pin<&mut Self>, cx: &mut std::task::Context<'_>) -> std::task::Poll<std::io::Result<()>> {
        std::pin::Pin::new(&mut *self.inner).poll_shutdown(cx)
    }
}

/// Hex SHA-256 and length of the file at `path`, read in `bs` chunks.
async fn checksum(path: &Path, bs: usize) -> std::io::Result<(String, u64)> {
    let mut f = File::open(path).await?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; bs.max(4096)];
    let mut len = 0;
    loop {
        let n = f.read(&mut buf).await?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        len += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut used = HashSet::new();
        assert_eq!(unique_name("http://h/a/b.bin", &mut used), "b.bin");
        assert_eq!(unique_name("http://x/b.bin", &mut used), "b.bin.1");
        assert_eq!(unique_name("http://h/", &mut used), "index");
        assert_eq!(unique_name("http://h/we%20ird?x", &mut used), "we_20ird");
    }
}
