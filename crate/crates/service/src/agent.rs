//! Device-side agent: resolves settings locally, runs the transfer and
//! reports logs back to the server.
//!
//! The agent contacts the server at most three ways: a conditional model
//! download (at most once per refresh interval), a table lookup when the
//! local cache has no entry for a cluster, and the log upload after the
//! transfer. Nothing is analysed remotely while files are moving.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fasthla_core::broker::{
    detect_perf_drop, log_flush, resolve_params, schedule_mixed, Conditions, FlushError, LogBuffer,
    NetConditionKey, ParamCache, ParamSource, TransferRequest, CACHE_CAPACITY, LOG_BUFFER_CAPACITY,
};
use fasthla_core::cluster::{cluster_files, DEFAULT_FILE_THRESHOLD_DECADES};
use fasthla_core::corelog::{parse_jsonl, to_jsonl, BYTES_PER_100MB};
use fasthla_core::learn::{deserialize, serialize, LearnedModel};
use fasthla_core::optimize::Objective;
use fasthla_core::{DeviceInfo, NetInterface, ParamSetting, PowerTrace};
use fasthla_netio::{content_length, emit_log, execute_with, request, EngineOptions, Probe};
use serde::Serialize;
use url::Url;

use crate::exit::{ExitClass, Failure};
use crate::pipeline::TableRow;

const MODEL_FILE: &str = "model.bin";
const MODEL_CHECKED_FILE: &str = "model.checked";
const CACHE_FILE: &str = "cache.jsonl";
const PENDING_FILE: &str = "pending.jsonl";

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub server: Option<Url>,
    pub dest: PathBuf,
    /// Model, cache and unsent logs live here.
    pub state_dir: PathBuf,
    /// Total connection budget.
    pub limit: u32,
    pub net_if: NetInterface,
    /// Link bandwidth estimate, Mbps.
    pub bw: f64,
    pub device: DeviceInfo,
    /// Minimum spacing of model downloads.
    pub model_refresh: Duration,
    pub io_timeout: Duration,
    /// Power readings taken during the transfer, `t,watts` per line.
    pub power_trace: Option<PathBuf>,
    /// Base power for `power_trace`, W.
    pub p_base: f64,
}

impl AgentConfig {
    pub fn new(dest: PathBuf) -> Self {
        AgentConfig {
            server: None,
            state_dir: dest.join(".fasthla"),
            dest,
            limit: fasthla_core::broker::DEFAULT_USER_LIMIT,
            net_if: NetInterface::Wifi,
            bw: 100.0,
            device: DeviceInfo {
                model: "generic".into(),
                os: std::env::consts::OS.into(),
                cpu_class: 2,
                mem_bytes: 4 << 30,
                wifi_std: "ac".into(),
            },
            model_refresh: Duration::from_secs(3600),
            io_timeout: Duration::from_secs(30),
            power_trace: None,
            p_base: 0.0,
        }
    }
}

/// One size class of the executed plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub files: usize,
    pub mean_size: f64,
    pub theta: ParamSetting,
    pub cc: u32,
    pub source: ParamSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferSummary {
    pub files: usize,
    pub completed: usize,
    pub bytes: u64,
    pub wall_time: f64,
    /// Mbps
    pub throughput: f64,
    pub plan: Vec<PlanSummary>,
    pub model_version: Option<u32>,
    pub model_downloaded: bool,
    pub logs_uploaded: usize,
    pub logs_pending: usize,
    pub drop_reported: bool,
    pub errors: Vec<String>,
}

impl TransferSummary {
    pub fn all_completed(&self) -> bool {
        self.completed == self.files
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(ExitClass::Io, format!("{}: {e}", path.display()))
}

fn now_epoch() -> i64 {
    chrono::Utc::now().timestamp()
}

/// Returns the stored model, refreshing it from the server when the last
/// check is older than the refresh interval. Server problems are logged and
/// the stored model is kept.
pub async fn sync_model(cfg: &AgentConfig) -> (Option<LearnedModel>, bool) {
    let path = cfg.state_dir.join(MODEL_FILE);
    let stored = std::fs::read(&path).ok().and_then(|b| deserialize(&b).ok());
    let Some(server) = &cfg.server else {
        return (stored, false);
    };
    let checked = cfg.state_dir.join(MODEL_CHECKED_FILE);
    let last: Option<i64> = std::fs::read_to_string(&checked).ok().and_then(|s| s.trim().parse().ok());
    if last.is_some_and(|t| now_epoch() - t < cfg.model_refresh.as_secs() as i64) {
        return (stored, false);
    }
    let Ok(url) = server.join("v1/model") else {
        return (stored, false);
    };
    let etag = stored.as_ref().map(|m| format!("\"{}\"", m.version()));
    let headers: Vec<(&str, &str)> = etag.iter().map(|e| ("If-None-Match", e.as_str())).collect();
    let reply = match request("GET", &url, &headers, &[], cfg.io_timeout).await {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!("model check failed: {e}");
            return (stored, false);
        }
    };
    std::fs::write(&checked, now_epoch().to_string()).ok();
    match reply.status {
        200 => match deserialize(&reply.body) {
            Ok(model) => {
                if let Err(e) = std::fs::write(&path, serialize(&model)) {
                    tracing::warn!("storing model: {e}");
                }
                (Some(model), true)
            }
            Err(e) => {
                tracing::warn!("server sent an unusable model: {e}");
                (stored, false)
            }
        },
        304 | 404 => (stored, false),
        s => {
            tracing::warn!("model check answered {s}");
            (stored, false)
        }
    }
}

/// Sizes of `urls` from HEAD requests, all at once.
pub async fn probe_sizes(urls: &[String], io_timeout: Duration) -> Result<Vec<(String, u64)>, Failure> {
    let parsed: Vec<Url> = urls
        .iter()
        .map(|u| Url::parse(u).map_err(|e| Failure::new(ExitClass::Usage, format!("bad URL `{u}`: {e}"))))
        .collect::<Result<_, _>>()?;
    let sizes = futures::future::join_all(parsed.iter().map(|u| content_length(u, io_timeout))).await;
    urls.iter()
        .zip(sizes)
        .map(|(u, s)| match s {
            Ok(Some(n)) if n > 0 => Ok((u.clone(), n)),
            Ok(_) => Err(Failure::new(ExitClass::Network, format!("{u}: size unknown or zero"))),
            Err(e) => Err(Failure::new(ExitClass::Network, format!("{u}: {e}"))),
        })
        .collect()
}

/// Round-trip estimate, ms: the fastest of three TCP connects to the host
/// of `url`.
pub async fn measure_rtt(url: &str, io_timeout: Duration) -> Option<f64> {
    let u = Url::parse(url).ok()?;
    let addr = format!("{}:{}", u.host_str()?, u.port_or_known_default()?);
    let mut best: Option<f64> = None;
    for _ in 0..3 {
        let t = Instant::now();
        if let Ok(Ok(_)) = tokio::time::timeout(io_timeout, tokio::net::TcpStream::connect(&addr)).await {
            let ms = t.elapsed().as_secs_f64() * 1e3;
            best = Some(best.map_or(ms, |b| b.min(ms)));
        }
    }
    best
}

/// Asks the server's table for `key` and stores the answer in `cache`.
async fn seed_cache(server: &Url, key: &NetConditionKey, cache: &ParamCache, io_timeout: Duration) -> Option<TableRow> {
    let mut url = server.join("v1/params").ok()?;
    url.query_pairs_mut().append_pair("key", &key.to_string());
    let reply = request("GET", &url, &[], &[], io_timeout).await.ok()?;
    if reply.status != 200 {
        return None;
    }
    let row: TableRow = serde_json::from_slice(&reply.body).ok()?;
    cache.record(key.clone(), row.theta, row.objective, now_epoch());
    Some(row)
}

fn read_power_trace(path: &Path, p_base: f64) -> Result<PowerTrace, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<f64>().ok());
        let mut parts = line.split(',');
        match (parse(parts.next()), parse(parts.next())) {
            (Some(t), Some(w)) => pairs.push((t, w)),
            _ => return Err(Failure::new(ExitClass::Parse, format!("{}:{}: expected `t,watts`", path.display(), i + 1))),
        }
    }
    PowerTrace::from_pairs(&pairs, p_base).map_err(|e| Failure::new(ExitClass::Parse, format!("{}: {e}", path.display())))
}

fn load_pending(path: &Path) -> LogBuffer {
    let buffer = LogBuffer::new(LOG_BUFFER_CAPACITY);
    if let Ok(text) = std::fs::read_to_string(path) {
        for log in parse_jsonl(&text).logs {
            buffer.push(log);
        }
    }
    buffer
}

/// Uploads buffered logs; whatever is not delivered stays buffered.
async fn upload(server: &Url, buffer: LogBuffer, io_timeout: Duration) -> (LogBuffer, Result<usize, FlushError>) {
    let Ok(url) = server.join("v1/logs") else {
        return (buffer, Ok(0));
    };
    let handle = tokio::runtime::Handle::current();
    tokio::task::spawn_blocking(move || {
        let mut send = |body: &str| -> Result<(), String> {
            let reply = handle
                .block_on(request("POST", &url, &[("Content-Type", "application/x-ndjson")], body.as_bytes(), io_timeout))
                .map_err(|e| e.to_string())?;
            match reply.status {
                200 => Ok(()),
                s => Err(format!("server answered {s}")),
            }
        };
        let result = log_flush(&buffer, &mut send);
        (buffer, result)
    })
    .await
    .expect("upload task panicked")
}

/// Runs one transfer of `urls` end to end.
pub async fn transfer(cfg: &AgentConfig, urls: &[String]) -> Result<TransferSummary, Failure> {
    if urls.is_empty() {
        return Err(Failure::new(ExitClass::Usage, "no URLs given"));
    }
    if cfg.limit == 0 {
        return Err(Failure::new(ExitClass::Usage, "--limit must be at least 1"));
    }
    std::fs::create_dir_all(&cfg.state_dir).map_err(|e| io_failure(&cfg.state_dir, e))?;
    let power = cfg.power_trace.as_deref().map(|p| read_power_trace(p, cfg.p_base)).transpose()?;

    let dataset = probe_sizes(urls, cfg.io_timeout).await?;
    let req = TransferRequest::new(dataset, cfg.limit);
    let rtt = measure_rtt(&urls[0], cfg.io_timeout).await.unwrap_or(0.0);
    let cond = Conditions {
        net_if: cfg.net_if,
        rtt,
        bw: cfg.bw,
        device: cfg.device.clone(),
    };

    let (model, model_downloaded) = sync_model(cfg).await;
    let cache_path = cfg.state_dir.join(CACHE_FILE);
    let cache = ParamCache::load(&cache_path, CACHE_CAPACITY).map_err(|e| io_failure(&cache_path, e))?;

    // Seed cache misses from the server table before anything moves.
    let mut predicted_th = None;
    if let Some(server) = &cfg.server {
        let clusters = cluster_files(&req.dataset, DEFAULT_FILE_THRESHOLD_DECADES)
            .map_err(|e| Failure::new(ExitClass::Usage, e))?;
        for c in &clusters {
            let key = NetConditionKey::derive(&TransferRequest::new(c.files.clone(), cfg.limit), &cond);
            if cache.get(&key).is_none() {
                if let Some(row) = seed_cache(server, &key, &cache, cfg.io_timeout).await {
                    if clusters.len() == 1 {
                        predicted_th = Some(row.th);
                    }
                }
            }
        }
    }

    let mut sources = Vec::new();
    let plan = schedule_mixed(&req, DEFAULT_FILE_THRESHOLD_DECADES, |r| {
        let (theta, source) = resolve_params(r, &cond, &cache, model.as_ref());
        sources.push(source);
        theta
    })
    .map_err(|e| Failure::new(ExitClass::Usage, e))?;

    std::fs::create_dir_all(&cfg.dest).map_err(|e| io_failure(&cfg.dest, e))?;
    let opts = EngineOptions {
        io_timeout: cfg.io_timeout,
        ..EngineOptions::default()
    };
    let report = execute_with(&plan, &cfg.dest, opts)
        .await
        .map_err(|e| io_failure(&cfg.dest, e))?;

    let probe = Probe {
        rtt,
        bw: cfg.bw,
        tcp_buffer: 0.0,
        net_if: cfg.net_if,
    };
    let log = emit_log(&report, &req, &probe, &cfg.device, power.as_ref(), now_epoch());

    if plan.entries.len() == 1 && report.all_completed() {
        if let (Some(energy), true) = (log.energy, log.throughput > 0.0) {
            let e100 = energy * BYTES_PER_100MB / log.total_bytes().max(1.0);
            let key = NetConditionKey::derive(&req, &cond);
            cache.record(key, log.params, Objective::Efficiency.score(log.throughput, e100), log.timestamp);
        }
    }
    cache.save(&cache_path).map_err(|e| io_failure(&cache_path, e))?;

    let mut drop_reported = false;
    if let (Some(server), Some(th)) = (&cfg.server, predicted_th) {
        if detect_perf_drop(th, &report.samples).unwrap_or(false) {
            if let Ok(url) = server.join("v1/perf-drop") {
                drop_reported = request("POST", &url, &[], &[], cfg.io_timeout)
                    .await
                    .is_ok_and(|r| r.status == 202);
            }
        }
    }

    let pending_path = cfg.state_dir.join(PENDING_FILE);
    let buffer = load_pending(&pending_path);
    buffer.push(log);
    let (buffer, uploaded) = match &cfg.server {
        Some(server) => upload(server, buffer, cfg.io_timeout).await,
        None => (buffer, Ok(0)),
    };
    let logs_uploaded = match uploaded {
        Ok(n) => n,
        Err(e) => {
            tracing::warn!("{e}");
            e.sent
        }
    };
    std::fs::write(&pending_path, to_jsonl(&buffer.snapshot())).map_err(|e| io_failure(&pending_path, e))?;

    Ok(TransferSummary {
        files: report.files.len(),
        completed: report.files.iter().filter(|f| f.completed()).count(),
        bytes: report.total_bytes(),
        wall_time: report.wall_time,
        throughput: report.throughput,
        plan: plan
            .entries
            .iter()
            .zip(sources)
            .map(|(e, source)| PlanSummary {
                files: e.cluster.files.len(),
                mean_size: e.cluster.mean_size,
                theta: e.theta,
                cc: e.cc,
                source,
            })
            .collect(),
        model_version: model.as_ref().map(LearnedModel::version),
        model_downloaded,
        logs_uploaded,
        logs_pending: buffer.len(),
        drop_reported,
        errors: report.errors,
    })
}
