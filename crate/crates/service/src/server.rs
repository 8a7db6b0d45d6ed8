//! The analysis server: log ingestion, model distribution and scheduled
//! pipeline runs.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fasthla_core::broker::NetConditionKey;
use fasthla_core::config::{ConfigError, FlatConfig};
use fasthla_core::corelog::{parse_jsonl, to_jsonl};
use fasthla_core::learn::{deserialize, serialize, LearnedModel};
use fasthla_core::optimize::Objective;
use serde::Serialize;
use tokio::io::AsyncWriteExt;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::exit::{ExitClass, Failure};
use crate::pipeline::{run_pipeline, PipelineConfig, TableRow};

pub const DEFAULT_PIPELINE_INTERVAL: Duration = Duration::from_secs(3600);
pub const DEFAULT_DROP_DEBOUNCE: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_BODY: usize = 10_000_000;

const MODEL_FILE: &str = "model.bin";
const TABLE_FILE: &str = "table.json";
const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Holds `logs/`, the published model and the cluster table.
    pub data_dir: PathBuf,
    pub pipeline_interval: Duration,
    /// Minimum spacing of drop-triggered runs.
    pub drop_debounce: Duration,
    pub max_body_bytes: usize,
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("hla-data"),
            pipeline_interval: DEFAULT_PIPELINE_INTERVAL,
            drop_debounce: DEFAULT_DROP_DEBOUNCE,
            max_body_bytes: DEFAULT_MAX_BODY,
            pipeline: PipelineConfig::default(),
        }
    }
}

const CONFIG_KEYS: [&str; 11] = [
    "listen",
    "data_dir",
    "pipeline_interval_s",
    "drop_debounce_s",
    "max_body_bytes",
    "cluster_threshold",
    "objective",
    "stream_cap",
    "seed",
    "epochs",
    "learning_rate",
];

impl ServiceConfig {
    pub fn from_config(cfg: &FlatConfig) -> Result<Self, ConfigError> {
        cfg.deny_unknown(&CONFIG_KEYS)?;
        let mut out = ServiceConfig::default();
        cfg.set("listen", &mut out.listen)?;
        if let Some(dir) = cfg.get_str("data_dir") {
            out.data_dir = PathBuf::from(dir);
        }
        let secs = |key: &str, slot: &mut Duration| -> Result<(), ConfigError> {
            if let Some(s) = cfg.get::<f64>(key)? {
                if !(s.is_finite() && s > 0.0) {
                    return Err(ConfigError::Value {
                        key: key.into(),
                        value: s.to_string(),
                    });
                }
                *slot = Duration::from_secs_f64(s);
            }
            Ok(())
        };
        secs("pipeline_interval_s", &mut out.pipeline_interval)?;
        secs("drop_debounce_s", &mut out.drop_debounce)?;
        cfg.set("max_body_bytes", &mut out.max_body_bytes)?;
        let p = &mut out.pipeline;
        cfg.set("cluster_threshold", &mut p.log_threshold)?;
        cfg.set::<Objective>("objective", &mut p.optimizer.objective)?;
        if let Some(cap) = cfg.get::<u32>("stream_cap")? {
            p.optimizer.stream_cap = Some(cap);
        }
        cfg.set("seed", &mut p.seed)?;
        cfg.set("epochs", &mut p.train.epochs)?;
        cfg.set("learning_rate", &mut p.train.learning_rate)?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(ExitClass::Config, format!("{}: {e}", path.display())))?;
        let flat: FlatConfig = text.parse().map_err(|e| Failure::new(ExitClass::Config, e))?;
        ServiceConfig::from_config(&flat).map_err(|e| Failure::new(ExitClass::Config, e))
    }
}

/// Request counters, as reported by `GET /v1/status`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ServiceStats {
    pub model_version: Option<u32>,
    pub model_requests: u64,
    pub model_not_modified: u64,
    pub logs_accepted: u64,
    pub logs_rejected: u64,
    pub drop_reports: u64,
    pub pipeline_runs: u64,
}

#[derive(Default)]
struct Counters {
    model_requests: AtomicU64,
    model_not_modified: AtomicU64,
    logs_accepted: AtomicU64,
    logs_rejected: AtomicU64,
    drop_reports: AtomicU64,
    pipeline_runs: AtomicU64,
}

struct Published {
    version: u32,
    etag: String,
    blob: Bytes,
    model: LearnedModel,
}

impl Published {
    fn new(model: LearnedModel) -> Self {
        Published {
            version: model.version(),
            etag: format!("\"{}\"", model.version()),
            blob: Bytes::from(serialize(&model)),
            model,
        }
    }
}

/// Shared state behind the HTTP handlers.
pub struct ServiceState {
    cfg: ServiceConfig,
    model: RwLock<Option<Arc<Published>>>,
    table: RwLock<BTreeMap<String, TableRow>>,
    /// Held for the whole of a pipeline run.
    analysis: tokio::sync::Mutex<()>,
    /// Held while appending to the log files.
    append: tokio::sync::Mutex<()>,
    last_drop_run: Mutex<Option<Instant>>,
    counters: Counters,
}

/// What one pipeline run published.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub version: u32,
    pub clusters: usize,
    pub skipped: usize,
    pub usable_logs: usize,
    pub wall_time: f64,
}

impl ServiceState {
    fn open(cfg: ServiceConfig) -> Result<Self, Failure> {
        let io = |e: std::io::Error| Failure::new(ExitClass::Io, format!("{}: {e}", cfg.data_dir.display()));
        std::fs::create_dir_all(cfg.data_dir.join(LOG_DIR)).map_err(io)?;
        let model = match std::fs::read(cfg.data_dir.join(MODEL_FILE)) {
            Ok(bytes) => Some(Arc::new(Published::new(
                deserialize(&bytes).map_err(|e| Failure::new(ExitClass::Parse, format!("stored model: {e}")))?,
            ))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io(e)),
        };
        let table = match std::fs::read_to_string(cfg.data_dir.join(TABLE_FILE)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Failure::new(ExitClass::Parse, format!("stored table: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io(e)),
        };
        Ok(ServiceState {
            cfg,
            model: RwLock::new(model),
            table: RwLock::new(table),
            analysis: tokio::sync::Mutex::new(()),
            append: tokio::sync::Mutex::new(()),
            last_drop_run: Mutex::new(None),
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn published(&self) -> Option<Arc<Published>> {
        self.model.read().expect("model lock").clone()
    }

    pub fn model_version(&self) -> Option<u32> {
        self.published().map(|p| p.version)
    }

    pub fn stats(&self) -> ServiceStats {
        let c = &self.counters;
        ServiceStats {
            model_version: self.model_version(),
            model_requests: c.model_requests.load(Ordering::Relaxed),
            model_not_modified: c.model_not_modified.load(Ordering::Relaxed),
            logs_accepted: c.logs_accepted.load(Ordering::Relaxed),
            logs_rejected: c.logs_rejected.load(Ordering::Relaxed),
            drop_reports: c.drop_reports.load(Ordering::Relaxed),
            pipeline_runs: c.pipeline_runs.load(Ordering::Relaxed),
        }
    }

    fn log_dir(&self) -> PathBuf {
        self.cfg.data_dir.join(LOG_DIR)
    }

    async fn append_logs(&self, jsonl: &str) -> std::io::Result<()> {
        let _guard = self.append.lock().await;
        let name = format!("{}.jsonl", chrono::Utc::now().format("%Y-%m-%d"));
        let mut f = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_dir().join(name))
            .await?;
        f.write_all(jsonl.as_bytes()).await?;
        f.flush().await
    }

    /// Every stored log file, oldest day first, concatenated.
    fn read_logs(&self) -> std::io::Result<String> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(self.log_dir())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut text = String::new();
        for f in files {
            text.push_str(&std::fs::read_to_string(f)?);
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
        }
        Ok(text)
    }

    /// Runs the pipeline over all stored logs with the current model as the
    /// prior and publishes the result. Runs never overlap.
    pub async fn run_analysis(self: &Arc<Self>) -> Result<RunSummary, Failure> {
        let _guard = self.analysis.lock().await;
        let state = self.clone();
        let result = tokio::task::spawn_blocking(move || {
            let text = state.read_logs().map_err(|e| Failure::new(ExitClass::Io, e))?;
            let prior = state.published();
            let r = run_pipeline(&text, prior.as_ref().map(|p| &p.model), &state.cfg.pipeline)?;
            state.store(&r.model, &r.table)?;
            Ok::<_, Failure>(r)
        })
        .await
        .map_err(|e| Failure::new(ExitClass::Io, format!("analysis task: {e}")))??;

        let summary = RunSummary {
            version: result.model.version(),
            clusters: result.table.len(),
            skipped: result.skipped.len(),
            usable_logs: result.usable_logs,
            wall_time: result.wall_time,
        };
        let table = result.table.into_iter().map(|row| (row.key.to_string(), row)).collect();
        *self.table.write().expect("table lock") = table;
        *self.model.write().expect("model lock") = Some(Arc::new(Published::new(result.model)));
        self.counters.pipeline_runs.fetch_add(1, Ordering::Relaxed);
        tracing::info!(version = summary.version, clusters = summary.clusters, logs = summary.usable_logs, "published model");
        Ok(summary)
    }

    fn store(&self, model: &LearnedModel, table: &[TableRow]) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure::new(ExitClass::Io, e);
        let dir = &self.cfg.data_dir;
        write_atomic(&dir.join(MODEL_FILE), &serialize(model)).map_err(io)?;
        let keyed: BTreeMap<String, &TableRow> = table.iter().map(|r| (r.key.to_string(), r)).collect();
        let json = serde_json::to_vec_pretty(&keyed).expect("serializable table");
        write_atomic(&dir.join(TABLE_FILE), &json).map_err(io)
    }

    /// Starts a background run unless one was triggered within the debounce
    /// window. Returns whether a run was started.
    fn trigger_from_drop(self: &Arc<Self>) -> bool {
        {
            let mut last = self.last_drop_run.lock().expect("debounce lock");
            if last.is_some_and(|t| t.elapsed() < self.cfg.drop_debounce) {
                return false;
            }
            *last = Some(Instant::now());
        }
        let state = self.clone();
        tokio::spawn(async move {
            if let Err(e) = state.run_analysis().await {
                tracing::warn!("drop-triggered analysis failed: {e}");
            }
        });
        true
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

#[derive(Serialize)]
struct RejectedLine {
    line: usize,
    error: String,
}

#[derive(Serialize)]
struct IngestReply {
    accepted: usize,
    rejected: usize,
    errors: Vec<RejectedLine>,
}

fn error_json(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn post_logs(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let Ok(text) = std::str::from_utf8(&body) else {
        return error_json(StatusCode::BAD_REQUEST, "body is not UTF-8");
    };
    let batch = parse_jsonl(text);
    if !batch.logs.is_empty() {
        if let Err(e) = state.append_logs(&to_jsonl(&batch.logs)).await {
            tracing::error!("storing logs: {e}");
            return error_json(StatusCode::INTERNAL_SERVER_ERROR, "could not store logs");
        }
    }
    let c = &state.counters;
    c.logs_accepted.fetch_add(batch.logs.len() as u64, Ordering::Relaxed);
    c.logs_rejected.fetch_add(batch.rejected.len() as u64, Ordering::Relaxed);
    Json(IngestReply {
        accepted: batch.logs.len(),
        rejected: batch.rejected.len(),
        errors: batch
            .rejected
            .into_iter()
            .map(|(line, error)| RejectedLine { line, error })
            .collect(),
    })
    .into_response()
}

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(|t| t.trim().trim_start_matches("W/"))
        .any(|t| t == etag || t == "*")
}

async fn get_model(State(state): State<Arc<ServiceState>>, headers: HeaderMap) -> Response {
    state.counters.model_requests.fetch_add(1, Ordering::Relaxed);
    let Some(p) = state.published() else {
        return error_json(StatusCode::NOT_FOUND, "no model published yet");
    };
    if etag_matches(&headers, &p.etag) {
        state.counters.model_not_modified.fetch_add(1, Ordering::Relaxed);
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, p.etag.clone())]).into_response();
    }
    (
        StatusCode::OK,
        [
            (header::ETAG, p.etag.clone()),
            (header::CONTENT_TYPE, "application/octet-stream".to_owned()),
        ],
        p.blob.clone(),
    )
        .into_response()
}

async fn post_drop(State(state): State<Arc<ServiceState>>) -> Response {
    state.counters.drop_reports.fetch_add(1, Ordering::Relaxed);
    let scheduled = state.trigger_from_drop();
    (StatusCode::ACCEPTED, Json(serde_json::json!({ "scheduled": scheduled }))).into_response()
}

async fn get_params(State(state): State<Arc<ServiceState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(raw) = q.get("key") else {
        return error_json(StatusCode::BAD_REQUEST, "missing `key` query parameter");
    };
    let key: NetConditionKey = match raw.parse() {
        Ok(k) => k,
        Err(e) => return error_json(StatusCode::BAD_REQUEST, format!("{e}")),
    };
    match state.table.read().expect("table lock").get(&key.to_string()) {
        Some(row) => Json(row.clone()).into_response(),
        None => error_json(StatusCode::NOT_FOUND, "no entry for key"),
    }
}

async fn get_status(State(state): State<Arc<ServiceState>>) -> Json<ServiceStats> {
    Json(state.stats())
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/logs", post(post_logs))
        .route("/v1/model", get(get_model))
        .route("/v1/perf-drop", post(post_drop))
        .route("/v1/params", get(get_params))
        .route("/v1/status", get(get_status))
        .layer(DefaultBodyLimit::max(state.cfg.max_body_bytes))
        .with_state(state)
}

/// A server bound to its socket, with its periodic analysis task.
pub struct RunningService {
    pub addr: SocketAddr,
    pub state: Arc<ServiceState>,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<()>,
    ticker: JoinHandle<()>,
}

impl RunningService {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops accepting requests and waits for in-flight ones.
    pub async fn shutdown(mut self) {
        self.ticker.abort();
        if let Some(stop) = self.stop.take() {
            stop.send(()).ok();
        }
        (&mut self.server).await.ok();
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        self.ticker.abort();
        self.server.abort();
    }
}

/// Opens the data directory, binds `cfg.listen` and starts serving.
pub async fn start(cfg: ServiceConfig) -> Result<RunningService, Failure> {
    let state = Arc::new(ServiceState::open(cfg)?);
    let listener = tokio::net::TcpListener::bind(state.cfg.listen)
        .await
        .map_err(|e| Failure::new(ExitClass::Network, format!("bind {}: {e}", state.cfg.listen)))?;
    let addr = listener.local_addr().map_err(|e| Failure::new(ExitClass::Network, e))?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        let shutdown = async {
            stopped.await.ok();
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!("server: {e}");
        }
    });
    let ticker = {
        let state = state.clone();
        let every = state.cfg.pipeline_interval;
        tokio::spawn(async move {
            let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + every, every);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                match state.run_analysis().await {
                    Ok(_) => {}
                    Err(f) if f.class == ExitClass::EmptyInput => tracing::debug!("scheduled analysis: no logs yet"),
                    Err(f) => tracing::warn!("scheduled analysis failed: {f}"),
                }
            }
        })
    };
    tracing::info!(%addr, data_dir = %state.cfg.data_dir.display(), "listening");
    Ok(RunningService {
        addr,
        state,
        stop: Some(stop),
        server,
        ticker,
    })
}

/// Serves until interrupted.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Failure> {
    let running = start(cfg).await?;
    tokio::signal::ctrl_c().await.map_err(|e| Failure::new(ExitClass::Io, e))?;
    running.shutdown().await;
    Ok(())
}
