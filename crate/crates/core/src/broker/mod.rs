//! Device-side transfer broker.
//!
//! Parameters are resolved cache first, then from the learned predictor, then
//! from a conservative default. The broker also watches live throughput for
//! sustained drops, splits mixed datasets into size classes under a global
//! connection budget, and buffers logs for upload.

mod buffer;
mod cache;
mod drop;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corelog::{DeviceInfo, NetInterface, ParamSetting};
use crate::learn::{predict, FeatureVector, LearnedModel};

pub use buffer::{log_flush, FlushError, LogBuffer, LogTransport, FLUSH_BATCH, LOG_BUFFER_CAPACITY};
pub use cache::{CacheEntry, CacheError, ParamCache, CACHE_CAPACITY};
pub use drop::{detect_perf_drop, DropError, DROP_FRACTION, DROP_SECONDS};
pub use schedule::{scale_concurrency, schedule_mixed, PlanEntry, ScheduleError, SchedulePlan};

/// Default total connection budget of a request.
pub const DEFAULT_USER_LIMIT: u32 = 32;

/// Setting used when neither cache nor predictor can answer.
pub fn default_params() -> ParamSetting {
    ParamSetting::with_kib(2, 1, 8).expect("valid default")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RttBucket {
    /// Below 50 ms.
    Low,
    /// 50 ms up to 150 ms.
    Medium,
    /// 150 ms up to 400 ms.
    High,
    /// 400 ms and above.
    VeryHigh,
}

impl RttBucket {
    pub fn of(rtt_ms: f64) -> Self {
        if rtt_ms < 50.0 {
            RttBucket::Low
        } else if rtt_ms < 150.0 {
            RttBucket::Medium
        } else if rtt_ms < 400.0 {
            RttBucket::High
        } else {
            RttBucket::VeryHigh
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            RttBucket::Low => "low",
            RttBucket::Medium => "medium",
            RttBucket::High => "high",
            RttBucket::VeryHigh => "very_high",
        }
    }
}

/// Live link measurements and the device they were taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub net_if: NetInterface,
    /// Round-trip time, ms.
    pub rtt: f64,
    /// Bandwidth estimate, Mbps.
    pub bw: f64,
    pub device: DeviceInfo,
}

/// Cache key: a coarse description of the network and the dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NetConditionKey {
    pub net_if: NetInterface,
    /// Bandwidth rounded to the nearest power of two, as its exponent.
    pub bw_log2: i32,
    pub rtt_bucket: RttBucket,
    /// Decade of the mean file size, `floor(log10 bytes)`.
    pub size_class: i32,
    pub device_model: String,
}

impl NetConditionKey {
    pub fn derive(req: &TransferRequest, cond: &Conditions) -> Self {
        let bw_log2 = if cond.bw > 0.0 && cond.bw.is_finite() {
            cond.bw.log2().round() as i32
        } else {
            i32::MIN
        };
        let size_class = if req.avg_file_size >= 1.0 {
            req.avg_file_size.log10().floor() as i32
        } else {
            0
        };
        NetConditionKey {
            net_if: cond.net_if,
            bw_log2,
            rtt_bucket: RttBucket::of(cond.rtt),
            size_class,
            device_model: cond.device.model.clone(),
        }
    }
}

impl fmt::Display for NetConditionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{}",
            self.net_if,
            self.bw_log2,
            self.rtt_bucket.as_str(),
            self.size_class,
            self.device_model
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed condition key `{0}`")]
pub struct KeyParseError(pub String);

impl FromStr for NetConditionKey {
    type Err = KeyParseError;

    /// Parses `net_if:bw_log2:rtt_bucket:size_class:device_model`. The model
    /// is the remainder and may itself contain colons.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || KeyParseError(s.to_owned());
        let mut parts = s.splitn(5, ':');
        let mut next = || parts.next().ok_or_else(err);
        let net_if = match next()? {
            "wifi" => NetInterface::Wifi,
            "cellular" => NetInterface::Cellular,
            _ => return Err(err()),
        };
        let bw_log2 = next()?.parse().map_err(|_| err())?;
        let rtt_bucket = match next()? {
            "low" => RttBucket::Low,
            "medium" => RttBucket::Medium,
            "high" => RttBucket::High,
            "very_high" => RttBucket::VeryHigh,
            _ => return Err(err()),
        };
        let size_class = next()?.parse().map_err(|_| err())?;
        let device_model = next()?.to_owned();
        if device_model.is_empty() {
            return Err(err());
        }
        Ok(NetConditionKey {
            net_if,
            bw_log2,
            rtt_bucket,
            size_class,
            device_model,
        })
    }
}

/// A dataset to move plus the total connection budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRequest {
    /// `(url, expected size in bytes)`.
    pub dataset: Vec<(String, u64)>,
    pub avg_file_size: f64,
    pub num_files: usize,
    pub user_limit: u32,
}

impl TransferRequest {
    pub fn new(dataset: Vec<(String, u64)>, user_limit: u32) -> Self {
        let num_files = dataset.len();
        let avg_file_size = if num_files == 0 {
            0.0
        } else {
            dataset.iter().map(|f| f.1 as f64).sum::<f64>() / num_files as f64
        };
        TransferRequest {
            dataset,
            avg_file_size,
            num_files,
            user_limit,
        }
    }

    /// True when the summary fields agree with the dataset (mean within 1%).
    pub fn is_consistent(&self) -> bool {
        let fresh = TransferRequest::new(self.dataset.clone(), self.user_limit);
        self.num_files == fresh.num_files
            && (self.avg_file_size - fresh.avg_file_size).abs() <= 0.01 * fresh.avg_file_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Cache,
    Lm,
    Default,
}

impl fmt::Display for ParamSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamSource::Cache => "cache",
            ParamSource::Lm => "lm",
            ParamSource::Default => "default",
        })
    }
}

/// Resolves a setting for `req` under `cond`: cache hit, else predictor,
/// else [`default_params`].
pub fn resolve_params(
    req: &TransferRequest,
    cond: &Conditions,
    cache: &ParamCache,
    lm: Option<&LearnedModel>,
) -> (ParamSetting, ParamSource) {
    let key = NetConditionKey::derive(req, cond);
    if let Some(entry) = cache.get(&key) {
        return (entry.theta, ParamSource::Cache);
    }
    if let Some(model) = lm {
        let features = FeatureVector::new(
            req.avg_file_size,
            req.num_files as u64,
            cond.rtt,
            cond.bw,
            cond.net_if,
            cond.device.cpu_class,
        );
        if let Ok(f) = features {
            return (predict(model, &f), ParamSource::Lm);
        }
    }
    (default_params(), ParamSource::Default)
}
