use std::fmt;

use serde::{Deserialize, Serialize};

use super::params::ParamSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetInterface {
    Wifi,
    Cellular,
}

impl fmt::Display for NetInterface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetInterface::Wifi => "wifi",
            NetInterface::Cellular => "cellular",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferStatus {
    Completed,
    Aborted,
    Failed,
}

/// Hardware and OS description of the device that ran a transfer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub model: String,
    pub os: String,
    /// Ordinal processor class; larger is faster.
    pub cpu_class: u32,
    pub mem_bytes: u64,
    pub wifi_std: String,
}

impl DeviceInfo {
    /// A device description is usable only with a non-empty model name.
    pub fn is_valid(&self) -> bool {
        !self.model.trim().is_empty()
    }
}

/// One historical transfer record as uploaded by a device.
///
/// Serialized one object per line; unknown fields are ignored on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferLog {
    /// Mean file size in bytes.
    pub fs: f64,
    pub n_files: u64,
    /// Round-trip time in milliseconds.
    pub t_rtt: f64,
    /// TCP buffer size in bytes.
    pub bs_tcp: f64,
    /// Link bandwidth in Mbps.
    pub bw: f64,
    pub params: ParamSetting,
    pub mu_cpu: f64,
    pub mu_mem: f64,
    pub mu_nic: f64,
    /// Mean dynamic power in watts, when a power trace was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pw: Option<f64>,
    /// Total (base + dynamic) energy of the transfer in joules, when a power
    /// trace was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Achieved throughput in Mbps.
    pub throughput: f64,
    /// Wall time in seconds.
    pub duration: f64,
    pub device: DeviceInfo,
    pub net_if: NetInterface,
    pub status: TransferStatus,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
}

/// Bytes in the energy normalization unit (100 MiB).
pub const BYTES_PER_100MB: f64 = 100.0 * 1024.0 * 1024.0;

impl TransferLog {
    /// Total payload bytes.
    pub fn total_bytes(&self) -> f64 {
        self.fs * self.n_files as f64
    }

    /// Total energy normalized to joules per 100 MiB moved, if known.
    pub fn energy_per_100mb(&self) -> Option<f64> {
        let bytes = self.total_bytes();
        match self.energy {
            Some(e) if bytes > 0.0 && e.is_finite() => Some(e * BYTES_PER_100MB / bytes),
            _ => None,
        }
    }

    /// True when every numeric field is finite and the completed-transfer
    /// invariants hold.
    pub fn is_well_formed(&self) -> bool {
        let finite = [
            self.fs,
            self.t_rtt,
            self.bs_tcp,
            self.bw,
            self.mu_cpu,
            self.mu_mem,
            self.mu_nic,
            self.throughput,
            self.duration,
        ]
        .iter()
        .chain(self.pw.iter())
        .chain(self.energy.iter())
        .all(|v| v.is_finite());
        finite
            && self.throughput >= 0.0
            && self.device.is_valid()
            && (self.status != TransferStatus::Completed
                || (self.fs > 0.0 && self.n_files > 0 && self.duration > 0.0))
    }
}

/// Result of parsing a JSONL document.
#[derive(Debug, Default)]
pub struct JsonlBatch {
    pub logs: Vec<TransferLog>,
    /// `(1-based line number, error message)` per rejected line.
    pub rejected: Vec<(usize, String)>,
}

/// Parses one log per line. Blank lines are skipped; malformed lines are
/// collected in [`JsonlBatch::rejected`] without aborting the parse.
pub fn parse_jsonl(text: &str) -> JsonlBatch {
    let mut batch = JsonlBatch::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TransferLog>(line) {
            Ok(log) if log.is_well_formed() => batch.logs.push(log),
            Ok(_) => batch.rejected.push((i + 1, "log violates field invariants".into())),
            Err(e) => batch.rejected.push((i + 1, e.to_string())),
        }
    }
    batch
}

/// Serializes logs one per line, each terminated by `\n`.
pub fn to_jsonl<'a>(logs: impl IntoIterator<Item = &'a TransferLog>) -> String {
    let mut out = String::new();
    for log in logs {
        // TransferLog contains no maps with non-string keys; this cannot fail.
        out.push_str(&serde_json::to_string(log).expect("serializable log"));
        out.push('\n');
    }
    out
}
