use fasthla_core::broker::TransferRequest;
use fasthla_core::corelog::{dynamic_energy, DeviceInfo, NetInterface, ParamSetting, PowerTrace, TransferLog, TransferStatus};
use serde::{Deserialize, Serialize};

/// Outcome for one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub url: String,
    /// Destination path relative to the transfer directory.
    pub name: String,
    pub bytes: u64,
    /// Seconds from first request to last byte.
    pub duration: f64,
    /// Hex SHA-256 of the written file; present only for completed files.
    pub checksum: Option<String>,
    /// Range streams actually used (1 after a fallback).
    pub streams: u32,
    /// The server ignored `Range`, so the file was fetched whole.
    pub range_fallback: bool,
    pub retries: u32,
    pub error: Option<String>,
}

impl FileReport {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

/// Result of running a schedule plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub files: Vec<FileReport>,
    /// `8 * total bytes / wall time`, Mbps.
    pub throughput: f64,
    /// Seconds.
    pub wall_time: f64,
    /// `(t seconds, Mbps)` measured over consecutive sampling intervals.
    pub samples: Vec<(f64, f64)>,
    /// Setting of the plan entry that moved the most bytes, with its
    /// concurrency after scaling.
    pub theta: Option<ParamSetting>,
    pub errors: Vec<String>,
    /// Most connections open at once.
    pub peak_connections: usize,
    /// Most files in flight at once.
    pub peak_files: usize,
}

impl TransferReport {
    pub fn empty() -> Self {
        TransferReport {
            files: Vec::new(),
            throughput: 0.0,
            wall_time: 0.0,
            samples: Vec::new(),
            theta: None,
            errors: Vec::new(),
            peak_connections: 0,
            peak_files: 0,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.bytes).sum()
    }

    pub fn all_completed(&self) -> bool {
        self.files.iter().all(FileReport::completed)
    }
}

/// Link measurements taken around a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// ms
    pub rtt: f64,
    /// Mbps
    pub bw: f64,
    /// TCP buffer size, bytes.
    pub tcp_buffer: f64,
    pub net_if: NetInterface,
}

/// Builds the log record for a finished transfer.
///
/// Status is `completed` when every file completed, `failed` when none did
/// and `aborted` otherwise. `pw` and `energy` are set only when `power` is
/// given: `pw` is the mean dynamic power over the trace window and `energy`
/// the window's base plus dynamic energy. CPU and memory utilization are not
/// measured by the engine and are logged as 0.
pub fn emit_log(
    report: &TransferReport,
    req: &TransferRequest,
    probe: &Probe,
    device: &DeviceInfo,
    power: Option<&PowerTrace>,
    timestamp: i64,
) -> TransferLog {
    let done = report.files.iter().filter(|f| f.completed()).count();
    let status = if !report.files.is_empty() && done == report.files.len() {
        TransferStatus::Completed
    } else if done == 0 {
        TransferStatus::Failed
    } else {
        TransferStatus::Aborted
    };
    let (pw, energy) = match power {
        Some(trace) => {
            let e_dyn = dynamic_energy(trace);
            (Some(trace.mean_dynamic_power()), Some(trace.base_energy() + e_dyn))
        }
        None => (None, None),
    };
    TransferLog {
        fs: req.avg_file_size,
        n_files: req.num_files as u64,
        t_rtt: probe.rtt,
        bs_tcp: probe.tcp_buffer,
        bw: probe.bw,
        params: report.theta.unwrap_or_else(fasthla_core::broker::default_params),
        mu_cpu: 0.0,
        mu_mem: 0.0,
        mu_nic: if probe.bw > 0.0 { (report.throughput / probe.bw).min(1.0) } else { 0.0 },
        pw,
        energy,
        throughput: report.throughput,
        duration: report.wall_time,
        device: device.clone(),
        net_if: probe.net_if,
        status,
        timestamp,
    }
}
