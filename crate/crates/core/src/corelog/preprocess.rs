use std::collections::HashMap;

use super::log::{NetInterface, TransferLog, TransferStatus};
use super::params::ParamSetting;

/// Groups smaller than this skip the IQR outlier step.
pub const MIN_IQR_GROUP: usize = 5;
/// Fence multiplier for the IQR rule.
pub const IQR_K: f64 = 1.5;

/// Quantile with linear interpolation between closest ranks: the value at
/// fractional position `q * (n - 1)` of the sorted sample.
///
/// `sorted` must be non-empty and ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn passes_record_checks(log: &TransferLog) -> bool {
    log.status == TransferStatus::Completed
        && log.is_well_formed()
        && log.fs > 0.0
        && log.n_files > 0
        && log.duration > 0.0
        && log.t_rtt > 0.0
        && log.bw > 0.0
        && log.throughput <= log.bw
}

type GroupKey<'a> = (&'a str, NetInterface, ParamSetting);

/// One IQR pass over the surviving indices; returns true if anything was
/// removed.
fn iqr_pass(logs: &[TransferLog], keep: &mut [bool]) -> bool {
    let mut groups: HashMap<GroupKey<'_>, Vec<usize>> = HashMap::new();
    for (i, log) in logs.iter().enumerate().filter(|(i, _)| keep[*i]) {
        groups
            .entry((log.device.model.as_str(), log.net_if, log.params))
            .or_default()
            .push(i);
    }
    let mut removed = false;
    for members in groups.values().filter(|m| m.len() >= MIN_IQR_GROUP) {
        let mut th: Vec<f64> = members.iter().map(|&i| logs[i].throughput).collect();
        th.sort_by(f64::total_cmp);
        let q1 = quantile(&th, 0.25);
        let q3 = quantile(&th, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - IQR_K * iqr, q3 + IQR_K * iqr);
        for &i in members {
            let v = logs[i].throughput;
            if v < lo || v > hi {
                keep[i] = false;
                removed = true;
            }
        }
    }
    removed
}

/// Drops unusable and outlying records, preserving the order of the rest.
///
/// Removed: transfers that did not complete; records claiming more throughput
/// than the link bandwidth; records with non-finite or non-positive required
/// fields; and throughput outliers outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`
/// within groups sharing device model, interface and parameters (groups of at
/// least 5). The outlier rule is reapplied until nothing changes, so the
/// function is idempotent.
pub fn preprocess_logs(raw: &[TransferLog]) -> Vec<TransferLog> {
    let mut keep: Vec<bool> = raw.iter().map(passes_record_checks).collect();
    while iqr_pass(raw, &mut keep) {}
    raw.iter()
        .zip(keep)
        .filter_map(|(log, k)| k.then(|| log.clone()))
        .collect()
}
