//! Hierarchical agglomerative clustering of transfer logs and dataset files.
//!
//! Logs are first split by the categorical key (device model, network
//! interface); those take precedence over everything numeric. Inside each
//! partition, Ward linkage runs on standardized
//! `[log10 fs, log10 t_rtt, log10 bw]`. Files are clustered by complete
//! linkage on `|log10 size_a - log10 size_b|`, so no cluster spans more than
//! the threshold in decades.

mod hac;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corelog::{NetInterface, TransferLog};

pub use hac::Linkage;

/// Default Ward cut height for log clustering.
pub const DEFAULT_LOG_THRESHOLD: f64 = 1.0;
/// Default complete-linkage cut for file clustering, in decades of size.
pub const DEFAULT_FILE_THRESHOLD_DECADES: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("clustering threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("file `{url}` has size 0; sizes must be positive")]
    EmptyFile { url: String },
}

/// A group of similar logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCluster {
    pub device_model: String,
    pub net_if: NetInterface,
    /// Indices into the clustered slice, ascending.
    pub members: Vec<usize>,
    /// Mean standardized feature vector of the members.
    pub centroid: [f64; 3],
}

/// A group of similarly sized files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCluster {
    /// `(url, size in bytes)` in dataset order.
    pub files: Vec<(String, u64)>,
    pub mean_size: f64,
}

impl FileCluster {
    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.1).sum()
    }
}

fn check_threshold(t: f64) -> Result<(), ClusterError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(ClusterError::Threshold(t))
    }
}

/// Raw (unstandardized) clustering features of a log.
pub fn log_features(log: &TransferLog) -> [f64; 3] {
    [log.fs.log10(), log.t_rtt.log10(), log.bw.log10()]
}

/// Standardizes columns to zero mean and unit population variance. Constant
/// columns become all zeros.
fn standardize(rows: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for j in 0..3 {
        mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        sd[j] = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
    }
    rows.iter()
        .map(|r| {
            (0..3)
                .map(|j| if sd[j] > 0.0 { (r[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Groups logs by categorical key, then by Ward-linkage similarity cut at
/// `threshold`.
///
/// Clusters come out in order of their partition's first appearance, then by
/// lowest member index. The result is deterministic for a given input order.
pub fn cluster_logs(logs: &[TransferLog], threshold: f64) -> Result<Vec<LogCluster>, ClusterError> {
    check_threshold(threshold)?;
    let mut order: Vec<(&str, NetInterface)> = Vec::new();
    let mut partitions: BTreeMap<(&str, NetInterface), Vec<usize>> = BTreeMap::new();
    for (i, log) in logs.iter().enumerate() {
        let key = (log.device.model.as_str(), log.net_if);
        partitions
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }

    let mut out = Vec::new();
    for key in order {
        let idx = &partitions[&key];
        let raw: Vec<[f64; 3]> = idx.iter().map(|&i| log_features(&logs[i])).collect();
        let z = standardize(&raw);
        let labels = hac::flat_clusters(&z, Linkage::Ward, threshold);

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (local, label) in labels.into_iter().enumerate() {
            groups.entry(label).or_default().push(local);
        }
        for locals in groups.into_values() {
            let mut centroid = [0.0; 3];
            for &l in &locals {
                for (c, v) in centroid.iter_mut().zip(&z[l]) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= locals.len() as f64);
            out.push(LogCluster {
                device_model: key.0.to_owned(),
                net_if: key.1,
                members: locals.into_iter().map(|l| idx[l]).collect(),
                centroid,
            });
        }
    }
    Ok(out)
}

/// Groups dataset files by size, complete linkage on log10 size cut at
/// `threshold_decades`. Clusters are ordered by descending mean size.
pub fn cluster_files(
    dataset: &[(String, u64)],
    threshold_decades: f64,
) -> Result<Vec<FileCluster>, ClusterError> {
    check_threshold(threshold_decades)?;
    if let Some((url, _)) = dataset.iter().find(|f| f.1 == 0) {
        return Err(ClusterError::EmptyFile { url: url.clone() });
    }
    let features: Vec<Vec<f64>> = dataset.iter().map(|f| vec![(f.1 as f64).log10()]).collect();
    let labels = hac::flat_clusters(&features, Linkage::Complete, threshold_decades);

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.into_iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    let mut clusters: Vec<(usize, FileCluster)> = groups
        .into_values()
        .map(|members| {
            let files: Vec<(String, u64)> = members.iter().map(|&i| dataset[i].clone()).collect();
            let mean_size = files.iter().map(|f| f.1 as f64).sum::<f64>() / files.len() as f64;
            (members[0], FileCluster { files, mean_size })
        })
        .collect();
    clusters.sort_by(|a, b| b.1.mean_size.total_cmp(&a.1.mean_size).then(a.0.cmp(&b.0)));
    Ok(clusters.into_iter().map(|c| c.1).collect())
}
