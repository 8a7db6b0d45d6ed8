//! Log analysis pipeline: clean, cluster, optimize per cluster, distill into
//! the predictor.

use std::time::Instant;

use fasthla_core::broker::{Conditions, NetConditionKey, TransferRequest};
use fasthla_core::cluster::{cluster_logs, ClusterError, LogCluster, DEFAULT_LOG_THRESHOLD};
use fasthla_core::corelog::{parse_jsonl, preprocess_logs};
use fasthla_core::learn::{train, FeatureVector, LearnError, LearnedModel, TrainConfig};
use fasthla_core::optimize::{optimal_params_preprocessed, OptimizerConfig};
use fasthla_core::{NetInterface, ParamSetting, TransferLog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Ward-linkage cut for log clustering.
    pub log_threshold: f64,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            log_threshold: DEFAULT_LOG_THRESHOLD,
            optimizer: OptimizerConfig::default(),
            train: TrainConfig::default(),
            seed: 42,
        }
    }
}

/// Best setting found for one cluster of logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Cache key of the cluster's mean conditions.
    pub key: NetConditionKey,
    pub device_model: String,
    pub net_if: NetInterface,
    /// Mean file size of the member logs, bytes.
    pub mean_fs: f64,
    /// Mean RTT, ms.
    pub mean_rtt: f64,
    /// Mean bandwidth, Mbps.
    pub mean_bw: f64,
    pub logs: usize,
    pub theta: ParamSetting,
    /// Surface throughput at `theta`, Mbps.
    pub th: f64,
    /// Surface energy at `theta`, J per 100 MiB.
    pub e: f64,
    pub objective: f64,
}

/// A cluster left out of the table, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCluster {
    pub device_model: String,
    pub net_if: NetInterface,
    pub logs: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub model: LearnedModel,
    /// One row per cluster that produced a setting, in cluster order.
    pub table: Vec<TableRow>,
    pub skipped: Vec<SkippedCluster>,
    /// Wall time of the run, s.
    pub wall_time: f64,
    /// Logs left after cleaning.
    pub usable_logs: usize,
    /// Input lines that did not parse.
    pub rejected_lines: usize,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty-input: no usable logs")]
    EmptyInput,
    #[error("no-trainable-data: {}", describe_skips(.0))]
    NoTrainableData(Vec<SkippedCluster>),
    #[error("no-trainable-data: {0}")]
    Training(#[from] LearnError),
    #[error("clustering: {0}")]
    Cluster(#[from] ClusterError),
}

fn describe_skips(s: &[SkippedCluster]) -> String {
    if s.is_empty() {
        return "no clusters".into();
    }
    s.iter()
        .map(|c| format!("{}/{} ({} logs): {}", c.device_model, c.net_if, c.logs, c.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs the pipeline on a JSONL document. Malformed lines are counted and
/// ignored.
pub fn run_pipeline(jsonl: &str, prior: Option<&LearnedModel>, cfg: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    let batch = parse_jsonl(jsonl);
    let mut result = run_pipeline_on(&batch.logs, prior, cfg)?;
    result.rejected_lines = batch.rejected.len();
    Ok(result)
}

/// Runs the pipeline on parsed logs.
///
/// The result is a pure function of `(logs, prior, cfg)` apart from
/// `wall_time`.
pub fn run_pipeline_on(logs: &[TransferLog], prior: Option<&LearnedModel>, cfg: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    let started = Instant::now();
    let clean = preprocess_logs(logs);
    if clean.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let clusters = cluster_logs(&clean, cfg.log_threshold)?;

    let mut table = Vec::new();
    let mut skipped = Vec::new();
    let mut rows = Vec::new();
    for cluster in &clusters {
        let members: Vec<TransferLog> = cluster.members.iter().map(|&i| clean[i].clone()).collect();
        match optimal_params_preprocessed(&members, &cfg.optimizer) {
            Ok((best, _)) => {
                rows.extend(
                    members
                        .iter()
                        .filter_map(|l| FeatureVector::from_log(l).ok())
                        .map(|f| (f, best.theta)),
                );
                table.push(table_row(cluster, &members, best.theta, best.th_at, best.e_at, best.objective));
            }
            Err(e) => {
                tracing::warn!(device = %cluster.device_model, net_if = %cluster.net_if, logs = members.len(), "cluster skipped: {e}");
                skipped.push(SkippedCluster {
                    device_model: cluster.device_model.clone(),
                    net_if: cluster.net_if,
                    logs: members.len(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if table.is_empty() {
        return Err(PipelineError::NoTrainableData(skipped));
    }
    let model = train(&rows, cfg.seed, prior, &cfg.train)?;
    Ok(PipelineResult {
        model,
        table,
        skipped,
        wall_time: started.elapsed().as_secs_f64(),
        usable_logs: clean.len(),
        rejected_lines: 0,
    })
}

fn table_row(cluster: &LogCluster, members: &[TransferLog], theta: ParamSetting, th: f64, e: f64, objective: f64) -> TableRow {
    let n = members.len() as f64;
    let mean = |f: fn(&TransferLog) -> f64| members.iter().map(f).sum::<f64>() / n;
    let (mean_fs, mean_rtt, mean_bw) = (mean(|l| l.fs), mean(|l| l.t_rtt), mean(|l| l.bw));
    let req = TransferRequest {
        dataset: Vec::new(),
        avg_file_size: mean_fs,
        num_files: mean(|l| l.n_files as f64).round() as usize,
        user_limit: 0,
    };
    let cond = Conditions {
        net_if: cluster.net_if,
        rtt: mean_rtt,
        bw: mean_bw,
        device: members[0].device.clone(),
    };
    TableRow {
        key: NetConditionKey::derive(&req, &cond),
        device_model: cluster.device_model.clone(),
        net_if: cluster.net_if,
        mean_fs,
        mean_rtt,
        mean_bw,
        logs: members.len(),
        theta,
        th,
        e,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fasthla_core::learn::serialize;
    use fasthla_core::sim::{generate_logs, NetScenario, PowerModel};

    fn sim_logs(seed: u64) -> Vec<TransferLog> {
        let lattice: Vec<_> = ParamSetting::lattice().collect();
        generate_logs(&NetScenario::default(), &PowerModel::default(), &lattice, 1, seed).unwrap()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                epochs: 200,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn empty_input() {
        assert!(matches!(run_pipeline("", None, &quick()), Err(PipelineError::EmptyInput)));
        assert!(matches!(run_pipeline("{}\nnot json\n", None, &quick()), Err(PipelineError::EmptyInput)));
        assert!(PipelineError::EmptyInput.to_string().starts_with("empty-input"));
    }

    #[test]
    fn too_few_logs_per_cluster() {
        let logs = sim_logs(1);
        match run_pipeline_on(&logs[..3], None, &quick()) {
            Err(PipelineError::NoTrainableData(s)) => {
                assert_eq!(s.len(), 3);
                assert!(s.iter().all(|c| c.logs == 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_and_versioned() {
        let logs = sim_logs(42);
        let text = fasthla_core::corelog::to_jsonl(&logs);
        let a = run_pipeline(&text, None, &quick()).unwrap();
        let b = run_pipeline(&text, None, &quick()).unwrap();
        assert_eq!(serialize(&a.model), serialize(&b.model));
        assert_eq!(a.table, b.table);
        assert_eq!(a.model.version(), 1);
        assert_eq!(a.table.len(), 3);
        assert!(a.skipped.is_empty());
        assert_eq!(a.usable_logs, a.table.iter().map(|r| r.logs).sum::<usize>());

        let c = run_pipeline(&text, Some(&a.model), &quick()).unwrap();
        assert_eq!(c.model.version(), 2);
    }

    #[test]
    fn rejected_lines_are_counted() {
        let logs = sim_logs(3);
        let mut text = fasthla_core::corelog::to_jsonl(&logs);
        text.push_str("garbage\n{\"fs\": 1}\n");
        let r = run_pipeline(&text, None, &quick()).unwrap();
        assert_eq!(r.rejected_lines, 2);
    }
}
