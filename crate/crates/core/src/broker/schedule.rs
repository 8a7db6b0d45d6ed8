use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TransferRequest;
use crate::cluster::{cluster_files, ClusterError, FileCluster};
use crate::corelog::ParamSetting;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("user limit must be at least 1")]
    ZeroLimit,
    #[error("{clusters} size classes cannot share a limit of {limit} connections")]
    TooManyClusters { clusters: usize, limit: u32 },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// One size class of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub cluster: FileCluster,
    /// Setting resolved for the cluster before scaling.
    pub theta: ParamSetting,
    /// Concurrency to run with; equals `theta.cc()` unless `scaled`.
    pub cc: u32,
    pub scaled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub entries: Vec<PlanEntry>,
}

impl SchedulePlan {
    pub fn total_cc(&self) -> u32 {
        self.entries.iter().map(|e| e.cc).sum()
    }

    /// Upper bound on simultaneous connections, `sum of cc * p`.
    pub fn max_connections(&self) -> u32 {
        self.entries.iter().map(|e| e.cc * e.theta.p()).sum()
    }

    pub fn file_count(&self) -> usize {
        self.entries.iter().map(|e| e.cluster.files.len()).sum()
    }
}

/// Scales concurrencies down proportionally so their sum fits `limit`.
///
/// Returns the input unchanged if it already fits. Otherwise each value
/// becomes `max(1, floor(cc * limit / sum))`; if the floor at 1 pushes the
/// total over `limit`, every cluster tied at the current maximum drops by
/// one until it fits, which keeps the order of the values.
pub fn scale_concurrency(ccs: &[u32], limit: u32) -> Result<Vec<u32>, ScheduleError> {
    if limit == 0 {
        return Err(ScheduleError::ZeroLimit);
    }
    if ccs.len() > limit as usize {
        return Err(ScheduleError::TooManyClusters {
            clusters: ccs.len(),
            limit,
        });
    }
    let sum: u64 = ccs.iter().map(|&c| u64::from(c)).sum();
    if sum <= u64::from(limit) {
        return Ok(ccs.to_vec());
    }
    let mut out: Vec<u32> = ccs
        .iter()
        .map(|&c| ((u64::from(c) * u64::from(limit) / sum) as u32).max(1))
        .collect();
    while out.iter().map(|&c| u64::from(c)).sum::<u64>() > u64::from(limit) {
        let max = *out.iter().max().expect("non-empty");
        out.iter_mut().filter(|c| **c == max).for_each(|c| *c -= 1);
    }
    Ok(out)
}

/// Splits the dataset into size classes and picks a setting per class.
///
/// `resolve` receives a request restricted to one cluster (its mean size as
/// the average file size). Concurrencies are then scaled so their sum stays
/// within `req.user_limit`; parallelism and block size are left alone.
pub fn schedule_mixed(
    req: &TransferRequest,
    threshold_decades: f64,
    mut resolve: impl FnMut(&TransferRequest) -> ParamSetting,
) -> Result<SchedulePlan, ScheduleError> {
    if req.dataset.is_empty() {
        return Err(ScheduleError::EmptyDataset);
    }
    let clusters = cluster_files(&req.dataset, threshold_decades)?;
    let thetas: Vec<ParamSetting> = clusters
        .iter()
        .map(|c| resolve(&TransferRequest::new(c.files.clone(), req.user_limit)))
        .collect();
    let ccs: Vec<u32> = thetas.iter().map(ParamSetting::cc).collect();
    let scaled = scale_concurrency(&ccs, req.user_limit)?;
    Ok(SchedulePlan {
        entries: clusters
            .into_iter()
            .zip(thetas)
            .zip(scaled)
            .map(|((cluster, theta), cc)| PlanEntry {
                cluster,
                scaled: cc != theta.cc(),
                theta,
                cc,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn algorithm_examples() {
        assert_eq!(scale_concurrency(&[8, 8], 32).unwrap(), vec![8, 8]);
        assert_eq!(scale_concurrency(&[32, 16], 24).unwrap(), vec![16, 8]);
        assert_eq!(scale_concurrency(&[64], 32).unwrap(), vec![32]);
    }

    #[test]
    fn floor_overshoot_is_corrected() {
        // floor gives [9, 0, 0] -> [9, 1, 1] = 11 > 10.
        let out = scale_concurrency(&[32, 1, 1], 10).unwrap();
        assert!(out.iter().sum::<u32>() <= 10);
        assert_eq!(out, vec![8, 1, 1]);
        assert!(matches!(
            scale_concurrency(&[1, 1, 1], 2),
            Err(ScheduleError::TooManyClusters { clusters: 3, limit: 2 })
        ));
        assert_eq!(scale_concurrency(&[1], 0), Err(ScheduleError::ZeroLimit));
    }

    #[test]
    fn mixed_plan() {
        let files = vec![
            ("a.html".to_owned(), 100_000),
            ("b.mp4".to_owned(), 150_000_000),
            ("c.html".to_owned(), 120_000),
        ];
        let req = TransferRequest::new(files, 24);
        let plan = schedule_mixed(&req, 1.0, |r| {
            let cc = if r.avg_file_size > 1e6 { 16 } else { 32 };
            ParamSetting::with_kib(cc, 2, 8).unwrap()
        })
        .unwrap();
        assert_eq!(plan.entries.len(), 2);
        // Largest files first.
        assert_eq!(plan.entries[0].cluster.files[0].0, "b.mp4");
        assert_eq!(plan.entries[0].cc, 8);
        assert_eq!(plan.entries[1].cc, 16);
        assert!(plan.entries.iter().all(|e| e.scaled));
        assert_eq!(plan.total_cc(), 24);
        assert_eq!(plan.file_count(), 3);
        assert_eq!(plan.max_connections(), 48);

        let empty = TransferRequest::new(vec![], 24);
        assert_eq!(
            schedule_mixed(&empty, 1.0, |_| unreachable!()),
            Err(ScheduleError::EmptyDataset)
        );
    }

    proptest! {
        #[test]
        fn sum_within_limit_and_order_kept(
            ccs in prop::collection::vec(1u32..=64, 1..12),
            limit in 1u32..=64,
        ) {
            match scale_concurrency(&ccs, limit) {
                Ok(out) => {
                    prop_assert!(out.iter().sum::<u32>() <= limit);
                    prop_assert!(out.iter().all(|&c| c >= 1));
                    for i in 0..ccs.len() {
                        prop_assert!(out[i] <= ccs[i]);
                        for j in 0..ccs.len() {
                            if ccs[i] >= ccs[j] {
                                prop_assert!(out[i] >= out[j]);
                            }
                        }
                    }
                }
                Err(e) => prop_assert!(ccs.len() > limit as usize, "{}", e),
            }
        }
    }
}
