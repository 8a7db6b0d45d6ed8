//! Simulator sweep over the whole parameter lattice.

use fasthla_core::optimize::Objective;
use fasthla_core::sim::{simulate, DatasetClass, NetScenario, PowerModel, SimError};
use fasthla_core::ParamSetting;

pub const CSV_HEADER: &str = "cc,p,bs_kb,throughput_mbps,energy_j_per_100mb,efficiency";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub theta: ParamSetting,
    pub throughput: f64,
    pub energy: f64,
    pub efficiency: f64,
}

/// Simulates `class` at every lattice node, in lattice order.
pub fn sweep(scn: &NetScenario, pm: &PowerModel, class: DatasetClass) -> Result<Vec<BenchRow>, SimError> {
    let sizes = class.sizes();
    ParamSetting::lattice()
        .map(|theta| {
            let o = simulate(scn, pm, &theta, &sizes)?;
            Ok(BenchRow {
                theta,
                throughput: o.throughput,
                energy: o.e_per_100mb,
                efficiency: Objective::Efficiency.score(o.throughput, o.e_per_100mb),
            })
        })
        .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            r.theta.cc(),
            r.theta.p(),
            r.theta.bs_kib(),
            r.throughput,
            r.energy,
            r.efficiency
        ));
    }
    out
}

/// Parses a dataset class name as printed by [`DatasetClass::name`].
pub fn parse_class(name: &str) -> Option<DatasetClass> {
    DatasetClass::ALL.into_iter().find(|c| c.name() == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fasthla_core::sim::ground_truth_argmax;

    #[test]
    fn full_grid() {
        let (scn, pm) = (NetScenario::default(), PowerModel::default());
        let rows = sweep(&scn, &pm, DatasetClass::Image).unwrap();
        assert_eq!(rows.len(), 252);
        let csv = to_csv(&rows);
        assert_eq!(csv.lines().count(), 253);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1,1,"));
        let best = rows
            .iter()
            .fold(None::<&BenchRow>, |b, r| match b {
                Some(b) if b.efficiency >= r.efficiency => Some(b),
                _ => Some(r),
            })
            .unwrap();
        assert_eq!(best.theta, ground_truth_argmax(&scn, &pm, DatasetClass::Image).unwrap());
    }

    #[test]
    fn class_names() {
        for c in DatasetClass::ALL {
            assert_eq!(parse_class(c.name()), Some(c));
        }
        assert_eq!(parse_class("audio"), None);
    }
}
