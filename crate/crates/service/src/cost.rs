//! Whether an analysis run pays for itself over the transfers it serves.

use fasthla_core::sim::{simulate, DatasetClass, NetScenario, PowerModel, SimError};
use fasthla_core::ParamSetting;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Time and energy spent on one activity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub seconds: f64,
    pub joules: f64,
}

impl Cost {
    fn is_valid(&self) -> bool {
        [self.seconds, self.joules].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// One analysis run.
    pub c_hla: Cost,
    /// One transfer at the optimized setting.
    pub c_opt: Cost,
    /// The same transfer at the default setting.
    pub c_noopt: Cost,
    /// Transfers sharing one analysis run.
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amortization {
    /// Optimized transfers plus their share of the analysis beat the default
    /// in both energy and time.
    pub holds: bool,
    /// Energy saved per transfer, J. Negative when the analysis costs more
    /// than it saves.
    pub margin: f64,
    /// Time saved per transfer, s.
    pub time_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("costs must be finite and non-negative")]
    InvalidCost,
    #[error("amortization count must be at least 1")]
    ZeroCount,
}

pub fn amortization_check(est: &CostEstimate) -> Result<Amortization, CostError> {
    if est.n == 0 {
        return Err(CostError::ZeroCount);
    }
    if ![est.c_hla, est.c_opt, est.c_noopt].iter().all(Cost::is_valid) {
        return Err(CostError::InvalidCost);
    }
    let n = f64::from(est.n);
    let margin = est.c_noopt.joules - (est.c_hla.joules / n + est.c_opt.joules);
    let time_margin = est.c_noopt.seconds - (est.c_hla.seconds / n + est.c_opt.seconds);
    Ok(Amortization {
        holds: margin > 0.0 && time_margin > 0.0,
        margin,
        time_margin,
    })
}

/// Analysis cost of a run lasting `seconds` on a device drawing base plus
/// full-utilization power.
pub fn analysis_cost(pm: &PowerModel, seconds: f64) -> Cost {
    Cost {
        seconds,
        joules: seconds * (pm.p_base + pm.util_cost),
    }
}

/// Simulated cost of moving `class` with `theta`.
pub fn transfer_cost(scn: &NetScenario, pm: &PowerModel, theta: &ParamSetting, class: DatasetClass) -> Result<Cost, SimError> {
    let o = simulate(scn, pm, theta, &class.sizes())?;
    Ok(Cost {
        seconds: o.duration,
        joules: o.power * o.duration,
    })
}

/// Builds an estimate from simulated transfer costs.
pub fn estimate(
    scn: &NetScenario,
    pm: &PowerModel,
    class: DatasetClass,
    optimized: &ParamSetting,
    default: &ParamSetting,
    analysis_seconds: f64,
    n: u32,
) -> Result<CostEstimate, SimError> {
    Ok(CostEstimate {
        c_hla: analysis_cost(pm, analysis_seconds),
        c_opt: transfer_cost(scn, pm, optimized, class)?,
        c_noopt: transfer_cost(scn, pm, default, class)?,
        n,
    })
}
