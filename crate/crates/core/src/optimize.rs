//! Parameter optimization on a fitted [`PerfSurface`].
//!
//! The default objective is throughput efficiency, throughput divided by
//! energy per 100 MiB, evaluated pointwise: a surface describes steady-state
//! behaviour, so maximizing the ratio at one operating point is the same as
//! maximizing its integral over the transfer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corelog::{preprocess_logs, Axis, ParamSetting, TransferLog};
use crate::surface::{fit_surface, PerfSurface, SurfaceError, ENERGY_FLOOR};

/// Maximum coordinate-ascent sweeps in [`refine`].
pub const MAX_SWEEPS: usize = 50;
/// Relative objective change that ends coordinate ascent.
pub const SWEEP_TOLERANCE: f64 = 1e-6;
/// Minimum preprocessed logs for [`optimal_params`].
pub const MIN_LOGS: usize = 4;

const GOLDEN_ITERS: usize = 60;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize throughput per unit energy.
    #[default]
    Efficiency,
    /// Minimize energy per 100 MiB regardless of throughput.
    MinEnergy,
    /// Maximize throughput regardless of energy.
    MaxThroughput,
}

impl Objective {
    /// Score to maximize for a `(throughput, energy)` pair. Energy is floored
    /// at [`ENERGY_FLOOR`].
    pub fn score(self, th: f64, e: f64) -> f64 {
        let e = e.max(ENERGY_FLOOR);
        match self {
            Objective::Efficiency => th / e,
            Objective::MinEnergy => 1.0 / e,
            Objective::MaxThroughput => th,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Efficiency => "efficiency",
            Objective::MinEnergy => "min_energy",
            Objective::MaxThroughput => "max_throughput",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "efficiency" => Ok(Objective::Efficiency),
            "min_energy" => Ok(Objective::MinEnergy),
            "max_throughput" => Ok(Objective::MaxThroughput),
            other => Err(format!(
                "unknown objective `{other}` (expected efficiency, min_energy or max_throughput)"
            )),
        }
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub objective: Objective,
    /// Optional upper bound on `cc * p`. Disabled by default.
    pub stream_cap: Option<u32>,
}

impl OptimizerConfig {
    fn admits(&self, t: &ParamSetting) -> bool {
        self.stream_cap.map_or(true, |cap| t.streams() <= cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub theta: ParamSetting,
    /// Objective value at `theta` (Mbps per J/100MiB for efficiency).
    pub objective: f64,
    pub th_at: f64,
    pub e_at: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("insufficient data: {0} usable logs with energy, need at least {MIN_LOGS}")]
    TooFewLogs(usize),
    #[error("insufficient data: no axis spans two levels (degenerate: {})", fmt_axes(.0))]
    DegenerateAxes(Vec<Axis>),
    #[error("no lattice node satisfies the stream cap")]
    NoFeasibleNode,
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

fn fmt_axes(axes: &[Axis]) -> String {
    axes.iter().map(|a| a.short_name()).collect::<Vec<_>>().join(", ")
}

fn evaluate(
    s: &PerfSurface,
    cfg: &OptimizerConfig,
    theta: ParamSetting,
    method: Method,
) -> OptimizationResult {
    let (th, e) = s.eval_at(&theta).expect("lattice node inside hull");
    OptimizationResult {
        theta,
        objective: cfg.objective.score(th, e),
        th_at: th,
        e_at: e,
        method,
    }
}

/// Evaluates the objective at every lattice node inside the surface hull and
/// returns the best. Ties go to smaller cc, then p, then bs.
pub fn grid_argmax(s: &PerfSurface, cfg: &OptimizerConfig) -> Result<OptimizationResult, OptimizeError> {
    let mut best: Option<OptimizationResult> = None;
    // Lattice order is lexicographic, so keeping the first maximum applies
    // the tie-break.
    for theta in s.lattice_nodes().into_iter().filter(|t| cfg.admits(t)) {
        let r = evaluate(s, cfg, theta, Method::Grid);
        if best.map_or(true, |b| r.objective > b.objective) {
            best = Some(r);
        }
    }
    best.ok_or(OptimizeError::NoFeasibleNode)
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Compare the bracket against the endpoints; golden section only finds
    // an interior local maximum.
    let mid = 0.5 * (a + b);
    [lo, hi, mid]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc })
        .0
}

/// Continuous coordinate ascent from `start`, snapped back to the lattice.
///
/// Each sweep runs a golden-section line search along every axis that spans
/// more than one level, in `log2` coordinates. Stops after [`MAX_SWEEPS`]
/// sweeps or when the objective changes by less than [`SWEEP_TOLERANCE`]
/// relative. The continuous optimum is rounded to the nearest lattice node;
/// if that node scores below `start`, `start` is returned.
pub fn refine(
    s: &PerfSurface,
    start: ParamSetting,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    if !s.contains(&start) {
        let c = start.log2_coords();
        let axis = Axis::ALL
            .into_iter()
            .find(|&a| {
                let (lo, hi) = s.hull(a);
                c[a.index()] < lo || c[a.index()] > hi
            })
            .expect("some axis outside hull");
        let (lo, hi) = s.hull(axis);
        return Err(SurfaceError::Extrapolation {
            axis,
            x: c[axis.index()],
            lo,
            hi,
        }
        .into());
    }
    let start_result = evaluate(s, cfg, start, Method::Refined);
    let score = |x: [f64; 3]| {
        s.eval_log2(x)
            .map(|(th, e)| cfg.objective.score(th, e))
            .unwrap_or(f64::NEG_INFINITY)
    };

    let mut x = start.log2_coords();
    let mut current = score(x);
    for _ in 0..MAX_SWEEPS {
        let before = current;
        for axis in Axis::ALL {
            let (lo, hi) = s.hull(axis);
            if lo == hi {
                continue;
            }
            let i = axis.index();
            let candidate = golden_max(lo, hi, |v| {
                let mut y = x;
                y[i] = v;
                score(y)
            });
            let mut y = x;
            y[i] = candidate;
            let v = score(y);
            if v > current {
                x = y;
                current = v;
            }
        }
        if (current - before).abs() <= SWEEP_TOLERANCE * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let snapped = ParamSetting::from_indices(std::array::from_fn(|a| x[a].round() as usize))
        .expect("rounded hull coordinates are lattice levels");
    if !cfg.admits(&snapped) {
        return Ok(start_result);
    }
    let r = evaluate(s, cfg, snapped, Method::Refined);
    Ok(if r.objective >= start_result.objective {
        r
    } else {
        start_result
    })
}

/// Fits a surface to preprocessed logs and optimizes it.
///
/// Logs without an energy measurement are ignored.
pub fn optimal_params_preprocessed(
    logs: &[TransferLog],
    cfg: &OptimizerConfig,
) -> Result<(OptimizationResult, PerfSurface), OptimizeError> {
    let samples: Vec<(ParamSetting, f64, f64)> = logs
        .iter()
        .filter_map(|l| l.energy_per_100mb().map(|e| (l.params, l.throughput, e)))
        .collect();
    if samples.len() < MIN_LOGS {
        return Err(OptimizeError::TooFewLogs(samples.len()));
    }
    let surface = fit_surface(&samples)?;
    let degenerate: Vec<Axis> = Axis::ALL
        .into_iter()
        .filter(|&a| surface.levels(a).len() < 2)
        .collect();
    if degenerate.len() == Axis::ALL.len() {
        return Err(OptimizeError::DegenerateAxes(degenerate));
    }
    let grid = grid_argmax(&surface, cfg)?;
    let refined = refine(&surface, grid.theta, cfg)?;
    Ok((refined, surface))
}

/// Full optimization from raw logs: preprocess, fit, grid search, refine.
pub fn optimal_params(
    logs: &[TransferLog],
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    optimal_params_preprocessed(&preprocess_logs(logs), cfg).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corelog::fixtures::log;

    fn surface(f: impl Fn(ParamSetting) -> (f64, f64)) -> PerfSurface {
        let samples: Vec<_> = ParamSetting::lattice()
            .map(|t| {
                let (th, e) = f(t);
                (t, th, e)
            })
            .collect();
        fit_surface(&samples).unwrap()
    }

    #[test]
    fn monotone_objective_picks_max_cc() {
        let s = surface(|t| (t.cc() as f64, 1.0));
        let r = grid_argmax(&s, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta.cc(), 32);
        // Flat in p and bs: ties go to the smallest.
        assert_eq!((r.theta.p(), r.theta.bs_kib()), (1, 1));
    }

    #[test]
    fn peak_at_sixteen() {
        let s = surface(|t| {
            let x = t.log2_coords()[0];
            (50.0 - (x - 4.0).powi(2), 10.0 + (x - 4.0).powi(2))
        });
        let r = grid_argmax(&s, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta.cc(), 16);
        let refined = refine(&s, ParamSetting::with_kib(1, 1, 1).unwrap(), &OptimizerConfig::default()).unwrap();
        assert_eq!(refined.theta.cc(), 16);
        assert_eq!(refined.method, Method::Refined);
    }

    #[test]
    fn refine_from_optimum_stays() {
        let s = surface(|t| {
            let c = t.log2_coords();
            (100.0 - (c[0] - 2.0).powi(2) - (c[1] - 1.0).powi(2) - (c[2] - 3.0).powi(2), 5.0)
        });
        let g = grid_argmax(&s, &OptimizerConfig::default()).unwrap();
        assert_eq!(g.theta, ParamSetting::with_kib(4, 2, 8).unwrap());
        let r = refine(&s, g.theta, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta, g.theta);
        assert_eq!(r.objective, g.objective);
    }

    #[test]
    fn objective_modes() {
        let s = surface(|t| (t.cc() as f64, t.p() as f64));
        let r = grid_argmax(
            &s,
            &OptimizerConfig {
                objective: Objective::MinEnergy,
                stream_cap: None,
            },
        )
        .unwrap();
        assert_eq!(r.theta.p(), 1);
        let r = grid_argmax(
            &s,
            &OptimizerConfig {
                objective: Objective::MaxThroughput,
                stream_cap: None,
            },
        )
        .unwrap();
        assert_eq!(r.theta.cc(), 32);
        assert_eq!("min_energy".parse::<Objective>().unwrap(), Objective::MinEnergy);
        assert!("fastest".parse::<Objective>().is_err());
    }

    #[test]
    fn stream_cap_limits_search() {
        let s = surface(|t| (t.streams() as f64, 1.0));
        let cfg = OptimizerConfig {
            objective: Objective::Efficiency,
            stream_cap: Some(64),
        };
        let r = grid_argmax(&s, &cfg).unwrap();
        assert_eq!(r.theta.streams(), 64);
        assert_eq!((r.theta.cc(), r.theta.p()), (2, 32));
    }

    #[test]
    fn single_theta_logs_are_degenerate() {
        let t = ParamSetting::with_kib(4, 1, 8).unwrap();
        let logs: Vec<_> = (0..6).map(|i| log(10.0 + i as f64, 100.0, t)).collect();
        match optimal_params(&logs, &OptimizerConfig::default()) {
            Err(OptimizeError::DegenerateAxes(axes)) => assert_eq!(axes, Axis::ALL.to_vec()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_logs() {
        let t = ParamSetting::with_kib(4, 1, 8).unwrap();
        let logs = vec![log(10.0, 100.0, t)];
        assert_eq!(
            optimal_params(&logs, &OptimizerConfig::default()),
            Err(OptimizeError::TooFewLogs(1))
        );
    }

    #[test]
    fn constant_axes_pass_through() {
        let mut logs = Vec::new();
        for (cc, th) in [(1, 10.0), (16, 60.0), (32, 55.0)] {
            for _ in 0..2 {
                let mut l = log(th, 100.0, ParamSetting::with_kib(cc, 2, 16).unwrap());
                l.energy = Some(100.0);
                logs.push(l);
            }
        }
        let r = optimal_params(&logs, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta.p(), 2);
        assert_eq!(r.theta.bs_kib(), 16);
        assert!(crate::corelog::CC_LEVELS.contains(&r.theta.cc()));
    }
}
