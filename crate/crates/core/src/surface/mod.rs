//! Throughput and energy surfaces over the parameter lattice.
//!
//! Both quantities are modeled as tensor-product natural cubic splines in
//! `log2` coordinates (`log2 cc`, `log2 p`, `log2 (bs / 1 KiB)`). The
//! feasible levels are powers of two, so in these coordinates the knots are
//! the integers `0..=5` (`0..=6` for block size) and the spline does not
//! overshoot wildly across the wide 16..32 gap.
//!
//! Evaluation is successive 1-D interpolation: along concurrency first, then
//! parallelism, then block size. On a full lattice the result does not depend
//! on the axis order.

mod spline;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corelog::{Axis, ParamSetting};

pub use spline::{eval_spline, fit_cubic, CubicSpline1D, SplineError};

/// Lower bound applied to interpolated energy so throughput-per-joule stays
/// finite where the spline overshoots below zero.
pub const ENERGY_FLOOR: f64 = 1e-6;

/// Tolerance for evaluating a single-level axis away from its level.
const HULL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurfaceError {
    #[error("no samples to fit")]
    InsufficientData,
    #[error("non-finite sample at {0}")]
    NonFinite(ParamSetting),
    #[error("{axis} coordinate {x} outside sampled hull [{lo}, {hi}]")]
    Extrapolation { axis: Axis, x: f64, lo: f64, hi: f64 },
}

/// Interpolated throughput (Mbps) and energy (J per 100 MiB) surfaces.
#[derive(Debug, Clone)]
pub struct PerfSurface {
    /// Represented level indices per axis, ascending.
    levels: [Vec<usize>; 3],
    /// Node values, `[cc][p][bs]` row-major over `levels`.
    th: Vec<f64>,
    e: Vec<f64>,
    /// Whether each node was sampled (as opposed to filled).
    sampled: Vec<bool>,
    /// Concurrency-axis splines for every `(p, bs)` line, when that axis has
    /// at least two levels.
    th_cc: Vec<Option<CubicSpline1D>>,
    e_cc: Vec<Option<CubicSpline1D>>,
}

impl PerfSurface {
    fn dims(&self) -> [usize; 3] {
        [self.levels[0].len(), self.levels[1].len(), self.levels[2].len()]
    }

    fn flat(dims: [usize; 3], i: usize, j: usize, k: usize) -> usize {
        (i * dims[1] + j) * dims[2] + k
    }

    /// Level indices represented in the samples along `axis`.
    pub fn levels(&self, axis: Axis) -> &[usize] {
        &self.levels[axis.index()]
    }

    /// Hull of `axis` in `log2` coordinates.
    pub fn hull(&self, axis: Axis) -> (f64, f64) {
        let l = &self.levels[axis.index()];
        (l[0] as f64, l[l.len() - 1] as f64)
    }

    pub fn contains(&self, theta: &ParamSetting) -> bool {
        let c = theta.log2_coords();
        Axis::ALL.iter().all(|&a| {
            let (lo, hi) = self.hull(a);
            c[a.index()] >= lo && c[a.index()] <= hi
        })
    }

    /// Every feasible lattice node inside the hull, in lexicographic
    /// `(cc, p, bs)` order.
    pub fn lattice_nodes(&self) -> Vec<ParamSetting> {
        ParamSetting::lattice().filter(|t| self.contains(t)).collect()
    }

    /// Stored node values `(th, e)` and whether the node was sampled, for
    /// each node of the represented grid.
    pub fn nodes(&self) -> Vec<(ParamSetting, f64, f64, bool)> {
        let d = self.dims();
        let mut out = Vec::with_capacity(self.th.len());
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let f = Self::flat(d, i, j, k);
                    let theta = ParamSetting::from_indices([
                        self.levels[0][i],
                        self.levels[1][j],
                        self.levels[2][k],
                    ])
                    .expect("represented levels are feasible");
                    out.push((theta, self.th[f], self.e[f], self.sampled[f]));
                }
            }
        }
        out
    }

    /// Interpolated `(throughput, energy)` at `log2` coordinates. Energy is
    /// floored at [`ENERGY_FLOOR`].
    pub fn eval_log2(&self, x: [f64; 3]) -> Result<(f64, f64), SurfaceError> {
        for a in Axis::ALL {
            let (lo, hi) = self.hull(a);
            let v = x[a.index()];
            let inside = if lo == hi {
                (v - lo).abs() <= HULL_EPS
            } else {
                v >= lo && v <= hi
            };
            if !inside {
                return Err(SurfaceError::Extrapolation { axis: a, x: v, lo, hi });
            }
        }
        let th = self.interp(&self.th, &self.th_cc, x);
        let e = self.interp(&self.e, &self.e_cc, x);
        Ok((th, e.max(ENERGY_FLOOR)))
    }

    /// Interpolated `(throughput, energy)` at raw parameter values (block
    /// size in bytes).
    pub fn eval(&self, cc: f64, p: f64, bs: f64) -> Result<(f64, f64), SurfaceError> {
        self.eval_log2([cc.log2(), p.log2(), (bs / 1024.0).log2()])
    }

    /// Interpolated values at a lattice node.
    pub fn eval_at(&self, theta: &ParamSetting) -> Result<(f64, f64), SurfaceError> {
        self.eval_log2(theta.log2_coords())
    }

    fn interp(&self, grid: &[f64], cc_splines: &[Option<CubicSpline1D>], x: [f64; 3]) -> f64 {
        let d = self.dims();
        // Collapse concurrency: one value per (p, bs).
        let mut plane = vec![0.0; d[1] * d[2]];
        for (line, v) in plane.iter_mut().enumerate() {
            *v = match &cc_splines[line] {
                Some(s) => s.eval(x[0]).expect("inside hull"),
                None => grid[line],
            };
        }
        // Collapse parallelism: one value per bs.
        let row: Vec<f64> = (0..d[2])
            .map(|k| {
                let pts: Vec<(f64, f64)> = (0..d[1])
                    .map(|j| (self.levels[1][j] as f64, plane[j * d[2] + k]))
                    .collect();
                collapse(&pts, x[1])
            })
            .collect();
        let pts: Vec<(f64, f64)> = (0..d[2])
            .map(|k| (self.levels[2][k] as f64, row[k]))
            .collect();
        collapse(&pts, x[2])
    }
}

/// Interpolates a line of values at `x`, or returns the single value.
fn collapse(pts: &[(f64, f64)], x: f64) -> f64 {
    if pts.len() == 1 {
        return pts[0].1;
    }
    fit_cubic(pts)
        .and_then(|s| s.eval(x))
        .expect("line knots are distinct and x is inside the hull")
}

/// Grid under construction: values plus a known-mask.
struct Fill {
    dims: [usize; 3],
    coords: [Vec<f64>; 3],
    th: Vec<f64>,
    e: Vec<f64>,
    known: Vec<bool>,
}

impl Fill {
    /// Flat indices of the line through `(i, j, k)` along `axis`.
    fn line(&self, axis: usize, fixed: [usize; 3]) -> Vec<usize> {
        (0..self.dims[axis])
            .map(|t| {
                let mut ix = fixed;
                ix[axis] = t;
                PerfSurface::flat(self.dims, ix[0], ix[1], ix[2])
            })
            .collect()
    }

    fn lines(&self, axis: usize) -> Vec<Vec<usize>> {
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let mut out = Vec::new();
        for u in 0..self.dims[others[0]] {
            for v in 0..self.dims[others[1]] {
                let mut fixed = [0; 3];
                fixed[others[0]] = u;
                fixed[others[1]] = v;
                out.push(self.line(axis, fixed));
            }
        }
        out
    }

    /// Spline-fills unknown nodes lying between known nodes of the same line.
    fn interpolate_pass(&mut self, axis: usize) -> bool {
        let mut changed = false;
        for line in self.lines(axis) {
            let known: Vec<usize> = (0..line.len()).filter(|&t| self.known[line[t]]).collect();
            if known.len() < 2 || known.len() == line.len() {
                continue;
            }
            let c = &self.coords[axis];
            let th = fit_cubic(&known.iter().map(|&t| (c[t], self.th[line[t]])).collect::<Vec<_>>())
                .expect("distinct knots");
            let e = fit_cubic(&known.iter().map(|&t| (c[t], self.e[line[t]])).collect::<Vec<_>>())
                .expect("distinct knots");
            let (lo, hi) = (known[0], known[known.len() - 1]);
            for t in lo + 1..hi {
                let f = line[t];
                if !self.known[f] {
                    self.th[f] = th.eval(c[t]).expect("inside line hull");
                    self.e[f] = e.eval(c[t]).expect("inside line hull");
                    self.known[f] = true;
                    changed = true;
                }
            }
        }
        changed
    }

    /// Fills unknown nodes beyond a line's known range with the nearest known
    /// value on that line (lower index on ties).
    fn extend_pass(&mut self, axis: usize) -> bool {
        let mut changed = false;
        for line in self.lines(axis) {
            let known: Vec<usize> = (0..line.len()).filter(|&t| self.known[line[t]]).collect();
            if known.is_empty() || known.len() == line.len() {
                continue;
            }
            for t in 0..line.len() {
                if self.known[line[t]] {
                    continue;
                }
                let src = *known
                    .iter()
                    .min_by_key(|&&s| (s.abs_diff(t), s))
                    .expect("non-empty");
                self.th[line[t]] = self.th[line[src]];
                self.e[line[t]] = self.e[line[src]];
                changed = true;
            }
            for &f in &line {
                self.known[f] = true;
            }
        }
        changed
    }

    fn complete(&mut self) {
        loop {
            while (0..3).fold(false, |acc, a| self.interpolate_pass(a) | acc) {}
            if self.known.iter().all(|&k| k) {
                return;
            }
            // Nothing left to interpolate; extend along the first axis that
            // can make progress and go back to interpolating.
            if !(0..3).any(|a| self.extend_pass(a)) {
                return;
            }
        }
    }
}

/// Fits throughput and energy surfaces to `(θ, throughput Mbps, energy
/// J/100MiB)` samples.
///
/// Repeated nodes are averaged. Nodes of the represented grid without
/// samples are filled by natural-spline passes along concurrency, then
/// parallelism, then block size; nodes outside every line's sampled range get
/// the nearest sampled value on their line. An axis with a single
/// represented level is held constant.
pub fn fit_surface(samples: &[(ParamSetting, f64, f64)]) -> Result<PerfSurface, SurfaceError> {
    if samples.is_empty() {
        return Err(SurfaceError::InsufficientData);
    }
    if let Some(s) = samples.iter().find(|s| !s.1.is_finite() || !s.2.is_finite()) {
        return Err(SurfaceError::NonFinite(s.0));
    }

    let mut sums: BTreeMap<[usize; 3], (f64, f64, usize)> = BTreeMap::new();
    for (theta, th, e) in samples {
        let acc = sums.entry(theta.indices()).or_insert((0.0, 0.0, 0));
        acc.0 += th;
        acc.1 += e;
        acc.2 += 1;
    }
    let levels: [Vec<usize>; 3] = std::array::from_fn(|a| {
        let mut l: Vec<usize> = sums.keys().map(|ix| ix[a]).collect();
        l.sort_unstable();
        l.dedup();
        l
    });
    let dims = [levels[0].len(), levels[1].len(), levels[2].len()];
    let n = dims.iter().product();
    let mut fill = Fill {
        dims,
        coords: std::array::from_fn(|a| levels[a].iter().map(|&l| l as f64).collect()),
        th: vec![0.0; n],
        e: vec![0.0; n],
        known: vec![false; n],
    };
    for (ix, (th, e, count)) in &sums {
        let pos: [usize; 3] =
            std::array::from_fn(|a| levels[a].binary_search(&ix[a]).expect("level present"));
        let f = PerfSurface::flat(dims, pos[0], pos[1], pos[2]);
        fill.th[f] = th / *count as f64;
        fill.e[f] = e / *count as f64;
        fill.known[f] = true;
    }
    let sampled = fill.known.clone();
    fill.complete();
    debug_assert!(fill.known.iter().all(|&k| k));

    let cc_lines = |grid: &[f64]| -> Vec<Option<CubicSpline1D>> {
        (0..dims[1] * dims[2])
            .map(|line| {
                (dims[0] >= 2).then(|| {
                    let pts: Vec<(f64, f64)> = (0..dims[0])
                        .map(|i| (levels[0][i] as f64, grid[i * dims[1] * dims[2] + line]))
                        .collect();
                    fit_cubic(&pts).expect("distinct knots")
                })
            })
            .collect()
    };
    let th_cc = cc_lines(&fill.th);
    let e_cc = cc_lines(&fill.e);

    Ok(PerfSurface {
        levels,
        th: fill.th,
        e: fill.e,
        sampled,
        th_cc,
        e_cc,
    })
}

/// Interpolated `(throughput, energy)` at raw parameter values.
pub fn eval_surface(s: &PerfSurface, cc: f64, p: f64, bs: f64) -> Result<(f64, f64), SurfaceError> {
    s.eval(cc, p, bs)
}
