//! Natural cubic splines from the full constraint system.

use crate::linalg::solve_dense;

/// Local-form coefficients `[a, b, c, d]` of
/// `a + b t + c t^2 + d t^3`, `t = x - x_i`, for every interval of the
/// natural cubic spline through `points` (sorted by x, distinct).
///
/// All `4 (n - 1)` unknowns are solved at once from: interpolation at both
/// ends of each piece, matching first and second derivatives at interior
/// knots, and zero second derivative at the two end knots.
pub fn natural_spline_dense(points: &[(f64, f64)]) -> Vec<[f64; 4]> {
    let n = points.len();
    assert!(n >= 2);
    let pieces = n - 1;
    let m = 4 * pieces;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    let mut row = 0;
    let h = |i: usize| points[i + 1].0 - points[i].0;

    for i in 0..pieces {
        let c = 4 * i;
        // f_i(x_i) = y_i
        a[row][c] = 1.0;
        b[row] = points[i].1;
        row += 1;
        // f_i(x_{i+1}) = y_{i+1}
        let t = h(i);
        a[row][c] = 1.0;
        a[row][c + 1] = t;
        a[row][c + 2] = t * t;
        a[row][c + 3] = t * t * t;
        b[row] = points[i + 1].1;
        row += 1;
    }
    for i in 0..pieces - 1 {
        let (c, next) = (4 * i, 4 * (i + 1));
        let t = h(i);
        // f_i'(x_{i+1}) - f_{i+1}'(x_{i+1}) = 0
        a[row][c + 1] = 1.0;
        a[row][c + 2] = 2.0 * t;
        a[row][c + 3] = 3.0 * t * t;
        a[row][next + 1] = -1.0;
        row += 1;
        // f_i''(x_{i+1}) - f_{i+1}''(x_{i+1}) = 0
        a[row][c + 2] = 2.0;
        a[row][c + 3] = 6.0 * t;
        a[row][next + 2] = -2.0;
        row += 1;
    }
    // f_0''(x_0) = 0
    a[row][2] = 2.0;
    row += 1;
    // f_last''(x_n) = 0
    let last = 4 * (pieces - 1);
    a[row][last + 2] = 2.0;
    a[row][last + 3] = 6.0 * h(pieces - 1);
    row += 1;
    assert_eq!(row, m);

    let x = solve_dense(a, b);
    x.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
}

/// Evaluates `c0 + c1 t + c2 t^2 + c3 t^3` in Horner form.
pub fn horner(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

/// Dense spline evaluation: locate the interval by linear scan, then Horner.
/// `x` must lie within the knots.
pub fn eval_dense(points: &[(f64, f64)], coeffs: &[[f64; 4]], x: f64) -> f64 {
    let n = points.len();
    assert!(x >= points[0].0 && x <= points[n - 1].0, "x outside knots");
    let mut i = 0;
    while i + 1 < n - 1 && x >= points[i + 1].0 {
        i += 1;
    }
    horner(&coeffs[i], x - points[i].0)
}

/// Interpolates a full `[cc][p][bs]` grid at `x = [x_cc, x_p, x_bs]`, with
/// knots `axes`, by collapsing parallelism first, then concurrency, then
/// block size. Axes with a single knot are taken as constant.
pub fn tensor_interp(axes: &[Vec<f64>; 3], grid: &[f64], x: [f64; 3]) -> f64 {
    let [n0, n1, n2] = [axes[0].len(), axes[1].len(), axes[2].len()];
    assert_eq!(grid.len(), n0 * n1 * n2);
    let line = |knots: &[f64], values: Vec<f64>, at: f64| -> f64 {
        if knots.len() == 1 {
            return values[0];
        }
        let pts: Vec<(f64, f64)> = knots.iter().copied().zip(values).collect();
        let c = natural_spline_dense(&pts);
        eval_dense(&pts, &c, at)
    };
    // Over p for every (cc, bs).
    let mut by_cc_bs = vec![0.0; n0 * n2];
    for i in 0..n0 {
        for k in 0..n2 {
            let vals = (0..n1).map(|j| grid[(i * n1 + j) * n2 + k]).collect();
            by_cc_bs[i * n2 + k] = line(&axes[1], vals, x[1]);
        }
    }
    // Over cc for every bs.
    let by_bs: Vec<f64> = (0..n2)
        .map(|k| line(&axes[0], (0..n0).map(|i| by_cc_bs[i * n2 + k]).collect(), x[0]))
        .collect();
    line(&axes[2], by_bs, x[2])
}
