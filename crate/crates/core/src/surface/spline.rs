use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("need at least 2 points, got {0}")]
    InsufficientData(usize),
    #[error("duplicate knot at x = {0}")]
    DuplicateKnot(f64),
    #[error("non-finite point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("x = {x} outside knot range [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },
}

/// Natural cubic spline: piecewise cubics through every point, continuous up
/// to the second derivative, with zero curvature at both ends.
///
/// Piece `i` is stored in local form
/// `f_i(x) = a + b (x - x_i) + c (x - x_i)^2 + d (x - x_i)^3` on
/// `[x_i, x_{i+1}]`; [`CubicSpline1D::monomial_coeffs`] gives the same pieces
/// in plain powers of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline1D {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivative at each knot.
    moments: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
}

/// Fits the natural cubic spline through `points` (any order).
pub fn fit_cubic(points: &[(f64, f64)]) -> Result<CubicSpline1D, SplineError> {
    if points.len() < 2 {
        return Err(SplineError::InsufficientData(points.len()));
    }
    if let Some(&(x, y)) = points.iter().find(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(SplineError::NonFinite(x, y));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(SplineError::DuplicateKnot(w[0].0));
    }
    let (knots, values): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(CubicSpline1D::from_sorted(knots, values))
}

impl CubicSpline1D {
    /// `knots` strictly increasing, same length as `values`, at least 2.
    fn from_sorted(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut moments = vec![0.0; n];

        if n > 2 {
            // Tridiagonal system for interior moments M_1..M_{n-2}:
            // h_{i-1} M_{i-1} + 2 (h_{i-1} + h_i) M_i + h_i M_{i+1} = r_i
            // with M_0 = M_{n-1} = 0. Thomas algorithm; the matrix is
            // strictly diagonally dominant so no pivoting is needed.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                diag[k] = 2.0 * (h[i - 1] + h[i]);
                rhs[k] = 6.0
                    * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            for k in 1..m {
                let w = h[k] / diag[k - 1];
                diag[k] -= w * h[k];
                rhs[k] -= w * rhs[k - 1];
            }
            moments[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                moments[k + 1] = (rhs[k] - h[k + 1] * moments[k + 2]) / diag[k];
            }
        }

        let coeffs = (0..n - 1)
            .map(|i| {
                let hi = h[i];
                [
                    values[i],
                    (values[i + 1] - values[i]) / hi - hi * (2.0 * moments[i] + moments[i + 1]) / 6.0,
                    moments[i] / 2.0,
                    (moments[i + 1] - moments[i]) / (6.0 * hi),
                ]
            })
            .collect();

        CubicSpline1D {
            knots,
            values,
            moments,
            coeffs,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Second derivative at each knot.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// Local-form coefficients `[a, b, c, d]` per interval.
    pub fn local_coeffs(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    /// Coefficients `[x0, x1, x2, x3]` of `x0 + x1 x + x2 x^2 + x3 x^3` per
    /// interval.
    pub fn monomial_coeffs(&self) -> Vec<[f64; 4]> {
        self.coeffs
            .iter()
            .zip(&self.knots)
            .map(|(&[a, b, c, d], &s)| {
                [
                    a - b * s + c * s * s - d * s * s * s,
                    b - 2.0 * c * s + 3.0 * d * s * s,
                    c - 3.0 * d * s,
                    d,
                ]
            })
            .collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Index of the piece covering `x`; the last knot belongs to the last
    /// piece.
    fn piece(&self, x: f64) -> Result<usize, SplineError> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(SplineError::Extrapolation { x, lo, hi });
        }
        let i = self.knots.partition_point(|&k| k <= x);
        Ok(i.saturating_sub(1).min(self.coeffs.len() - 1))
    }

    /// Value at `x`. Extrapolation is an error.
    pub fn eval(&self, x: f64) -> Result<f64, SplineError> {
        let i = self.piece(x)?;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        Ok(a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.moments[i] + (b * b * b - b) * self.moments[i + 1]) * h * h
                / 6.0)
    }

    /// Second derivative at `x` using the piece `piece` (which need not be
    /// the piece containing `x`; used to compare one-sided values at knots).
    pub fn second_derivative_of_piece(&self, piece: usize, x: f64) -> f64 {
        let [_, _, c, d] = self.coeffs[piece];
        2.0 * c + 6.0 * d * (x - self.knots[piece])
    }

    /// Value of piece `piece` at `x`, evaluated from its local coefficients.
    pub fn value_of_piece(&self, piece: usize, x: f64) -> f64 {
        let [a, b, c, d] = self.coeffs[piece];
        let t = x - self.knots[piece];
        a + t * (b + t * (c + t * d))
    }
}

/// Evaluates `s` at `x`; fails outside the knot range.
pub fn eval_spline(s: &CubicSpline1D, x: f64) -> Result<f64, SplineError> {
    s.eval(x)
}
