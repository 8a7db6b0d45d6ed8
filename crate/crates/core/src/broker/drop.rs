use thiserror::Error;

/// Observed throughput below this fraction of the prediction counts as a drop.
pub const DROP_FRACTION: f64 = 0.5;
/// A drop must last at least this long, and windows must cover at least this
/// much time.
pub const DROP_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DropError {
    #[error("window covers {0} s, need at least {DROP_SECONDS} s")]
    InsufficientWindow(f64),
    #[error("sample times must be finite and strictly increasing")]
    Malformed,
}

/// True iff throughput stayed below half of `predicted_th` for at least five
/// consecutive seconds of `window`.
///
/// `window` holds `(t seconds, Mbps)` samples. Each sample stands for the
/// interval since the previous one; the first stands for one spacing, so at
/// 1 Hz `k` samples cover `k` seconds.
pub fn detect_perf_drop(predicted_th: f64, window: &[(f64, f64)]) -> Result<bool, DropError> {
    if window.len() < 2 {
        return Err(DropError::InsufficientWindow(0.0));
    }
    if window.iter().any(|s| !s.0.is_finite())
        || window.windows(2).any(|w| w[1].0 <= w[0].0)
    {
        return Err(DropError::Malformed);
    }
    let first_span = window[1].0 - window[0].0;
    let covered = window[window.len() - 1].0 - window[0].0 + first_span;
    // Tolerate rounding in accumulated timestamps.
    if covered + 1e-9 < DROP_SECONDS {
        return Err(DropError::InsufficientWindow(covered));
    }
    let threshold = DROP_FRACTION * predicted_th;
    let mut run = 0.0;
    for (i, &(t, th)) in window.iter().enumerate() {
        let span = if i == 0 { first_span } else { t - window[i - 1].0 };
        if th < threshold {
            run += span;
            if run + 1e-9 >= DROP_SECONDS {
                return Ok(true);
            }
        } else {
            run = 0.0;
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> Vec<(f64, f64)> {
        values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect()
    }

    #[test]
    fn spec_cases() {
        assert!(!detect_perf_drop(40.0, &series(&[38.0; 10])).unwrap());
        assert!(detect_perf_drop(40.0, &series(&[10.0; 6])).unwrap());
        let alternating: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 10.0 } else { 35.0 }).collect();
        assert!(!detect_perf_drop(40.0, &series(&alternating)).unwrap());
    }

    #[test]
    fn run_must_be_consecutive() {
        let v = [10.0, 10.0, 10.0, 10.0, 30.0, 10.0, 10.0];
        assert!(!detect_perf_drop(40.0, &series(&v)).unwrap());
        assert!(detect_perf_drop(40.0, &series(&[30.0, 10.0, 10.0, 10.0, 10.0, 10.0])).unwrap());
        // Exactly half is not a drop.
        assert!(!detect_perf_drop(40.0, &series(&[20.0; 8])).unwrap());
    }

    #[test]
    fn window_checks() {
        assert!(matches!(
            detect_perf_drop(40.0, &series(&[10.0; 4])),
            Err(DropError::InsufficientWindow(w)) if w == 4.0
        ));
        assert!(detect_perf_drop(40.0, &[]).is_err());
        assert_eq!(
            detect_perf_drop(40.0, &[(0.0, 1.0), (0.0, 1.0), (1.0, 1.0)]),
            Err(DropError::Malformed)
        );
        // Irregular sampling: 2 Hz for 6 s.
        let fast: Vec<_> = (0..12).map(|i| (0.5 * i as f64, 5.0)).collect();
        assert!(detect_perf_drop(40.0, &fast).unwrap());
    }
}
