/// Trapezoidal integral of `max(P - base, 0)` over `(t, P)` samples.
pub fn dynamic_energy(samples: &[(f64, f64)], base: f64) -> f64 {
    let mut total = 0.0;
    for i in 1..samples.len() {
        let (t0, p0) = samples[i - 1];
        let (t1, p1) = samples[i];
        let d0 = if p0 > base { p0 - base } else { 0.0 };
        let d1 = if p1 > base { p1 - base } else { 0.0 };
        total += (t1 - t0) * (d0 + d1) / 2.0;
    }
    total
}

/// Trapezoidal integral of `P` itself.
pub fn raw_energy(samples: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for i in 1..samples.len() {
        total += (samples[i].0 - samples[i - 1].0) * (samples[i].1 + samples[i - 1].1) / 2.0;
    }
    total
}
