use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("power trace has {0} samples, at least 2 are required")]
    EmptyTrace(usize),
    #[error("malformed power trace: {0}")]
    MalformedTrace(String),
    #[error("{what} must be a finite non-negative value, got {value}")]
    Domain { what: &'static str, value: f64 },
}

/// One power-meter reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Seconds since an arbitrary epoch.
    pub t: f64,
    pub watts: f64,
}

/// Power sampled over a transfer window, together with the device's base
/// (idle, screen-on) power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace", into = "RawTrace")]
pub struct PowerTrace {
    samples: Vec<PowerSample>,
    p_base: f64,
    window: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RawTrace {
    samples: Vec<PowerSample>,
    p_base: f64,
    window: (f64, f64),
}

impl TryFrom<RawTrace> for PowerTrace {
    type Error = EnergyError;

    fn try_from(raw: RawTrace) -> Result<Self, Self::Error> {
        PowerTrace::with_window(raw.samples, raw.p_base, raw.window)
    }
}

impl From<PowerTrace> for RawTrace {
    fn from(t: PowerTrace) -> Self {
        RawTrace {
            samples: t.samples,
            p_base: t.p_base,
            window: t.window,
        }
    }
}

impl PowerTrace {
    /// Builds a trace whose window spans exactly the first and last sample.
    pub fn new(samples: Vec<PowerSample>, p_base: f64) -> Result<Self, EnergyError> {
        let window = match (samples.first(), samples.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0.0, 0.0),
        };
        Self::with_window(samples, p_base, window)
    }

    pub fn with_window(
        samples: Vec<PowerSample>,
        p_base: f64,
        window: (f64, f64),
    ) -> Result<Self, EnergyError> {
        if samples.len() < 2 {
            return Err(EnergyError::EmptyTrace(samples.len()));
        }
        if !(p_base.is_finite() && p_base >= 0.0) {
            return Err(EnergyError::Domain {
                what: "base power",
                value: p_base,
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || !s.watts.is_finite() || s.watts < 0.0 {
                return Err(EnergyError::MalformedTrace(format!(
                    "sample {i} is ({}, {} W)",
                    s.t, s.watts
                )));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(EnergyError::MalformedTrace(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        let (first, last) = (samples[0].t, samples[samples.len() - 1].t);
        if !(window.0 <= first && window.1 >= last) {
            return Err(EnergyError::MalformedTrace(format!(
                "window [{}, {}] does not cover samples [{first}, {last}]",
                window.0, window.1
            )));
        }
        Ok(PowerTrace {
            samples,
            p_base,
            window,
        })
    }

    /// Convenience constructor for `(t, watts)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)], p_base: f64) -> Result<Self, EnergyError> {
        Self::new(
            pairs
                .iter()
                .map(|&(t, watts)| PowerSample { t, watts })
                .collect(),
            p_base,
        )
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn p_base(&self) -> f64 {
        self.p_base
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Length of the transfer window in seconds.
    pub fn duration(&self) -> f64 {
        self.window.1 - self.window.0
    }

    /// Base energy over the window, `p_base * duration`.
    pub fn base_energy(&self) -> f64 {
        self.p_base * self.duration()
    }

    /// Mean dynamic power over the window.
    pub fn mean_dynamic_power(&self) -> f64 {
        let d = self.duration();
        if d > 0.0 {
            dynamic_energy(self) / d
        } else {
            0.0
        }
    }
}

/// Dynamic energy (joules): trapezoidal integral of the power drawn above
/// base power. Readings below base power count as zero.
///
/// A [`PowerTrace`] can only be built with at least two strictly increasing
/// samples, so this is infallible; use [`dynamic_energy_of`] for raw samples.
pub fn dynamic_energy(trace: &PowerTrace) -> f64 {
    trace
        .samples
        .windows(2)
        .map(|w| {
            let a = (w[0].watts - trace.p_base).max(0.0);
            let b = (w[1].watts - trace.p_base).max(0.0);
            0.5 * (a + b) * (w[1].t - w[0].t)
        })
        .sum()
}

/// Validating form of [`dynamic_energy`] for unchecked `(t, watts)` pairs.
pub fn dynamic_energy_of(pairs: &[(f64, f64)], p_base: f64) -> Result<f64, EnergyError> {
    PowerTrace::from_pairs(pairs, p_base).map(|t| dynamic_energy(&t))
}

/// Total, base and dynamic energy of one transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    e_total: f64,
    e_base: f64,
    e_dynamic: f64,
}

impl EnergyBreakdown {
    pub fn e_total(&self) -> f64 {
        self.e_total
    }

    pub fn e_base(&self) -> f64 {
        self.e_base
    }

    pub fn e_dynamic(&self) -> f64 {
        self.e_dynamic
    }

    /// Breakdown of a trace: base energy over the window plus dynamic energy.
    pub fn of_trace(trace: &PowerTrace) -> Self {
        // Both parts are non-negative by construction of the trace.
        total_energy(trace.base_energy(), dynamic_energy(trace))
            .expect("trace energies are non-negative")
    }
}

/// Combines base and dynamic energy into a breakdown, `total = base + dynamic`.
pub fn total_energy(e_base: f64, e_dynamic: f64) -> Result<EnergyBreakdown, EnergyError> {
    for (what, value) in [("base energy", e_base), ("dynamic energy", e_dynamic)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(EnergyError::Domain { what, value });
        }
    }
    Ok(EnergyBreakdown {
        e_total: e_base + e_dynamic,
        e_base,
        e_dynamic,
    })
}
