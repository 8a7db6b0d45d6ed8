//! Fixed-size parameter predictor.
//!
//! A 6-16-3 network (tanh hidden layer, linear outputs) maps request and
//! network features to level indices of `(cc, p, bs)`. The weight count never
//! depends on the training set, so every model serializes to the same
//! 1412-byte blob and device updates stay constant-size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corelog::{Axis, NetInterface, ParamSetting, TransferLog};

pub const INPUTS: usize = 6;
pub const HIDDEN: usize = 16;
pub const OUTPUTS: usize = 3;
/// `6*16 + 16 + 16*3 + 3`.
pub const WEIGHT_COUNT: usize = INPUTS * HIDDEN + HIDDEN + HIDDEN * OUTPUTS + OUTPUTS;
/// Feature means followed by feature standard deviations.
pub const STANDARDIZATION_COUNT: usize = 2 * INPUTS;
pub const MAGIC: [u8; 4] = *b"FHLA";
/// Header (magic, version, count) plus all floats.
pub const BLOB_LEN: usize = 12 + 8 * (WEIGHT_COUNT + STANDARDIZATION_COUNT);
/// Minimum rows accepted by [`train`].
pub const MIN_TRAIN_ROWS: usize = 10;

const B1: usize = INPUTS * HIDDEN;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + HIDDEN * OUTPUTS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("insufficient data: {0} training rows, need at least {MIN_TRAIN_ROWS}")]
    InsufficientData(usize),
    #[error("feature `{name}` must be positive and finite, got {value}")]
    Feature { name: &'static str, value: f64 },
    #[error("empty evaluation set")]
    EmptySet,
    #[error("length mismatch: {actual} actual values, {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("actual values have zero variance")]
    ZeroVariance,
    #[error("need at least k = {k} rows, got {rows}")]
    TooFewNeighbours { k: usize, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlobError {
    #[error("blob truncated: {0} bytes, expected {BLOB_LEN}")]
    Truncated(usize),
    #[error("blob has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("weight count {0}, expected {WEIGHT_COUNT}")]
    WrongCount(u32),
}

/// Model inputs: `[log10 fs, log10 n_files, log10 t_rtt, log10 bw,
/// cellular flag, cpu class]`, unstandardized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; INPUTS]);

impl FeatureVector {
    /// `fs` in bytes, `rtt` in ms, `bw` in Mbps.
    pub fn new(
        fs: f64,
        n_files: u64,
        rtt: f64,
        bw: f64,
        net_if: NetInterface,
        cpu_class: u32,
    ) -> Result<Self, LearnError> {
        for (name, value) in [("fs", fs), ("n_files", n_files as f64), ("rtt", rtt), ("bw", bw)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(LearnError::Feature { name, value });
            }
        }
        Ok(FeatureVector([
            fs.log10(),
            (n_files as f64).log10(),
            rtt.log10(),
            bw.log10(),
            f64::from(u8::from(net_if == NetInterface::Cellular)),
            f64::from(cpu_class),
        ]))
    }

    pub fn from_log(log: &TransferLog) -> Result<Self, LearnError> {
        Self::new(log.fs, log.n_files, log.t_rtt, log.bw, log.net_if, log.device.cpu_class)
    }

    pub fn values(&self) -> &[f64; INPUTS] {
        &self.0
    }
}

/// Trained predictor. Cheap to clone and immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    version: u32,
    weights: [f64; WEIGHT_COUNT],
    mean: [f64; INPUTS],
    std: [f64; INPUTS],
}

impl LearnedModel {
    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn with_version(mut self, version: u32) -> Self {
        self.version = version;
        self
    }

    /// Flat weights: input-to-hidden matrix (row per hidden unit), hidden
    /// biases, hidden-to-output matrix (row per output), output biases.
    pub fn weights(&self) -> &[f64; WEIGHT_COUNT] {
        &self.weights
    }

    pub fn feature_mean(&self) -> &[f64; INPUTS] {
        &self.mean
    }

    pub fn feature_std(&self) -> &[f64; INPUTS] {
        &self.std
    }

    fn standardize(&self, f: &FeatureVector) -> [f64; INPUTS] {
        standardize(f, &self.mean, &self.std)
    }

    /// Raw output layer: real-valued level indices for cc, p and bs.
    pub fn forward(&self, f: &FeatureVector) -> [f64; OUTPUTS] {
        let x = self.standardize(f);
        let h = hidden(&self.weights, &x);
        output(&self.weights, &h)
    }
}

fn hidden(w: &[f64; WEIGHT_COUNT], x: &[f64; INPUTS]) -> [f64; HIDDEN] {
    std::array::from_fn(|j| {
        let row = &w[j * INPUTS..(j + 1) * INPUTS];
        (w[B1 + j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh()
    })
}

fn output(w: &[f64; WEIGHT_COUNT], h: &[f64; HIDDEN]) -> [f64; OUTPUTS] {
    std::array::from_fn(|k| {
        let row = &w[W2 + k * HIDDEN..W2 + (k + 1) * HIDDEN];
        w[B2 + k] + row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    })
}

/// Maps raw outputs to a setting: each output is rounded to the nearest level
/// index and clamped into the axis range.
pub fn params_from_outputs(raw: [f64; OUTPUTS]) -> ParamSetting {
    let idx = std::array::from_fn(|a| {
        let max = Axis::ALL[a].level_count() - 1;
        let r = raw[a].round();
        if r.is_nan() || r <= 0.0 {
            0
        } else {
            (r as usize).min(max)
        }
    });
    ParamSetting::from_indices(idx).expect("clamped indices are valid")
}

pub fn predict(m: &LearnedModel, f: &FeatureVector) -> ParamSetting {
    params_from_outputs(m.forward(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            learning_rate: 0.2,
        }
    }
}

/// Trains by full-batch gradient descent on mean squared error of the level
/// indices. An epoch that increases the loss is undone and the step size
/// halved for the rest of the run.
///
/// Without a prior, weights start from `U(-0.5, 0.5)` drawn from `seed` and
/// the feature standardization is computed from `rows`; the result has
/// version 1. With a prior, training continues from its weights and keeps its
/// standardization, and the version is the prior's plus one.
pub fn train(
    rows: &[(FeatureVector, ParamSetting)],
    seed: u64,
    prior: Option<&LearnedModel>,
    cfg: &TrainConfig,
) -> Result<LearnedModel, LearnError> {
    if rows.len() < MIN_TRAIN_ROWS {
        return Err(LearnError::InsufficientData(rows.len()));
    }
    let mut model = match prior {
        Some(p) => LearnedModel {
            version: p.version.saturating_add(1),
            ..p.clone()
        },
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
            let (mean, std) = feature_stats(rows.iter().map(|r| &r.0));
            LearnedModel {
                version: 1,
                weights,
                mean,
                std,
            }
        }
    };

    // Identical rows contribute identical gradients; fold them into weights.
    let mut distinct: Vec<([f64; INPUTS], [f64; OUTPUTS], f64)> = Vec::new();
    {
        use std::collections::HashMap;
        let mut seen: HashMap<([u64; INPUTS], ParamSetting), usize> = HashMap::new();
        for (f, theta) in rows {
            let key = (f.0.map(|v| (v + 0.0).to_bits()), *theta);
            match seen.get(&key) {
                Some(&i) => distinct[i].2 += 1.0,
                None => {
                    seen.insert(key, distinct.len());
                    let target = theta.indices().map(|i| i as f64);
                    distinct.push((model.standardize(f), target, 1.0));
                }
            }
        }
    }
    let total = rows.len() as f64;

    let w = &mut model.weights;
    let mut grad = [0.0; WEIGHT_COUNT];
    let mut prev_w = *w;
    let mut prev_grad = grad;
    let mut prev_loss = f64::INFINITY;
    let mut rate = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        grad.fill(0.0);
        let mut loss = 0.0;
        for (x, t, count) in &distinct {
            let h = hidden(w, x);
            let o = output(w, &h);
            let scale = 2.0 * count / total;
            let d_out: [f64; OUTPUTS] = std::array::from_fn(|k| scale * (o[k] - t[k]));
            loss += (0..OUTPUTS).map(|k| (o[k] - t[k]).powi(2)).sum::<f64>() * count / total;
            for k in 0..OUTPUTS {
                grad[B2 + k] += d_out[k];
                for j in 0..HIDDEN {
                    grad[W2 + k * HIDDEN + j] += d_out[k] * h[j];
                }
            }
            for j in 0..HIDDEN {
                let back: f64 = (0..OUTPUTS).map(|k| d_out[k] * w[W2 + k * HIDDEN + j]).sum();
                let d_h = back * (1.0 - h[j] * h[j]);
                grad[B1 + j] += d_h;
                for i in 0..INPUTS {
                    grad[j * INPUTS + i] += d_h * x[i];
                }
            }
        }
        // A step that raised the loss is retried from its start at half the rate.
        if !(loss <= prev_loss) {
            *w = prev_w;
            grad = prev_grad;
            rate *= 0.5;
        } else {
            prev_w = *w;
            prev_grad = grad;
            prev_loss = loss;
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= rate * gi;
        }
    }
    Ok(model)
}

/// Standardized features; a feature with zero deviation is always 0, so
/// features that never varied in training cannot move the output.
fn standardize(f: &FeatureVector, mean: &[f64; INPUTS], std: &[f64; INPUTS]) -> [f64; INPUTS] {
    std::array::from_fn(|i| if std[i] > 0.0 { (f.0[i] - mean[i]) / std[i] } else { 0.0 })
}

/// Per-feature mean and population standard deviation.
fn feature_stats<'a>(rows: impl Iterator<Item = &'a FeatureVector> + Clone) -> ([f64; INPUTS], [f64; INPUTS]) {
    let n = rows.clone().count() as f64;
    let mut mean = [0.0; INPUTS];
    for f in rows.clone() {
        for i in 0..INPUTS {
            mean[i] += f.0[i] / n;
        }
    }
    let mut var = [0.0; INPUTS];
    for f in rows {
        for i in 0..INPUTS {
            var[i] += (f.0[i] - mean[i]).powi(2) / n;
        }
    }
    (mean, var.map(f64::sqrt))
}

/// Fraction of rows whose prediction matches the target on all three axes.
pub fn accuracy(m: &LearnedModel, rows: &[(FeatureVector, ParamSetting)]) -> Result<f64, LearnError> {
    if rows.is_empty() {
        return Err(LearnError::EmptySet);
    }
    let hits = rows.iter().filter(|(f, t)| predict(m, f) == *t).count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, LearnError> {
    if actual.len() != predicted.len() {
        return Err(LearnError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(LearnError::EmptySet);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(LearnError::ZeroVariance);
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, f)| (y - f).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// k-nearest-neighbour baseline on standardized features.
///
/// Each axis is decided by an inverse-distance-weighted vote over the `k`
/// nearest rows (ties in distance go to the earlier row). Exact matches
/// outvote everything else. Vote ties go to the smaller level.
pub fn knn_oracle(
    train_rows: &[(FeatureVector, ParamSetting)],
    f: &FeatureVector,
    k: usize,
) -> Result<ParamSetting, LearnError> {
    if k == 0 || train_rows.len() < k {
        return Err(LearnError::TooFewNeighbours {
            k,
            rows: train_rows.len(),
        });
    }
    let (mean, std) = feature_stats(train_rows.iter().map(|r| &r.0));
    let z = |v: &FeatureVector| standardize(v, &mean, &std);
    let q = z(f);
    let mut dist: Vec<(f64, usize)> = train_rows
        .iter()
        .enumerate()
        .map(|(i, (x, _))| {
            let d = z(x).iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &dist[..k];
    let exact = nearest[0].0 == 0.0;

    let idx = std::array::from_fn(|a| {
        let mut votes = vec![0.0; Axis::ALL[a].level_count()];
        for &(d, i) in nearest {
            let w = match (exact, d == 0.0) {
                (true, true) => 1.0,
                (true, false) => 0.0,
                (false, _) => 1.0 / d,
            };
            votes[train_rows[i].1.indices()[a]] += w;
        }
        let mut best = 0;
        for (level, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = level;
            }
        }
        best
    });
    Ok(ParamSetting::from_indices(idx).expect("levels come from valid settings"))
}

/// Encodes `m` as the fixed 1412-byte wire blob.
pub fn serialize(m: &LearnedModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(BLOB_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&m.version.to_le_bytes());
    out.extend_from_slice(&(WEIGHT_COUNT as u32).to_le_bytes());
    for v in m.weights.iter().chain(&m.mean).chain(&m.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(out.len(), BLOB_LEN);
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<LearnedModel, BlobError> {
    if bytes.len() < 12 {
        return Err(BlobError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(BlobError::BadMagic(magic));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    let count = u32_at(8);
    if count as usize != WEIGHT_COUNT {
        return Err(BlobError::WrongCount(count));
    }
    match bytes.len().cmp(&BLOB_LEN) {
        std::cmp::Ordering::Less => return Err(BlobError::Truncated(bytes.len())),
        std::cmp::Ordering::Greater => return Err(BlobError::TrailingBytes(bytes.len() - BLOB_LEN)),
        std::cmp::Ordering::Equal => {}
    }
    let f64_at = |i: usize| {
        let o = 12 + 8 * i;
        f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
    };
    Ok(LearnedModel {
        version,
        weights: std::array::from_fn(f64_at),
        mean: std::array::from_fn(|i| f64_at(WEIGHT_COUNT + i)),
        std: std::array::from_fn(|i| f64_at(WEIGHT_COUNT + INPUTS + i)),
    })
}
