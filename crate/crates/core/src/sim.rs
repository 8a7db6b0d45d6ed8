//! Closed-form network and power simulator.
//!
//! Throughput of `s = cc * p` streams follows a window-limited saturation
//! curve with a congestion penalty past a knee; power is base power plus a
//! per-stream cost plus a utilization cost. [`simulate`] is exact and pure,
//! which makes it usable as ground truth. Measurement scatter is added only
//! by [`generate_logs`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, FlatConfig};
use crate::corelog::{
    dynamic_energy, DeviceInfo, NetInterface, ParamSetting, PowerSample, PowerTrace, TransferLog,
    TransferStatus, BYTES_PER_100MB,
};
use crate::learn::FeatureVector;
use crate::optimize::Objective;

/// Relative half-width of the uniform measurement noise in generated logs.
pub const NOISE: f64 = 0.05;
/// Congestion never cuts throughput below this fraction.
pub const CONGESTION_FLOOR: f64 = 0.5;

const KIB: u64 = 1024;
const MIB: u64 = 1024 * 1024;
/// Timestamp of the first generated log.
const EPOCH: i64 = 1_500_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid power model: {0}")]
    PowerModel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("coverage is empty")]
    EmptyCoverage,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetScenario {
    /// Link capacity, Mbps.
    pub bw_cap: f64,
    /// Round-trip time, ms. Also the per-file setup cost.
    pub rtt: f64,
    /// Per-stream window, bytes.
    pub window: f64,
    /// Stream count where congestion starts. May be infinite.
    pub knee: f64,
    /// Throughput penalty per stream beyond the knee.
    pub slope: f64,
    /// Seed for log generation noise.
    pub seed: u64,
    pub net_if: NetInterface,
    pub device: DeviceInfo,
}

impl Default for NetScenario {
    fn default() -> Self {
        NetScenario {
            bw_cap: 100.0,
            rtt: 100.0,
            window: 64_000.0,
            knee: 16.0,
            slope: 0.02,
            seed: 42,
            net_if: NetInterface::Wifi,
            device: DeviceInfo {
                model: "sim-phone".into(),
                os: "android-7".into(),
                cpu_class: 2,
                mem_bytes: 4 << 30,
                wifi_std: "802.11ac".into(),
            },
        }
    }
}

pub const SCENARIO_KEYS: &[&str] = &[
    "bw_cap", "rtt", "window", "knee", "slope", "seed", "net_if", "device_model", "cpu_class",
];
pub const POWER_KEYS: &[&str] = &["p_base", "stream_cost", "util_cost"];

impl NetScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Scenario(m.to_owned()));
        if !(self.bw_cap.is_finite() && self.bw_cap > 0.0) {
            return bad("bw_cap must be positive");
        }
        if !(self.rtt.is_finite() && self.rtt > 0.0) {
            return bad("rtt must be positive");
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return bad("window must be positive");
        }
        if !(self.knee >= 1.0) {
            return bad("knee must be at least 1");
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return bad("slope must be non-negative");
        }
        if self.device.model.is_empty() {
            return bad("device model must be non-empty");
        }
        Ok(())
    }

    /// Reads scenario keys from a flat config; missing keys keep defaults.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self, SimError> {
        let mut s = NetScenario::default();
        cfg.set("bw_cap", &mut s.bw_cap)?;
        cfg.set("rtt", &mut s.rtt)?;
        cfg.set("window", &mut s.window)?;
        cfg.set("knee", &mut s.knee)?;
        cfg.set("slope", &mut s.slope)?;
        cfg.set("seed", &mut s.seed)?;
        cfg.set("device_model", &mut s.device.model)?;
        cfg.set("cpu_class", &mut s.device.cpu_class)?;
        if let Some(v) = cfg.get_str("net_if") {
            s.net_if = match v {
                "wifi" => NetInterface::Wifi,
                "cellular" => NetInterface::Cellular,
                _ => {
                    return Err(ConfigError::Value {
                        key: "net_if".into(),
                        value: v.into(),
                    }
                    .into())
                }
            };
        }
        s.validate()?;
        Ok(s)
    }

    /// Fraction of the link one stream can fill.
    pub fn stream_share(&self) -> f64 {
        (8.0 * self.window * 1e-6 / (self.bw_cap * self.rtt * 1e-3)).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// Base power, W.
    pub p_base: f64,
    /// Power per active stream, W.
    pub stream_cost: f64,
    /// Power at full link utilization, W.
    pub util_cost: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            p_base: 2.0,
            stream_cost: 0.05,
            util_cost: 1.5,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if [self.p_base, self.stream_cost, self.util_cost]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(SimError::PowerModel("all coefficients must be finite and non-negative".into()))
        }
    }

    pub fn from_config(cfg: &FlatConfig) -> Result<Self, SimError> {
        let mut m = PowerModel::default();
        cfg.set("p_base", &mut m.p_base)?;
        cfg.set("stream_cost", &mut m.stream_cost)?;
        cfg.set("util_cost", &mut m.util_cost)?;
        m.validate()?;
        Ok(m)
    }
}

/// Parses a scenario file holding both scenario and power-model keys.
pub fn load_config(text: &str) -> Result<(NetScenario, PowerModel), SimError> {
    let cfg: FlatConfig = text.parse()?;
    let known: Vec<&str> = SCENARIO_KEYS.iter().chain(POWER_KEYS).copied().collect();
    cfg.deny_unknown(&known)?;
    Ok((NetScenario::from_config(&cfg)?, PowerModel::from_config(&cfg)?))
}

/// Outcome of one simulated transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Steady-state throughput, Mbps.
    pub throughput: f64,
    /// Wall time including per-file setup, s.
    pub duration: f64,
    /// Constant transfer power, W.
    pub power: f64,
    /// 1 Hz power trace over `[0, duration]`.
    pub trace: PowerTrace,
    /// Total energy per 100 MiB moved, J.
    pub e_per_100mb: f64,
}

fn steady_throughput(scn: &NetScenario, theta: &ParamSetting) -> f64 {
    let s = f64::from(theta.streams());
    let raw = scn.bw_cap * (1.0 - (1.0 - scn.stream_share()).powf(s));
    let bs = f64::from(theta.bs());
    let block = bs / (bs + 1024.0);
    let congestion = if s <= scn.knee {
        1.0
    } else {
        (1.0 - scn.slope * (s - scn.knee)).max(CONGESTION_FLOOR)
    };
    raw * block * congestion
}

fn transfer_power(scn: &NetScenario, pm: &PowerModel, theta: &ParamSetting, th: f64) -> f64 {
    let s = f64::from(theta.streams());
    pm.p_base + pm.stream_cost * s.min(2.0 * scn.knee) + pm.util_cost * th / scn.bw_cap
}

fn wall_time(scn: &NetScenario, theta: &ParamSetting, sizes: &[u64], th: f64) -> f64 {
    let bits: f64 = sizes.iter().map(|&b| b as f64 * 8e-6).sum();
    let rounds = sizes.len().div_ceil(theta.cc() as usize) as f64;
    bits / th + rounds * scn.rtt * 1e-3
}

/// Sample times at 1 Hz from 0, plus the end point when it is not whole.
fn sample_times(duration: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..)
        .map(f64::from)
        .take_while(|&x| x < duration)
        .collect();
    t.push(duration);
    t
}

/// Simulates transferring `sizes` (bytes) with `theta`.
pub fn simulate(
    scn: &NetScenario,
    pm: &PowerModel,
    theta: &ParamSetting,
    sizes: &[u64],
) -> Result<SimOutcome, SimError> {
    scn.validate()?;
    pm.validate()?;
    if sizes.is_empty() {
        return Err(SimError::EmptyDataset);
    }
    let throughput = steady_throughput(scn, theta);
    let duration = wall_time(scn, theta, sizes, throughput);
    let power = transfer_power(scn, pm, theta, throughput);
    let samples = sample_times(duration)
        .into_iter()
        .map(|t| PowerSample { t, watts: power })
        .collect();
    let trace = PowerTrace::new(samples, pm.p_base).expect("increasing non-negative samples");
    let bytes: f64 = sizes.iter().map(|&b| b as f64).sum();
    Ok(SimOutcome {
        throughput,
        duration,
        power,
        trace,
        e_per_100mb: power * duration * BYTES_PER_100MB / bytes,
    })
}

/// File-size classes of the synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetClass {
    Html,
    Image,
    VideoSmall,
}

impl DatasetClass {
    pub const ALL: [DatasetClass; 3] = [DatasetClass::Html, DatasetClass::Image, DatasetClass::VideoSmall];

    /// Mean file size in bytes.
    pub fn mean_size(self) -> u64 {
        match self {
            DatasetClass::Html => 112 * KIB,
            DatasetClass::Image => 27 * MIB / 10,
            DatasetClass::VideoSmall => 152 * MIB,
        }
    }

    pub fn file_count(self) -> usize {
        match self {
            DatasetClass::Html => 1000,
            DatasetClass::Image => 40,
            DatasetClass::VideoSmall => 4,
        }
    }

    /// File sizes of the class dataset; every file has the mean size.
    pub fn sizes(self) -> Vec<u64> {
        vec![self.mean_size(); self.file_count()]
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetClass::Html => "html",
            DatasetClass::Image => "image",
            DatasetClass::VideoSmall => "video_small",
        }
    }
}

/// Simulated logs for every `theta` in `coverage`, every dataset class and
/// `repeats` repetitions, in that nesting order.
///
/// Each log scales throughput by an independent `U(1 - 5%, 1 + 5%)` factor
/// (capped at the link capacity) and every power sample by its own factor of
/// the same range. `pw` and `energy` are computed from the noisy trace.
pub fn generate_logs(
    scn: &NetScenario,
    pm: &PowerModel,
    coverage: &[ParamSetting],
    repeats: usize,
    seed: u64,
) -> Result<Vec<TransferLog>, SimError> {
    scn.validate()?;
    pm.validate()?;
    if coverage.is_empty() {
        return Err(SimError::EmptyCoverage);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(coverage.len() * DatasetClass::ALL.len() * repeats);
    for theta in coverage {
        let clean_th = steady_throughput(scn, theta);
        for class in DatasetClass::ALL {
            for _ in 0..repeats {
                let th = (clean_th * rng.gen_range(1.0 - NOISE..=1.0 + NOISE)).min(scn.bw_cap);
                let index = out.len();
                out.push(make_log(scn, pm, theta, class, th, index, || {
                    rng.gen_range(1.0 - NOISE..=1.0 + NOISE)
                }));
            }
        }
    }
    Ok(out)
}

/// The log a noise-free simulated transfer of `class` with `theta` would
/// produce.
pub fn clean_log(
    scn: &NetScenario,
    pm: &PowerModel,
    theta: &ParamSetting,
    class: DatasetClass,
) -> Result<TransferLog, SimError> {
    scn.validate()?;
    pm.validate()?;
    Ok(make_log(scn, pm, theta, class, steady_throughput(scn, theta), 0, || 1.0))
}

fn make_log(
    scn: &NetScenario,
    pm: &PowerModel,
    theta: &ParamSetting,
    class: DatasetClass,
    th: f64,
    index: usize,
    mut power_noise: impl FnMut() -> f64,
) -> TransferLog {
    let sizes = class.sizes();
    let duration = wall_time(scn, theta, &sizes, th);
    let power = transfer_power(scn, pm, theta, th);
    let samples = sample_times(duration)
        .into_iter()
        .map(|t| PowerSample {
            t,
            watts: power * power_noise(),
        })
        .collect();
    let trace = PowerTrace::new(samples, pm.p_base).expect("valid trace");
    let e_dyn = dynamic_energy(&trace);
    let streams = f64::from(theta.streams());
    TransferLog {
        fs: class.mean_size() as f64,
        n_files: sizes.len() as u64,
        t_rtt: scn.rtt,
        bs_tcp: scn.window,
        bw: scn.bw_cap,
        params: *theta,
        mu_cpu: (0.05 + 0.01 * streams).min(1.0),
        mu_mem: (0.1 + streams * f64::from(theta.bs()) / (64.0 * MIB as f64)).min(1.0),
        mu_nic: th / scn.bw_cap,
        pw: Some(e_dyn / duration),
        energy: Some(trace.base_energy() + e_dyn),
        throughput: th,
        duration,
        device: scn.device.clone(),
        net_if: scn.net_if,
        status: TransferStatus::Completed,
        timestamp: EPOCH + index as i64,
    }
}

/// Exhaustive best lattice node for `class` under `objective`, ties toward
/// smaller cc, then p, then bs.
pub fn ground_truth_argmax_by(
    scn: &NetScenario,
    pm: &PowerModel,
    class: DatasetClass,
    objective: Objective,
) -> Result<(ParamSetting, f64), SimError> {
    let sizes = class.sizes();
    let mut best: Option<(ParamSetting, f64)> = None;
    for theta in ParamSetting::lattice() {
        let o = simulate(scn, pm, &theta, &sizes)?;
        let score = objective.score(o.throughput, o.e_per_100mb);
        if best.map_or(true, |b| score > b.1) {
            best = Some((theta, score));
        }
    }
    Ok(best.expect("lattice is non-empty"))
}

/// Exhaustive throughput-efficiency argmax for `class`.
pub fn ground_truth_argmax(
    scn: &NetScenario,
    pm: &PowerModel,
    class: DatasetClass,
) -> Result<ParamSetting, SimError> {
    ground_truth_argmax_by(scn, pm, class, Objective::Efficiency).map(|r| r.0)
}

/// Throughput efficiency (Mbps per J/100MiB) of `theta` on `class`.
pub fn efficiency(
    scn: &NetScenario,
    pm: &PowerModel,
    theta: &ParamSetting,
    class: DatasetClass,
) -> Result<f64, SimError> {
    let o = simulate(scn, pm, theta, &class.sizes())?;
    Ok(Objective::Efficiency.score(o.throughput, o.e_per_100mb))
}

/// Draws a scenario with log-uniform bandwidth in `[5, 500]` Mbps and RTT in
/// `[10, 400]` ms, a knee in `{8, 16, 32}` and a slope in `[0.01, 0.04]`.
pub fn random_scenario(seed: u64) -> NetScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetScenario {
        bw_cap: 10f64.powf(rng.gen_range(5f64.log10()..500f64.log10())),
        rtt: 10f64.powf(rng.gen_range(1.0..400f64.log10())),
        knee: [8.0, 16.0, 32.0][rng.gen_range(0..3)],
        slope: rng.gen_range(0.01..0.04),
        seed,
        ..NetScenario::default()
    }
}

/// One row of the synthetic predictor corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub features: FeatureVector,
    /// Target setting.
    pub theta: ParamSetting,
    pub scenario: NetScenario,
    /// Dataset the row describes: `n_files` files of `fs` bytes.
    pub fs: u64,
    pub n_files: u64,
}

impl CorpusRow {
    /// Simulated throughput of `theta` under this row's conditions.
    pub fn throughput_at(&self, pm: &PowerModel, theta: &ParamSetting) -> f64 {
        let sizes = vec![self.fs; self.n_files as usize];
        simulate(&self.scenario, pm, theta, &sizes)
            .expect("corpus scenarios are valid")
            .throughput
    }
}

/// Target of the synthetic corpus, a step function of bandwidth and mean
/// file size: small files want more concurrency, fast links more parallelism
/// and larger blocks.
pub fn corpus_target(fs: u64, bw: f64) -> ParamSetting {
    let cc = if fs < MIB {
        16
    } else if fs < 20 * MIB {
        8
    } else {
        2
    };
    let p = if bw < 20.0 {
        1
    } else if bw < 100.0 {
        2
    } else {
        4
    };
    let bs = if bw < 50.0 { 8 } else { 16 };
    ParamSetting::with_kib(cc, p, bs).expect("levels are valid")
}

/// `n` seeded rows whose target is [`corpus_target`]; the remaining features
/// (file count, RTT, interface, CPU class) are drawn independently and carry
/// no signal.
pub fn synthetic_corpus(seed: u64, n: usize) -> Vec<CorpusRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let fs = 10f64.powf(rng.gen_range(4.5..8.5)) as u64;
            let bw = 10f64.powf(rng.gen_range(0.5..2.7));
            let rtt = 10f64.powf(rng.gen_range(1.0..2.6));
            let n_files = rng.gen_range(1..=50u64);
            let net_if = if rng.gen_bool(0.5) {
                NetInterface::Wifi
            } else {
                NetInterface::Cellular
            };
            let cpu_class = rng.gen_range(0..4u32);
            let scenario = NetScenario {
                bw_cap: bw,
                rtt,
                net_if,
                ..NetScenario::default()
            };
            CorpusRow {
                features: FeatureVector::new(fs as f64, n_files, rtt, bw, net_if, cpu_class)
                    .expect("positive features"),
                theta: corpus_target(fs, bw),
                scenario,
                fs,
                n_files,
            }
        })
        .collect()
}
