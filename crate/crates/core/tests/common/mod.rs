#![allow(dead_code)]

use fasthla_core::{DeviceInfo, NetInterface, ParamSetting, TransferLog, TransferStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn device(model: &str) -> DeviceInfo {
    DeviceInfo {
        model: model.into(),
        os: "android-9".into(),
        cpu_class: 1,
        mem_bytes: 4 << 30,
        wifi_std: "802.11ac".into(),
    }
}

pub fn log(fs: f64, rtt: f64, bw: f64, throughput: f64, params: ParamSetting) -> TransferLog {
    TransferLog {
        fs,
        n_files: 20,
        t_rtt: rtt,
        bs_tcp: 65536.0,
        bw,
        params,
        mu_cpu: 0.2,
        mu_mem: 0.2,
        mu_nic: throughput / bw,
        pw: Some(1.0),
        energy: Some(50.0),
        throughput,
        duration: 30.0,
        device: device("pixel"),
        net_if: NetInterface::Wifi,
        status: TransferStatus::Completed,
        timestamp: 1_500_000_000,
    }
}

/// Random throughput and energy at every lattice node.
pub fn random_lattice(rng: &mut ChaCha8Rng) -> Vec<(ParamSetting, f64, f64)> {
    ParamSetting::lattice()
        .map(|t| (t, rng.gen_range(1.0..100.0), rng.gen_range(1.0..50.0)))
        .collect()
}
