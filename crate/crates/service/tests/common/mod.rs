#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use fasthla_core::corelog::to_jsonl;
use fasthla_core::learn::TrainConfig;
use fasthla_core::sim::{generate_logs, NetScenario, PowerModel};
use fasthla_core::ParamSetting;
use fasthla_netio::{request, Reply};
use fasthla_service::server::{start, RunningService, ServiceConfig};
use url::Url;

pub const TIMEOUT: Duration = Duration::from_secs(10);

pub fn config(dir: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    };
    cfg.pipeline.train = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    cfg
}

pub async fn service(dir: &Path) -> RunningService {
    start(config(dir)).await.unwrap()
}

pub async fn call(svc: &RunningService, method: &str, path: &str, headers: &[(&str, &str)], body: &[u8]) -> Reply {
    let url = Url::parse(&svc.url(path)).unwrap();
    request(method, &url, headers, body, TIMEOUT).await.unwrap()
}

/// Simulated logs over a third of the lattice for all classes.
pub fn sim_jsonl(seed: u64) -> String {
    let lattice: Vec<_> = ParamSetting::lattice().step_by(3).collect();
    to_jsonl(&generate_logs(&NetScenario::default(), &PowerModel::default(), &lattice, 1, seed).unwrap())
}

pub async fn wait_for_version(svc: &RunningService, v: u32) {
    let deadline = tokio::time::Instant::now() + Duration::from_secs(30);
    while svc.state.model_version() < Some(v) {
        assert!(tokio::time::Instant::now() < deadline, "model v{v} never published");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}
