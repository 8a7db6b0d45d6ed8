use std::time::Duration;

use fasthla_core::broker::{PlanEntry, SchedulePlan, TransferRequest};
use fasthla_core::cluster::FileCluster;
use fasthla_core::corelog::{dynamic_energy, DeviceInfo, NetInterface, TransferStatus};
use fasthla_core::sim::{simulate, NetScenario, PowerModel};
use fasthla_core::ParamSetting;
use fasthla_netio::fixture::{mixed_corpus, uniform_corpus, Fixture, FixtureConfig, Mode};
use fasthla_netio::{emit_log, execute, execute_with, EngineOptions, Probe};
use sha2::{Digest, Sha256};

fn plan(files: Vec<(String, u64)>, theta: ParamSetting) -> SchedulePlan {
    let mean_size = files.iter().map(|f| f.1 as f64).sum::<f64>() / files.len().max(1) as f64;
    SchedulePlan {
        entries: vec![PlanEntry {
            cluster: FileCluster { files, mean_size },
            theta,
            cc: theta.cc(),
            scaled: false,
        }],
    }
}

fn sha(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn assert_identical(fx: &Fixture, dest: &std::path::Path, report: &fasthla_netio::TransferReport) {
    for f in &report.files {
        let name = f.url.rsplit('/').next().unwrap();
        let want = fx.content(name).unwrap();
        assert!(f.completed(), "{}: {:?}", f.url, f.error);
        assert_eq!(f.checksum.as_deref(), Some(sha(want).as_str()));
        assert_eq!(std::fs::read(dest.join(&f.name)).unwrap(), want);
    }
}

#[tokio::test]
async fn hundred_files_with_ranges() {
    let fx = Fixture::start(uniform_corpus(1, 100, 100_000), FixtureConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let theta = ParamSetting::with_kib(4, 1, 8).unwrap();
    let report = execute(&plan(fx.dataset(), theta), dir.path()).await.unwrap();
    assert_eq!(report.files.len(), 100);
    assert!(report.all_completed());
    assert_eq!(report.total_bytes(), 10_000_000);
    assert_identical(&fx, dir.path(), &report);
    assert!(report.peak_files <= 4);
    assert!(report.peak_connections <= 4);
    assert_eq!(report.theta, Some(theta));
    assert!(report.throughput > 0.0);
    assert!(!report.samples.is_empty());
}

#[tokio::test]
async fn parallel_ranges_reassemble() {
    let fx = Fixture::start(mixed_corpus(3, 9), FixtureConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let theta = ParamSetting::with_kib(2, 8, 4).unwrap();
    let report = execute(&plan(fx.dataset(), theta), dir.path()).await.unwrap();
    assert_identical(&fx, dir.path(), &report);
    assert!(report.files.iter().all(|f| f.streams == 8 && !f.range_fallback));
    assert_eq!(fx.range_requests(), 9 * 8);
    assert!(report.peak_connections <= 16);
}

#[tokio::test]
async fn server_without_ranges_falls_back() {
    let cfg = FixtureConfig {
        mode: Mode::NoRanges,
        ..Default::default()
    };
    let fx = Fixture::start(mixed_corpus(5, 6), cfg).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&plan(fx.dataset(), ParamSetting::with_kib(2, 4, 16).unwrap()), dir.path())
        .await
        .unwrap();
    assert_identical(&fx, dir.path(), &report);
    assert!(report.files.iter().all(|f| f.range_fallback && f.streams == 1));
    // Only the probe request per file was sent.
    assert_eq!(fx.requests(), 6);
}

#[tokio::test]
async fn interrupted_ranges_resume() {
    let cfg = FixtureConfig {
        mode: Mode::Faulty { failures: 2 },
        ..Default::default()
    };
    let fx = Fixture::start(uniform_corpus(9, 4, 200_000), cfg).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&plan(fx.dataset(), ParamSetting::with_kib(2, 2, 8).unwrap()), dir.path())
        .await
        .unwrap();
    assert_identical(&fx, dir.path(), &report);
    assert!(report.files.iter().all(|f| f.retries == 2), "{:?}", report.files);
}

#[tokio::test]
async fn too_many_faults_fail_only_that_file() {
    let cfg = FixtureConfig {
        mode: Mode::Faulty { failures: 10 },
        ..Default::default()
    };
    let fx = Fixture::start(uniform_corpus(4, 2, 50_000), cfg).await.unwrap();
    let mut dataset = fx.dataset();
    dataset.push((fx.url("missing.bin"), 10));
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&plan(dataset, ParamSetting::with_kib(4, 1, 8).unwrap()), dir.path())
        .await
        .unwrap();
    assert_eq!(report.files.len(), 3);
    assert!(report.files.iter().all(|f| !f.completed()));
    assert_eq!(report.errors.len(), 3);
    assert!(report.files[2].error.as_deref().unwrap().contains("404"));
}

#[tokio::test]
async fn empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&SchedulePlan::default(), dir.path()).await.unwrap();
    assert!(report.files.is_empty());
    assert_eq!(report.total_bytes(), 0);
}

#[tokio::test]
async fn concurrency_bound_holds_under_slow_server() {
    let cfg = FixtureConfig {
        chunk: 4096,
        chunk_delay: Some(Duration::from_millis(2)),
        ..Default::default()
    };
    let fx = Fixture::start(uniform_corpus(2, 24, 40_000), cfg).await.unwrap();
    let mut small = fx.dataset();
    let large = small.split_off(12);
    let t1 = ParamSetting::with_kib(4, 2, 8).unwrap();
    let t2 = ParamSetting::with_kib(2, 1, 8).unwrap();
    let mut p = plan(small, t1);
    p.entries.extend(plan(large, t2).entries);
    let dir = tempfile::tempdir().unwrap();
    let opts = EngineOptions {
        sample_interval: Duration::from_millis(50),
        ..Default::default()
    };
    let report = execute_with(&p, dir.path(), opts).await.unwrap();
    assert_identical(&fx, dir.path(), &report);
    assert!(report.peak_files <= 6, "{}", report.peak_files);
    assert!(report.peak_connections <= p.max_connections() as usize);
    assert!(fx.peak_bodies() <= 10);
    assert!(report.peak_files >= 2);
    assert!(report.samples.len() >= 2);
    assert!(report.samples.windows(2).all(|w| w[0].0 < w[1].0));
}

#[tokio::test]
async fn duplicate_names_get_distinct_files() {
    let fx = Fixture::start(uniform_corpus(6, 1, 1000), FixtureConfig::default()).await.unwrap();
    let url = fx.url("f000.bin");
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&plan(vec![(url.clone(), 1000), (url, 1000)], ParamSetting::with_kib(2, 1, 1).unwrap()), dir.path())
        .await
        .unwrap();
    let mut names: Vec<_> = report.files.iter().map(|f| f.name.clone()).collect();
    names.sort();
    assert_eq!(names, vec!["f000.bin", "f000.bin.1"]);
    assert!(report.all_completed());
}

#[tokio::test]
async fn log_from_real_transfer_with_simulated_power() {
    let fx = Fixture::start(uniform_corpus(8, 5, 30_000), FixtureConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let theta = ParamSetting::with_kib(2, 2, 8).unwrap();
    let report = execute(&plan(fx.dataset(), theta), dir.path()).await.unwrap();
    let req = TransferRequest::new(fx.dataset(), 32);
    let probe = Probe {
        rtt: 1.0,
        bw: 1000.0,
        tcp_buffer: 65536.0,
        net_if: NetInterface::Wifi,
    };
    let device = DeviceInfo {
        model: "loopback".into(),
        os: "linux".into(),
        cpu_class: 2,
        mem_bytes: 1 << 30,
        wifi_std: "ax".into(),
    };
    let sim = simulate(&NetScenario::default(), &PowerModel::default(), &theta, &[30_000; 5]).unwrap();
    let log = emit_log(&report, &req, &probe, &device, Some(&sim.trace), 1_700_000_000);
    assert_eq!(log.status, TransferStatus::Completed);
    assert_eq!(log.params, theta);
    assert_eq!(log.n_files, 5);
    let pw = dynamic_energy(&sim.trace) / sim.trace.duration();
    assert!((log.pw.unwrap() - pw).abs() < 1e-9);
    assert!(log.is_well_formed());
    let none = emit_log(&report, &req, &probe, &device, None, 0);
    assert!(none.pw.is_none() && none.energy.is_none());
}
