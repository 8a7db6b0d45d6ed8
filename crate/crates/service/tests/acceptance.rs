//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use fasthla_core::broker::{scale_concurrency, schedule_mixed, TransferRequest};
use fasthla_core::corelog::{dynamic_energy, to_jsonl, total_energy, PowerTrace};
use fasthla_core::learn::{accuracy, deserialize, predict, r_squared, serialize, train, TrainConfig, BLOB_LEN};
use fasthla_core::optimize::{grid_argmax, refine, OptimizerConfig};
use fasthla_core::sim::{
    efficiency, generate_logs, ground_truth_argmax, random_scenario, synthetic_corpus, DatasetClass, NetScenario,
    PowerModel,
};
use fasthla_core::surface::{fit_cubic, fit_surface};
use fasthla_core::ParamSetting;
use fasthla_netio::fixture::{mixed_corpus, Fixture, FixtureConfig, Mode};
use fasthla_netio::{execute, request};
use fasthla_oracles::{energy as energy_oracle, grid, spline};
use fasthla_service::cost::estimate;
use fasthla_service::server::{start, ServiceConfig};
use fasthla_service::{amortization_check, run_pipeline, PipelineConfig, PipelineResult, TableRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use url::Url;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lattice() -> Vec<ParamSetting> {
    ParamSetting::lattice().collect()
}

fn class_of(row: &TableRow) -> Option<DatasetClass> {
    DatasetClass::ALL
        .into_iter()
        .find(|c| (c.mean_size() as f64 - row.mean_fs).abs() < 1.0)
}

fn derivative(c: &[f64; 4], t: f64) -> (f64, f64, f64) {
    (
        c[0] + t * (c[1] + t * (c[2] + t * c[3])),
        c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]),
        2.0 * c[2] + 6.0 * t * c[3],
    )
}

fn spline_correctness() -> Outcome {
    let mut r = rng(1);
    let mut worst = [0f64; 4];
    for _ in 0..1000 {
        let n = r.gen_range(3..=12);
        let mut x = r.gen_range(-5.0..5.0);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                x += r.gen_range(0.1..3.0);
                (x, r.gen_range(-10.0..10.0))
            })
            .collect();
        let s = match fit_cubic(&pts) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("fit failed: {e}")),
        };
        let c = s.local_coeffs();
        let dense = spline::natural_spline_dense(&pts);
        for (got, want) in c.iter().zip(&dense) {
            for k in 0..4 {
                worst[3] = worst[3].max((got[k] - want[k]).abs());
            }
        }
        for i in 0..n - 1 {
            let h = pts[i + 1].0 - pts[i].0;
            let (v0, _, _) = derivative(&c[i], 0.0);
            let (v1, d1, s1) = derivative(&c[i], h);
            worst[0] = worst[0].max((v0 - pts[i].1).abs()).max((v1 - pts[i + 1].1).abs());
            if i + 1 < n - 1 {
                let (_, d2, s2) = derivative(&c[i + 1], 0.0);
                worst[1] = worst[1].max((d1 - d2).abs()).max((s1 - s2).abs());
            }
        }
        let (_, _, a) = derivative(&c[0], 0.0);
        let (_, _, b) = derivative(&c[n - 2], pts[n - 1].0 - pts[n - 2].0);
        worst[2] = worst[2].max(a.abs()).max(b.abs());
    }
    outcome(
        worst.iter().all(|&w| w < 1e-9),
        format!(
            "1000 sets; max residual interp {:.1e}, C2 {:.1e}, boundary {:.1e}, vs dense {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn optimizer_oracle() -> Outcome {
    let mut r = rng(2);
    let cfg = OptimizerConfig::default();
    let (mut equal, mut refine_ok) = (0, 0);
    for _ in 0..100 {
        let samples: Vec<(ParamSetting, f64, f64)> = ParamSetting::lattice()
            .map(|t| (t, r.gen_range(1.0..100.0), r.gen_range(1.0..50.0)))
            .collect();
        let s = fit_surface(&samples).expect("full lattice fits");
        let g = grid_argmax(&s, &cfg).expect("grid search");
        let ((cc, p, kib), _) = grid::exhaustive_argmax(|cc, p, kib| {
            let t = ParamSetting::with_kib(cc, p, kib).unwrap();
            let (_, th, e) = samples.iter().find(|x| x.0 == t).unwrap();
            th / e
        });
        equal += usize::from(g.theta == ParamSetting::with_kib(cc, p, kib).unwrap());
        let refined = refine(&s, g.theta, &cfg).expect("refine");
        refine_ok += usize::from(refined.objective >= g.objective - 1e-9);
    }
    outcome(
        equal == 100 && refine_ok == 100,
        format!("grid == exhaustive on {equal}/100 surfaces, refine not worse on {refine_ok}/100"),
    )
}

/// Logs per lattice node and class; averaging repeats damps the simulator's
/// multiplicative noise before the surface fit.
const REPEATS: usize = 3;

fn pipeline_on(scn: &NetScenario, pm: &PowerModel, seed: u64) -> PipelineResult {
    let logs = generate_logs(scn, pm, &lattice(), REPEATS, seed).expect("valid scenario");
    run_pipeline(&to_jsonl(&logs), None, &PipelineConfig::default()).expect("pipeline runs")
}

fn end_to_end() -> Outcome {
    let pm = PowerModel::default();
    let mut within = 0;
    let mut misses = Vec::new();
    for seed in 1..=20u64 {
        let scn = random_scenario(seed);
        let result = pipeline_on(&scn, &pm, seed);
        let mut ok = result.table.len() == DatasetClass::ALL.len();
        for row in &result.table {
            let Some(class) = class_of(row) else {
                ok = false;
                continue;
            };
            let best = ground_truth_argmax(&scn, &pm, class).unwrap();
            let ratio = efficiency(&scn, &pm, &row.theta, class).unwrap() / efficiency(&scn, &pm, &best, class).unwrap();
            if ratio < 0.95 {
                ok = false;
                misses.push(format!("s{seed}/{}={ratio:.3}", class.name()));
            }
        }
        within += usize::from(ok);
    }

    let scn = NetScenario::default();
    let result = pipeline_on(&scn, &pm, 42);
    let baseline = ParamSetting::with_kib(1, 1, 8).unwrap();
    let mut gains = Vec::new();
    for row in &result.table {
        if let Some(class) = class_of(row) {
            let g = efficiency(&scn, &pm, &row.theta, class).unwrap() / efficiency(&scn, &pm, &baseline, class).unwrap();
            gains.push((class.name(), g));
        }
    }
    let min_gain = gains.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let gain_text: Vec<String> = gains.iter().map(|(n, g)| format!("{n} {g:.2}x")).collect();
    outcome(
        within >= 18 && gains.len() == 3 && min_gain >= 1.5,
        format!(
            "{within}/20 scenarios within 5% ({REPEATS} logs per node){}; default scenario vs (1,1,8KB): {}",
            if misses.is_empty() { String::new() } else { format!(" (misses: {})", misses.join(", ")) },
            gain_text.join(", ")
        ),
    )
}

fn learning() -> Outcome {
    let corpus = synthetic_corpus(42, 600);
    let rows: Vec<_> = corpus.iter().map(|r| (r.features, r.theta)).collect();
    let (train_rows, test_rows) = rows.split_at(500);
    let m = train(train_rows, 42, None, &TrainConfig::default()).expect("trains");
    let acc = accuracy(&m, test_rows).unwrap();
    let pm = PowerModel::default();
    let actual: Vec<f64> = corpus[500..].iter().map(|r| r.throughput_at(&pm, &r.theta)).collect();
    let predicted: Vec<f64> = corpus[500..]
        .iter()
        .map(|r| r.throughput_at(&pm, &predict(&m, &r.features)))
        .collect();
    let r2 = r_squared(&actual, &predicted).unwrap();
    let mut blobs_ok = 0;
    for (i, n) in [10, 25, 50, 75, 100, 150, 200, 300, 400, 500].into_iter().enumerate() {
        let m = train(&rows[..n], i as u64, None, &TrainConfig { epochs: 50, ..Default::default() }).unwrap();
        let blob = serialize(&m);
        blobs_ok += usize::from(blob.len() == 1412 && deserialize(&blob).ok() == Some(m));
    }
    outcome(
        acc >= 0.85 && r2 >= 0.85 && blobs_ok == 10,
        format!("held-out accuracy {acc:.3}, R2 {r2:.4}, 1412-byte blobs {blobs_ok}/10"),
    )
}

fn energy_math() -> Outcome {
    let mut worst = 0f64;
    let mut identity = 0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let mut t = 0.0;
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let s = (t, r.gen_range(0.5..6.0));
                t += r.gen_range(0.2..1.5);
                s
            })
            .collect();
        let base = r.gen_range(0.5..3.0);
        let trace = PowerTrace::from_pairs(&pairs, base).unwrap();
        let got = dynamic_energy(&trace);
        let want = energy_oracle::dynamic_energy(&pairs, base);
        worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        let b = total_energy(trace.base_energy(), got).unwrap();
        identity += usize::from(b.e_total() == b.e_base() + b.e_dynamic());
    }
    outcome(
        worst < 1e-9 && identity == 100,
        format!("100 traces, max relative error {worst:.1e}; total = base + dynamic on {identity}/100"),
    )
}

fn scheduler() -> Outcome {
    let mut r = rng(6);
    let mut ok = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=6);
        let limit = r.gen_range(n as u32..=64);
        let ccs: Vec<u32> = (0..n).map(|_| 1 << r.gen_range(0..6)).collect();
        let direct = scale_concurrency(&ccs, limit).map(|v| v.iter().sum::<u32>() <= limit);
        let files: Vec<(String, u64)> = (0..r.gen_range(1..30))
            .map(|i| (format!("f{i}"), 10f64.powf(r.gen_range(3.0..9.0)) as u64))
            .collect();
        let req = TransferRequest::new(files, limit);
        let planned = schedule_mixed(&req, 1.0, |c| {
            let cc = if c.avg_file_size < 1e6 { 32 } else { 8 };
            ParamSetting::with_kib(cc, 2, 8).unwrap()
        })
        .map(|p| p.total_cc() <= limit);
        let planned_ok = match planned {
            Ok(b) => b,
            Err(fasthla_core::broker::ScheduleError::TooManyClusters { .. }) => true,
            Err(_) => false,
        };
        ok += usize::from(direct == Ok(true) && planned_ok);
    }
    let example = scale_concurrency(&[32, 16], 24);
    outcome(
        ok == 1000 && example == Ok(vec![16, 8]),
        format!("sum cc <= limit on {ok}/1000 instances; [32,16] at 24 -> {example:?}"),
    )
}

async fn transfer_integrity() -> Outcome {
    let corpus = mixed_corpus(7, 20);
    let fx = Fixture::start(corpus, FixtureConfig::default()).await.unwrap();
    let dataset = fx.dataset();
    let mut ok = 0;
    let mut failures = Vec::new();
    for theta in ParamSetting::lattice() {
        let dir = tempfile::tempdir().unwrap();
        let plan = fasthla_core::broker::SchedulePlan {
            entries: vec![fasthla_core::broker::PlanEntry {
                cluster: fasthla_core::cluster::FileCluster {
                    mean_size: dataset.iter().map(|f| f.1 as f64).sum::<f64>() / dataset.len() as f64,
                    files: dataset.clone(),
                },
                theta,
                cc: theta.cc(),
                scaled: false,
            }],
        };
        let report = execute(&plan, dir.path()).await.unwrap();
        let good = report.files.len() == 20
            && report.files.iter().all(|f| {
                let name = f.url.rsplit('/').next().unwrap();
                let want = hex::encode(Sha256::digest(fx.content(name).unwrap()));
                let on_disk = std::fs::read(dir.path().join(&f.name)).map(|b| hex::encode(Sha256::digest(b)));
                f.checksum.as_deref() == Some(want.as_str()) && on_disk.ok().as_deref() == Some(want.as_str())
            });
        if good {
            ok += 1;
        } else {
            failures.push(theta.to_string());
        }
    }

    let plain = Fixture::start(
        mixed_corpus(8, 20),
        FixtureConfig {
            mode: Mode::NoRanges,
            ..Default::default()
        },
    )
    .await
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let theta = ParamSetting::with_kib(4, 8, 16).unwrap();
    let ds = plain.dataset();
    let plan = fasthla_core::broker::SchedulePlan {
        entries: vec![fasthla_core::broker::PlanEntry {
            cluster: fasthla_core::cluster::FileCluster {
                mean_size: 1.0,
                files: ds.clone(),
            },
            theta,
            cc: 4,
            scaled: false,
        }],
    };
    let report = execute(&plan, dir.path()).await.unwrap();
    let fallback = report.files.iter().all(|f| {
        let name = f.url.rsplit('/').next().unwrap();
        f.range_fallback && f.checksum.as_deref() == Some(hex::encode(Sha256::digest(plain.content(name).unwrap())).as_str())
    });
    outcome(
        ok == 252 && fallback,
        format!(
            "{ok}/252 settings moved 20 files with matching SHA-256{}; no-Range fallback {}",
            if failures.is_empty() { String::new() } else { format!(" (failed: {})", failures.join(" ")) },
            if fallback { "verified" } else { "FAILED" }
        ),
    )
}

fn amortization() -> Outcome {
    let (scn, pm) = (NetScenario::default(), PowerModel::default());
    let result = pipeline_on(&scn, &pm, 42);
    let Some(row) = result.table.iter().find(|r| class_of(r) == Some(DatasetClass::VideoSmall)) else {
        return outcome(false, "no video cluster in the table");
    };
    let default = fasthla_core::broker::default_params();
    let class = DatasetClass::VideoSmall;
    let tuned = estimate(&scn, &pm, class, &row.theta, &default, result.wall_time, 100).unwrap();
    let forced = estimate(&scn, &pm, class, &default, &default, result.wall_time, 100).unwrap();
    let a = amortization_check(&tuned).unwrap();
    let b = amortization_check(&forced).unwrap();
    outcome(
        a.holds && !b.holds,
        format!(
            "theta {} over default {}: holds={} (margin {:.1} J, {:.2} s); forced default: holds={}",
            row.theta, default, a.holds, a.margin, a.time_margin, b.holds
        ),
    )
}

async fn wire() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    cfg.pipeline.train.epochs = 200;
    let svc = start(cfg).await.unwrap();
    let url = |p: &str| Url::parse(&svc.url(p)).unwrap();
    let t = Duration::from_secs(10);

    let logs = generate_logs(
        &NetScenario::default(),
        &PowerModel::default(),
        &ParamSetting::lattice().step_by(3).collect::<Vec<_>>(),
        4,
        9,
    )
    .unwrap();
    let mut lines: Vec<String> = to_jsonl(&logs).lines().take(1000).map(str::to_owned).collect();
    lines[100] = "{not json".into();
    lines[400] = "{\"fs\": 1}".into();
    lines[900] = lines[900].replace("\"n_files\":", "\"n_files\":\"many\",\"x\":");
    let reply = request("POST", &url("/v1/logs"), &[], (lines.join("\n") + "\n").as_bytes(), t).await.unwrap();
    let v: serde_json::Value = serde_json::from_slice(&reply.body).unwrap_or_default();
    let counts_ok = reply.status == 200 && v["accepted"] == 997 && v["rejected"] == 3;

    svc.state.run_analysis().await.unwrap();
    let stored = std::fs::read(dir.path().join("model.bin")).unwrap();
    let got = request("GET", &url("/v1/model"), &[], &[], t).await.unwrap();
    let round_trip = got.status == 200
        && got.body.len() == BLOB_LEN
        && got.body == stored
        && deserialize(&got.body).map(|m| serialize(&m)).ok() == Some(got.body.clone());
    let etag = got.header("etag").unwrap_or_default().to_owned();
    let cond = request("GET", &url("/v1/model"), &[("If-None-Match", &etag)], &[], t).await.unwrap();
    let not_modified = !etag.is_empty() && cond.status == 304 && cond.body.is_empty();
    svc.shutdown().await;
    outcome(
        counts_ok && round_trip && not_modified,
        format!(
            "upload accepted {} rejected {}; blob {} bytes round-trip {}; ETag {etag} -> {}",
            v["accepted"], v["rejected"], got.body.len(), round_trip, cond.status
        ),
    )
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    type Check = Box<dyn FnOnce(&tokio::runtime::Runtime) -> Outcome>;
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "spline correctness", Duration::from_secs(10), Box::new(|_| spline_correctness())),
        (2, "optimizer vs exhaustive oracle", Duration::from_secs(30), Box::new(|_| optimizer_oracle())),
        (3, "end-to-end pipeline", Duration::from_secs(300), Box::new(|_| end_to_end())),
        (4, "learning module", Duration::from_secs(120), Box::new(|_| learning())),
        (5, "energy math", Duration::MAX, Box::new(|_| energy_math())),
        (6, "scheduler budget", Duration::MAX, Box::new(|_| scheduler())),
        (7, "transfer integrity", Duration::from_secs(180), Box::new(|rt| rt.block_on(transfer_integrity()))),
        (8, "amortization", Duration::MAX, Box::new(|_| amortization())),
        (9, "wire protocol", Duration::MAX, Box::new(|rt| rt.block_on(wire()))),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let started = Instant::now();
        let o = check(&rt);
        let took = started.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let limit = if budget == Duration::MAX { String::new() } else { format!(" / {}s", budget.as_secs()) };
        println!(
            "criterion {n} [{name}]: {} ({:.2}s{limit}) {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
