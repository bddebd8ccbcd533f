//! Acceptance criteria 1-10, one `[PASS]`/`[FAIL]` line each.
//!
//! Runs without the libtest harness so the criteria execute in order and
//! report their timings. Exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::checks::*;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::time::{Duration, Instant};
use vmfd::{
    generate_scene, probe_model, train, Model, SamplingMode, Scene, SceneConfig, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion(
    id: usize,
    name: &str,
    limit: Option<Duration>,
    check: impl FnOnce() -> Outcome,
) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check));
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(_) => (false, "panicked".to_string()),
    };
    if let Some(limit) = limit {
        if elapsed > limit {
            pass = false;
            detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
        }
    }
    println!(
        "[{}] AC{id} {name}: {detail} ({:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn ac1() -> Outcome {
    let (near, _) = bessel_table_errors();
    let dense = bessel_series_error(&[0.0, 0.5, 1.0, 7.0, 31.0], 400, 1);
    let c3 = worst([0.1, 1.0, 5.0, 20.0].map(c3_normalizer_error));
    outcome(
        near <= 1e-10 && dense <= 1e-10 && c3 <= 1e-9,
        format!("table {near:.1e}, dense series {dense:.1e}, C=3 normalizer {c3:.1e}"),
    )
}

fn ac2() -> Outcome {
    let mut max = 0.0f64;
    for dim in [4, 16, 64] {
        for r in [0.1, 0.3, 0.5, 0.7, 0.9, 0.95] {
            max = max.max(sra_relative_error(r, dim));
        }
    }
    outcome(max <= 0.05, format!("max relative error {max:.4}"))
}

fn ac3() -> Outcome {
    let seeds = 0..100u64;
    let pp = worst(seeds.clone().map(ppnce_gradient_error));
    let sup = worst(seeds.clone().map(sup_gradient_error));
    let kl = worst(seeds.clone().map(kl_gradient_error));
    let composite = worst(seeds.map(composite_gradient_error));
    outcome(
        [pp, sup, kl, composite].iter().all(|&e| e <= 1e-5),
        format!(
            "worst over 100 seeds: ppnce {pp:.1e}, sup {sup:.1e}, kl {kl:.1e}, composite {composite:.1e}"
        ),
    )
}

fn ac4() -> Outcome {
    let (mut value, mut grad) = (0.0f64, 0.0f64);
    for seed in 0..50 {
        let (v, g) = reduction_gap(seed);
        value = value.max(v);
        grad = grad.max(g);
    }
    outcome(
        value <= 1e-12 && grad <= 1e-12,
        format!("value gap {value:.1e}, gradient gap {grad:.1e}"),
    )
}

fn ac5() -> Outcome {
    let runs: Vec<Recovery> = (0..3).map(|s| vmf_recovery(s, 8, 50.0, 10_000)).collect();
    let angle = worst(runs.iter().map(|r| r.angle_degrees));
    let kappa = worst(runs.iter().map(|r| r.kappa_error_mle));
    outcome(
        angle <= 2.0 && kappa <= 0.1,
        format!("worst angle {angle:.3} deg, worst kappa error vs root {kappa:.4}"),
    )
}

fn ac6() -> Outcome {
    let cals: Vec<Calibration> = (0..5).map(|s| dcas_calibration(s, 100_000)).collect();
    let calibrated = cals.iter().all(|c| c.statistic < c.threshold);
    let worst_ratio = worst(cals.iter().map(|c| c.statistic / c.threshold));
    let scene = generate_scene(&SceneConfig::default()).unwrap();
    let uniform = class_mass_variance(&scene, SamplingMode::Random);
    let dcas = class_mass_variance(&scene, SamplingMode::Dcas);
    outcome(
        calibrated && dcas < uniform,
        format!(
            "chi-square/threshold max {worst_ratio:.3}; class-mass variance dcas {dcas:.3e} vs uniform {uniform:.3e}"
        ),
    )
}

fn ac7() -> Outcome {
    let scenes = [generate_scene(&SceneConfig::default()).unwrap()];
    // final (sigma_W^2, sigma_W^2 / sigma_B^2) per seed
    let finals = |lambda3: f64| -> (Vec<f64>, Vec<f64>) {
        (0..5)
            .map(|seed| {
                let config = TrainConfig {
                    lambda3,
                    seed,
                    ..TrainConfig::default()
                };
                let (_, history) = train(config, &scenes, |_| Ok(())).unwrap();
                let last = history.last().unwrap();
                (last.sigma_w_sq, last.sigma_w_sq / last.sigma_b_sq)
            })
            .unzip()
    };
    let (with, with_ratio) = finals(1.0);
    let (without, without_ratio) = finals(0.0);
    let (with, without) = (median(&with), median(&without));
    outcome(
        with < without,
        format!(
            "median final sigma_W^2: lambda3=1 {with:.3e}, lambda3=0 {without:.3e} (sigma_W^2/sigma_B^2 {:.3} vs {:.3})",
            median(&with_ratio),
            median(&without_ratio)
        ),
    )
}

fn scenes(seeds: std::ops::Range<u64>) -> Vec<Scene> {
    seeds
        .map(|seed| {
            generate_scene(&SceneConfig {
                seed,
                ..SceneConfig::default()
            })
            .unwrap()
        })
        .collect()
}

fn ac8() -> Outcome {
    let train_scenes = scenes(300..308);
    let probe_scenes = scenes(700..702);
    let median_accuracy = |lambda2: f64, lambda3: f64, sampling: SamplingMode| -> f64 {
        let accs: Vec<f64> = (0..5)
            .map(|seed| {
                let config = TrainConfig {
                    lambda2,
                    lambda3,
                    sampling,
                    seed,
                    ..TrainConfig::default()
                };
                let (model, _) = train(config, &train_scenes, |_| Ok(())).unwrap();
                probe_model(&model, &probe_scenes).unwrap().report.accuracy
            })
            .collect();
        median(&accs)
    };
    let base = median_accuracy(0.0, 0.0, SamplingMode::Random);
    let wcd = median_accuracy(1.0, 0.0, SamplingMode::Random);
    let full = median_accuracy(1.0, 0.02, SamplingMode::Dcas);
    let init: Vec<f64> = (0..5)
        .map(|seed| {
            let model = Model::init(
                &TrainConfig::default().encoder,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            probe_model(&model, &probe_scenes).unwrap().report.accuracy
        })
        .collect();
    outcome(
        full > wcd && wcd > base,
        format!(
            "median probe accuracy: full {full:.4} > wcd {wcd:.4} > baseline {base:.4} (untrained {:.4})",
            median(&init)
        ),
    )
}

fn ac9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_vmfd");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("data.cfg"),
        "scene.seed = 5\nscene.num_points = 1500\nscene.train_scenes = 2\n",
    )
    .unwrap();
    std::fs::write(d.join("train.cfg"), "train.seed = 9\ntrain.epochs = 10\n").unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .current_dir(d)
            .env("VMFD_LOG_LEVEL", "error")
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["generate", "--config", "data.cfg", "--out", "data"]);
    for out in ["a", "b"] {
        run(&[
            "pretrain",
            "--config",
            "train.cfg",
            "--data",
            "data",
            "--out",
            out,
        ]);
    }
    let a = std::fs::read(d.join("a/metrics.ndjson")).unwrap();
    let b = std::fs::read(d.join("b/metrics.ndjson")).unwrap();
    outcome(
        !a.is_empty() && a == b,
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

fn ac10() -> Outcome {
    let (sup, pp) = self_conflict_gradients();
    outcome(
        sup < 0.0 && pp > 0.0,
        format!("dL/ds on the same-class cross pair: supervised {sup:.4e}, point-pixel {pp:.4e}"),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "Bessel and vMF normalizer oracles", Some(secs(10)), ac1),
        criterion(2, "Sra estimator vs likelihood root", Some(secs(10)), ac2),
        criterion(3, "finite-difference gradients", Some(secs(60)), ac3),
        criterion(4, "supervised loss reduces to point-pixel loss", None, ac4),
        criterion(5, "vMF parameter recovery", Some(secs(10)), ac5),
        criterion(6, "DCAS calibration and class balance", None, ac6),
        criterion(
            7,
            "vMF term shrinks within-class variance",
            Some(secs(600)),
            ac7,
        ),
        criterion(8, "ablation ordering", Some(secs(1800)), ac8),
        criterion(9, "byte-identical metric streams", None, ac9),
        criterion(10, "self-conflict gradient signs", None, ac10),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
