//! Training-loop behaviour on small tasks.

use ma3::adversary::{AdversaryBounds, AugmentParams};
use ma3::data::{ClassDataset, SplitSpec};
use ma3::sampler::Image;
use ma3::trainer::{lambda_search_with, DatasetSpec, TaskData, TrainConfig, TrainMode, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE: usize = 12;

/// Each class is a centred disk at its own intensity, plus pixel noise; the
/// class is a linear function of the mean pixel value.
fn disk_task(n_classes: usize, per_class: usize, seed: u64) -> TaskData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (SIZE as f64 - 1.0) / 2.0;
    let r = 0.35 * SIZE as f64;
    let classes = (0..n_classes)
        .map(|k| {
            let level = (k + 1) as f64 / (n_classes + 1) as f64;
            let imgs = (0..per_class)
                .map(|_| {
                    let data = (0..SIZE * SIZE)
                        .map(|i| {
                            let (y, x) = ((i / SIZE) as f64, (i % SIZE) as f64);
                            let inside = (y - c).hypot(x - c) <= r;
                            let v = if inside { level } else { 0.0 };
                            (v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0)
                        })
                        .collect();
                    Image::new(SIZE, SIZE, 1, data).unwrap()
                })
                .collect();
            (format!("disk_{k:02}"), imgs)
        })
        .collect();
    let ds = ClassDataset {
        classes,
        source: "disk".into(),
        height: SIZE,
        width: SIZE,
    };
    let n = n_classes / 3;
    TaskData::new(ds, SplitSpec::random(n_classes, n_classes - 2 * n, n, n, seed).unwrap()).unwrap()
}

fn toy_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        episodes: 300,
        eval_every: 300,
        val_episodes: 50,
        test_episodes: 200,
        q_query: 3,
        filters: 8,
        h_dim: 16,
        adv_filters: 4,
        image_size: SIZE,
        dataset: DatasetSpec::Synthetic {
            train_classes: 0,
            val_classes: 0,
            test_classes: 0,
            per_class: 0,
            seed: 0,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn both_baselines_learn_the_toy_task() {
    let data = disk_task(30, 10, 0);
    for mode in [TrainMode::Baseline, TrainMode::StandardAug] {
        let mut t = Trainer::for_task(toy_config(mode), &data).unwrap();
        t.run(&data, |_, _| Ok(())).unwrap();
        let r = t.test(&data).unwrap();
        assert!(r.mean >= 0.95, "{}: {r:?}", mode.as_str());
    }
}

#[test]
fn standard_aug_draws_are_uniform() {
    let bounds = AdversaryBounds::for_image(SIZE, SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws: Vec<AugmentParams> = (0..10_000)
        .map(|_| AugmentParams::sample_uniform(&bounds, &mut rng))
        .collect();
    let ranges = [
        (-bounds.theta0, bounds.theta0),
        (1.0 - bounds.eps_s, 1.0 + bounds.eps_s),
        (-bounds.translate, bounds.translate),
        (-bounds.translate, bounds.translate),
    ];
    // 10 bins, 9 degrees of freedom: critical value at p = 0.01
    let critical = 21.666;
    for (j, (lo, hi)) in ranges.into_iter().enumerate() {
        let mut bins = [0usize; 10];
        for p in &draws {
            let v = [p.theta, p.s, p.px, p.py][j];
            assert!((lo..=hi).contains(&v));
            bins[(((v - lo) / (hi - lo)) * 10.0).min(9.0) as usize] += 1;
        }
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - 1000.0).powi(2) / 1000.0).sum();
        assert!(chi2 < critical, "parameter {j}: χ² = {chi2}");
    }
}

#[test]
fn adversary_alone_raises_the_loss_on_a_fixed_episode() {
    let data = disk_task(30, 10, 1);
    let cfg = TrainConfig {
        mode: TrainMode::Ma3,
        lambda: 0.01,
        dropout_rate: 0.0,
        freeze_classifier: true,
        lr_adv: 1e-2,
        ..toy_config(TrainMode::Ma3)
    };
    let mut t = Trainer::for_task(cfg, &data).unwrap();
    let ep = t.sample_train_episode(&data).unwrap();
    let losses: Vec<f64> = (0..51).map(|_| t.train_step(&ep).unwrap().loss).collect();
    assert!(losses[50] - losses[0] >= 1e-4, "{} -> {}", losses[0], losses[50]);
}

/// Mean ΣL_reg over the second half of a run.
fn steady_state_reg(data: &TaskData, lambda: f64, steps: usize, lr_adv: f64, frozen_classifier: bool) -> f64 {
    let cfg = TrainConfig {
        lambda,
        freeze_classifier: frozen_classifier,
        episodes: steps,
        eval_every: steps,
        val_episodes: 1,
        lr_adv,
        ..toy_config(if lambda == 0.0 {
            TrainMode::Ma3Lambda0
        } else {
            TrainMode::Ma3
        })
    };
    let mut t = Trainer::for_task(cfg, data).unwrap();
    let recs = t.run(data, |_, _| Ok(())).unwrap();
    let tail = &recs[steps / 2..];
    tail.iter().map(|r| r.reg).sum::<f64>() / tail.len() as f64
}

#[test]
fn larger_lambda_keeps_warps_closer_to_identity() {
    let data = disk_task(30, 10, 2);
    let regs: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
        .iter()
        .map(|&l| steady_state_reg(&data, l, 200, 5e-2, true))
        .collect();
    assert!(regs.windows(2).all(|w| w[0] >= w[1]), "{regs:?}");
}

#[test]
fn unregularized_adversary_drifts_far_from_identity() {
    let data = disk_task(30, 10, 3);
    let free = steady_state_reg(&data, 0.0, 2000, 1e-2, false);
    let held = steady_state_reg(&data, 0.1, 2000, 1e-2, false);
    assert!(free >= 10.0 * held, "λ=0: {free}, λ=0.1: {held}");
}

#[test]
fn search_never_selects_zero() {
    let data = disk_task(30, 10, 4);
    let search = lambda_search_with(
        &[1e-3, 1e-2, 1e-1, 1.0, 10.0],
        |lambda| {
            let cfg = TrainConfig {
                lambda,
                episodes: 60,
                eval_every: 60,
                val_episodes: 30,
                ..toy_config(TrainMode::Ma3)
            };
            let mut t = Trainer::for_task(cfg, &data)?;
            let v = t.run(&data, |_, _| Ok(()))?.last().unwrap().val_acc.unwrap();
            Ok((v, 0.0))
        },
        |_| {},
    )
    .unwrap();
    assert!(search.best > 0.0);
    assert!(search.rows.iter().all(|r| r.lambda > 0.0));
}
