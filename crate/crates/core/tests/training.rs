//! Small end-to-end training runs on synthetic scenes.

use std::sync::OnceLock;

use rotcomp::gpopt::{BoConfig, GpConfig};
use rotcomp::hogsvm::{HogConfig, SvmTrainConfig};
use rotcomp::pipeline::{compensate, Compensator, Estimator};
use rotcomp::scorer::{build_training_set, median_curve, score, train_hogsvm, ScorerModel};
use rotcomp::synthgen::{gen_scenes, relabel, Labeling, LabeledSample};
use rotcomp::tnet::{mean_loss, train, TemplateNet, TemplateNetConfig, TrainConfig};
use rotcomp::raster::rotate_circular;
use rotcomp::{wrapped_distance, AngleDeg};

fn strict_200() -> Vec<LabeledSample> {
    let scenes = gen_scenes(40, 64, 500).unwrap();
    build_training_set(&scenes, 64, 4, Labeling::Strict, 3).unwrap()
}

/// A tolerant model trained briefly; shared by the compensation checks.
fn tolerant_net() -> &'static ScorerModel {
    static NET: OnceLock<ScorerModel> = OnceLock::new();
    NET.get_or_init(|| {
        let scenes = gen_scenes(150, 64, 0).unwrap();
        let data = build_training_set(&scenes, 64, 5, Labeling::tolerant(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        ScorerModel::TemplateNet(train(&data, &cfg, &TemplateNetConfig::default()).unwrap().net)
    })
}

#[test]
fn strict_training_halves_the_loss() {
    let data = strict_200();
    assert_eq!(data.len(), 200);
    let cfg = TrainConfig::default();
    let initial = mean_loss(&TemplateNet::init(TemplateNetConfig::default(), cfg.seed).unwrap(), &data).unwrap();
    let report = train(&data, &cfg, &TemplateNetConfig::default()).unwrap();
    let fin = mean_loss(&report.net, &data).unwrap();
    assert!(fin < 0.5 * initial, "loss {initial} -> {fin}");
}

#[test]
fn equal_seeds_train_identical_models() {
    let data = &strict_200()[..60];
    let cfg = TrainConfig {
        epochs: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(data, &cfg, &TemplateNetConfig::default()).unwrap();
    let b = train(data, &cfg, &TemplateNetConfig::default()).unwrap();
    assert_eq!(a.net, b.net);
    assert_eq!(a.epoch_losses, b.epoch_losses);
}

#[test]
fn all_zero_labels_drive_scores_down() {
    let mut data = strict_200();
    for s in &mut data {
        s.label = 0;
    }
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let net = train(&data, &cfg, &TemplateNetConfig::default()).unwrap().net;
    let mean: f64 = data.iter().map(|s| net.forward(&s.image).unwrap()).sum::<f64>() / data.len() as f64;
    assert!(mean < 0.1, "mean score {mean}");
}

#[test]
fn hog_svm_curve_dips_at_zero() {
    let scenes = gen_scenes(200, 64, 40).unwrap();
    let mut data = build_training_set(&scenes, 64, 5, Labeling::Strict, 2).unwrap();
    relabel(&mut data, Labeling::tolerant());
    let model = ScorerModel::HogSvm(train_hogsvm(&data, &SvmTrainConfig::default(), HogConfig::default()).unwrap());
    let held = gen_scenes(60, 64, 90_000).unwrap();
    let angles = [AngleDeg::new(-90.0), AngleDeg::ZERO, AngleDeg::new(90.0)];
    let curve = median_curve(&model, &held, &angles).unwrap();
    assert!(curve[1].1 < curve[0].1 && curve[1].1 < curve[2].1, "{curve:?}");
}

#[test]
fn trained_net_ranks_upright_below_rotated() {
    let model = tolerant_net();
    let held = gen_scenes(50, 64, 70_000).unwrap();
    let better = held
        .iter()
        .filter(|img| {
            let upright = score(model, &rotate_circular(img, AngleDeg::ZERO).unwrap()).unwrap();
            let tilted = score(model, &rotate_circular(img, AngleDeg::new(45.0)).unwrap()).unwrap();
            upright < tilted
        })
        .count();
    assert!(better * 100 >= 80 * held.len(), "{better}/{}", held.len());
}

#[test]
fn upright_scenes_stay_put_and_compensation_is_idempotent() {
    let model = tolerant_net();
    let bo = BoConfig::default();
    let gp = GpConfig::default();
    let held = gen_scenes(30, 64, 80_000).unwrap();
    let mut near_zero = 0;
    let mut stable = 0;
    for img in &held {
        let first = compensate(model, img, &bo, &gp).unwrap();
        assert!(first.evaluations <= 30);
        if wrapped_distance(first.theta_est, AngleDeg::ZERO) <= 10.0 {
            near_zero += 1;
        }
        let tilted = rotate_circular(img, AngleDeg::new(90.0)).unwrap();
        let comp = Compensator::new(model.clone(), bo.clone(), gp);
        let est = comp.estimate(&tilted).unwrap();
        if wrapped_distance(est.theta, AngleDeg::new(90.0)) <= 10.0 {
            let corrected = rotate_circular(&tilted, -est.theta).unwrap();
            let second = compensate(model, &corrected, &bo, &gp).unwrap();
            if wrapped_distance(second.theta_est, AngleDeg::ZERO) <= 10.0 {
                stable += 1;
            }
        } else {
            stable += 1;
        }
    }
    assert!(near_zero * 100 >= 70 * held.len(), "{near_zero}/{}", held.len());
    assert_eq!(stable, held.len());
}
