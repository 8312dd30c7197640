use std::sync::OnceLock;

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::nets::sigmoid;
use lfgrasp::ratio::{
    calibration_diagnostic, decode_oracle_vector, fit_ratio, oracle_vector, train_image_ratio, train_oracle_ratio,
    train_success_ratio, Architecture, CondInputs, Conditioning, ConditioningLayout, ConstantRatio, HandRatio,
    Negatives, PairData, RatioKind, RatioModel, TrainConfig, TrainReport,
};
use lfgrasp::world::{
    generate_episodes, generate_positive_episodes, thin_failures, DepthImage, EpisodeSet, WorldParams,
};
use lfgrasp::{Error, HandConfig, UnitQuaternion};
use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_arch() -> Architecture {
    let mut a = Architecture { hidden: vec![64, 64], ..Default::default() };
    a.encoder.conv_filters = vec![8, 8, 8];
    a.encoder.squeeze = 4;
    a.encoder.embedding = 32;
    a
}

/// `u ∼ U(0, 1)`, `S ∼ Bernoulli(u)`.
fn synthetic(n: usize, seed: u64, informative: bool) -> PairData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        let v: f64 = rng.random();
        let p = if informative { v } else { 0.5 };
        s.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        u.push(v);
    }
    PairData { cond: CondInputs { shape: vec![1], data: s }, theta: u, theta_dim: 1, category: None }
}

fn synthetic_log_ratio(nets: &lfgrasp::ratio::RatioNetworks, s: f64, u: f64) -> f64 {
    let mut row = Vec::new();
    nets.push_row(&[s], &[u], None, &mut row).unwrap();
    nets.head_logits(row).unwrap()[0]
}

#[test]
fn one_dimensional_ratio_matches_the_closed_form() {
    let data = synthetic(20_000, 1, true);
    let cfg = TrainConfig { max_epochs: 60, patience: 8, ..Default::default() };
    let fit = fit_ratio(&data, Negatives::Derangement, &small_arch(), &cfg, 7).unwrap();
    let grid: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
    let mae_ratio =
        grid.iter().map(|&u| (synthetic_log_ratio(&fit.nets, 1.0, u).exp() - 2.0 * u).abs()).sum::<f64>() / 100.0;
    let mae_post =
        grid.iter().map(|&u| (0.5 * synthetic_log_ratio(&fit.nets, 1.0, u).exp() - u).abs()).sum::<f64>() / 100.0;
    eprintln!("ratio MAE {mae_ratio:.4}, posterior MAE {mae_post:.4}, epochs {}", fit.epochs.len());
    assert!(mae_ratio < 0.1);
    assert!(mae_post < 0.05);
}

#[test]
fn independent_data_gives_unit_ratio() {
    let data = synthetic(20_000, 2, false);
    let cfg = TrainConfig { max_epochs: 60, patience: 8, ..Default::default() };
    let fit = fit_ratio(&data, Negatives::Derangement, &small_arch(), &cfg, 8).unwrap();
    let mut total = 0.0;
    for k in 0..100 {
        let u = (k as f64 + 0.5) / 100.0;
        total += synthetic_log_ratio(&fit.nets, 1.0, u).abs() + synthetic_log_ratio(&fit.nets, 0.0, u).abs();
    }
    let mean = total / 200.0;
    eprintln!("mean |log r| {mean:.4}");
    assert!(mean < 0.1);
}

/// Toy-world episodes: every success plus a tenth of the failures.
fn toy_episodes(n: usize, seed: u64) -> Vec<lfgrasp::world::Episode> {
    let eps = generate_episodes(
        n,
        seed,
        &HandPrior::default(),
        &ScenePrior::default(),
        &WorldParams::default(),
        EpisodeSet::NoImages,
    );
    thin_failures(eps, 0.1)
}

fn toy_model() -> &'static (RatioModel, TrainReport) {
    static MODEL: OnceLock<(RatioModel, TrainReport)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = TrainConfig { max_epochs: 15, ..Default::default() };
        train_success_ratio(&toy_episodes(100_000, 5), &HandPrior::default(), &small_arch(), &cfg, 9).unwrap()
    })
}

#[test]
fn toy_world_success_ratio_beats_chance() {
    let (_, report) = toy_model();
    eprintln!("held-out BCE {:.4}, calibration {:?}", report.best_heldout_loss, report.calibration);
    assert!(report.best_heldout_loss < std::f64::consts::LN_2);
    assert!(report.epochs.iter().all(|e| e.train_loss.is_finite() && e.heldout_loss.is_finite()));
    assert_eq!(report.kind, RatioKind::Success);
}

#[test]
fn flipped_labels_are_caught_by_calibration() {
    let cfg = TrainConfig { max_epochs: 10, flip_labels: true, ..Default::default() };
    let prior = HandPrior::default();
    let (_, report) = train_success_ratio(&toy_episodes(100_000, 6), &prior, &small_arch(), &cfg, 10).unwrap();
    let c = report.calibration.unwrap();
    eprintln!("flipped-label calibration {c:.3}");
    assert!(!(0.8..=1.2).contains(&c));
}

#[test]
fn unit_ratio_is_perfectly_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(calibration_diagnostic(&ConstantRatio(0.0), &HandPrior::default(), 1000, &mut rng).unwrap(), 1.0);
    assert!(calibration_diagnostic(&ConstantRatio(0.0), &HandPrior::default(), 0, &mut rng).is_err());
}

#[test]
fn log_ratio_is_the_raw_logit() {
    let (model, _) = toy_model();
    let prior = HandPrior::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bound = model.bind(&Conditioning::Success(true)).unwrap();
    for _ in 0..50 {
        let h = prior.sample(&mut rng);
        let mut row = Vec::new();
        let features = model.features(&Conditioning::Success(true)).unwrap();
        model.nets.push_row(&features, &model.layout.hand.features(&h), Some(h.g.index()), &mut row).unwrap();
        let logit = model.nets.head_logits(row).unwrap()[0];
        assert_eq!(model.log_ratio(&Conditioning::Success(true), &h).unwrap().to_bits(), logit.to_bits());
        assert_eq!(bound.log_ratio_batch(std::slice::from_ref(&h)).unwrap()[0].to_bits(), logit.to_bits());
        let d = sigmoid(logit);
        assert!(((d / (1.0 - d)).ln() - logit).abs() < 1e-8 * logit.abs().max(1.0));
    }
    // A zero logit is a zero log-ratio.
    assert_eq!(ConstantRatio(0.0).log_ratio_batch(&[prior.sample(&mut rng)]).unwrap()[0], 0.0);
}

/// Central difference of `log r̂` along a tangent direction, moving on the sphere
/// by renormalizing `q + t·v`.
fn directional_fd(ratio: &dyn HandRatio, h: &HandConfig, dx: Vector3<f64>, dq: Vector4<f64>, t: f64) -> f64 {
    let at = |s: f64| {
        let q = UnitQuaternion::normalize(h.q.as_vector() + dq * s).unwrap();
        let moved = HandConfig::new(h.x + dx * s, q, h.g);
        ratio.log_ratio_batch(&[moved]).unwrap()[0]
    };
    (at(t) - at(-t)) / (2.0 * t)
}

#[test]
fn log_ratio_gradient_matches_finite_differences() {
    let (model, _) = toy_model();
    let prior = HandPrior::default();
    let bound = model.bind(&Conditioning::Success(true)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut fd, mut an) = (Vec::new(), Vec::new());
    for _ in 0..40 {
        let h = prior.sample(&mut rng);
        let (value, grad) = bound.log_ratio_grad(&h).unwrap();
        assert_eq!(value.to_bits(), bound.log_ratio_batch(std::slice::from_ref(&h)).unwrap()[0].to_bits());
        assert!(grad.dq.dot(&h.q.as_vector()).abs() < 1e-12);
        for _ in 0..3 {
            let dx = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let raw = Vector4::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let q = h.q.as_vector();
            let dq = raw - q * q.dot(&raw);
            fd.push(directional_fd(&bound, &h, dx, dq, 1e-6));
            an.push(grad.dx.dot(&dx) + grad.dq.dot(&dq));
        }
    }
    let err = lfgrasp::nets::gradcheck::relative_error(&fd, &an);
    eprintln!("gradient relative error {err:.2e}");
    assert!(err < 1e-3);
}

#[test]
fn checkpoint_round_trip_preserves_the_model() {
    let (model, _) = toy_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("success.ckpt");
    model.save(&path).unwrap();
    let back = RatioModel::load(&path).unwrap();
    assert_eq!(&back, model);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = HandPrior::default().sample(&mut rng);
    let c = Conditioning::Success(true);
    assert_eq!(back.log_ratio(&c, &h).unwrap().to_bits(), model.log_ratio(&c, &h).unwrap().to_bits());
    let shapes: Vec<Vec<usize>> = back.nets.head.param_shapes().into_iter().step_by(2).collect();
    assert_eq!(shapes, vec![vec![64, 17], vec![64, 64], vec![1, 64]]);
}

#[test]
fn conditioning_of_the_wrong_kind_is_rejected() {
    let (model, _) = toy_model();
    let img = DepthImage { width: 4, height: 3, depths: vec![0.5; 12] };
    let h = HandPrior::default().sample(&mut ChaCha8Rng::seed_from_u64(4));
    assert!(matches!(model.log_ratio(&Conditioning::Image(&img), &h), Err(Error::LayoutMismatch { .. })));
    let layout = ConditioningLayout::image(64, 48);
    assert!(matches!(layout.encode(&Conditioning::Image(&img)), Err(Error::LayoutMismatch { .. })));
}

#[test]
fn oracle_vector_round_trips() {
    let prior = ScenePrior::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let scene = prior.sample(&mut rng);
        let v = oracle_vector(&scene.object, &scene.pose, false);
        let (shape, dims, scale, friction, pose) = decode_oracle_vector(&v).unwrap();
        assert_eq!(shape, scene.object.shape);
        for (a, b) in dims.iter().zip(&scene.object.dims) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((scale - scene.object.scale).abs() < 1e-12);
        assert!((friction - scene.object.friction).abs() < 1e-12);
        assert!((pose.x - scene.pose.x).abs() < 1e-12 && (pose.y - scene.pose.y).abs() < 1e-12);
        assert!((pose.yaw - scene.pose.yaw).abs() < 1e-12);
        let ablated = oracle_vector(&scene.object, &scene.pose, true);
        assert_eq!((ablated[7], ablated[8]), (0.0, 0.0));
        assert_eq!(ablated[..7], v[..7]);
        assert_eq!(ablated[9..], v[9..]);
    }
}

/// A world with one object at one pose: images carry no information about the grasp.
fn fixed_scene() -> ScenePrior {
    let mut p = ScenePrior::default();
    p.objects.retain(|o| o.name == "tea_box");
    p.x_range = [0.0, 1e-12];
    p.y_range = [0.0, 1e-12];
    p.yaw_range = [0.3, 0.3 + 1e-12];
    p.scale_range = [1.0, 1.0 + 1e-12];
    p
}

#[test]
fn uninformative_images_give_unit_ratio() {
    let prior = HandPrior::default();
    let world = WorldParams::default();
    let eps = generate_positive_episodes(3000, 11, &prior, &fixed_scene(), &world, 2_000_000).unwrap();
    let cfg = TrainConfig { max_epochs: 20, ..Default::default() };
    let (model, report) = train_image_ratio(&eps, &prior, &small_arch(), &cfg, 12).unwrap();
    assert_eq!(report.kind, RatioKind::Image);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut total = 0.0;
    let mut count = 0;
    for e in eps.iter().take(20) {
        let bound = model.bind(&Conditioning::Image(e.depth.as_ref().unwrap())).unwrap();
        let hands: Vec<HandConfig> = (0..50).map(|_| eps[rng.random_range(0..eps.len())].hand).collect();
        total += bound.log_ratio_batch(&hands).unwrap().iter().map(|l| l.abs()).sum::<f64>();
        count += hands.len();
    }
    let mean = total / count as f64;
    eprintln!("mean |log r| with uninformative images {mean:.4}");
    assert!(mean < 0.15);
}

#[test]
fn conditional_estimators_need_successes() {
    let prior = HandPrior::default();
    let eps: Vec<_> =
        generate_episodes(2000, 14, &prior, &ScenePrior::default(), &WorldParams::default(), EpisodeSet::NoImages)
            .into_iter()
            .filter(|e| !e.success)
            .collect();
    let cfg = TrainConfig::default();
    assert!(matches!(train_image_ratio(&eps, &prior, &small_arch(), &cfg, 1), Err(Error::Dataset(_))));
    assert!(matches!(train_oracle_ratio(&eps, &prior, &small_arch(), &cfg, false, 1), Err(Error::Dataset(_))));
    assert!(matches!(train_success_ratio(&[], &prior, &small_arch(), &cfg, 1), Err(Error::Dataset(_))));
}

#[test]
fn training_is_bitwise_reproducible() {
    let prior = HandPrior::default();
    let eps = toy_episodes(20_000, 15);
    let cfg = TrainConfig { max_epochs: 3, ..Default::default() };
    let (a, ra) = train_success_ratio(&eps, &prior, &small_arch(), &cfg, 16).unwrap();
    let (b, rb) = train_success_ratio(&eps, &prior, &small_arch(), &cfg, 16).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);
    assert_eq!(ra.calibration.map(f64::to_bits), rb.calibration.map(f64::to_bits));

    let pos = generate_positive_episodes(200, 17, &prior, &ScenePrior::default(), &WorldParams::default(), 1_000_000)
        .unwrap();
    let (c, _) = train_oracle_ratio(&pos, &prior, &small_arch(), &cfg, false, 18).unwrap();
    let (d, _) = train_oracle_ratio(&pos, &prior, &small_arch(), &cfg, false, 18).unwrap();
    assert_eq!(c, d);
}
