use sse_core::convert::image_tensor;
use sse_core::generator::Checkpoint;
use sse_core::maskgen::{adding_object_mask, free_form_mask, mask_for_scene, BinaryMask, MaskKind};
use sse_core::model::Sample;
use sse_core::shapeworld::{generate_scene, LabeledScene};
use sse_core::style_codec::{Fallback, RegionLayout};
use sse_core::training::*;
use sse_core::ModelTrainer;
use sse_tensor::{Binder, Graph};

fn corpus(n: u64) -> Vec<LabeledScene> {
    (0..n).map(|s| generate_scene(s, 32).unwrap()).collect()
}

fn smoke(steps: u64) -> TrainConfig {
    TrainConfig { max_steps: Some(steps), ..TrainConfig::smoke(7) }
}

fn scene_with_instances(from: u64) -> LabeledScene {
    (from..).map(|s| generate_scene(s, 32).unwrap()).find(|s| s.instance_count() > 0).unwrap()
}

#[test]
fn resuming_from_a_checkpoint_is_bit_identical() {
    let scenes = corpus(8);
    let mut straight = ModelTrainer::new(smoke(6)).unwrap();
    straight.run(&scenes, None, |_| {}).unwrap();

    let mut first = ModelTrainer::new(smoke(3)).unwrap();
    first.run(&scenes, None, |_| {}).unwrap();
    let bytes = first.to_checkpoint().unwrap().to_bytes().unwrap();
    let mut resumed = ModelTrainer::from_checkpoint(&Checkpoint::read(&mut bytes.as_slice()).unwrap()).unwrap();
    resumed.config.max_steps = Some(6);
    resumed.run(&scenes, None, |_| {}).unwrap();

    assert_eq!(resumed.progress, straight.progress);
    assert!(resumed.model.params == straight.model.params, "generator parameters diverged");
    assert!(resumed.disc_params == straight.disc_params, "discriminator parameters diverged");
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut trainer = ModelTrainer::new(TrainConfig { lr: 0.0, ..smoke(3) }).unwrap();
    let (g0, d0) = (trainer.model.params.clone(), trainer.disc_params.clone());
    trainer.run(&corpus(4), None, |_| {}).unwrap();
    assert!(trainer.model.params == g0 && trainer.disc_params == d0);
}

#[test]
fn logged_total_is_the_weighted_sum() {
    let weights = LossWeights { adv: 0.5, perceptual: 3.0, l1: 2.0 };
    let mut trainer = ModelTrainer::new(TrainConfig { weights, ..smoke(3) }).unwrap();
    for s in trainer.run(&corpus(4), None, |_| {}).unwrap() {
        let want = 0.5 * s.l_adv + 3.0 * s.l_p + 2.0 * s.l_1;
        assert!((s.total - want).abs() <= 1e-9 * want.abs().max(1.0), "step {}: {} vs {want}", s.step, s.total);
        assert!([s.l_adv, s.l_p, s.l_1, s.l_d].iter().all(|v| v.is_finite()));
    }
}

#[test]
fn every_generator_parameter_receives_gradient() {
    let trainer = ModelTrainer::new(smoke(1)).unwrap();
    let scenes = corpus(2);
    let images: Vec<_> = scenes.iter().map(|s| image_tensor::<f32>(32, 32, &s.image).unwrap()).collect();
    let layouts: Vec<_> = scenes.iter().map(|s| RegionLayout::of_scene(s).unwrap()).collect();
    let masks: Vec<_> = (0..2).map(|i| free_form_mask(i, 32, 32).unwrap()).collect();
    let samples: Vec<_> = (0..2)
        .map(|i| Sample { scene: &scenes[i], image: &images[i], mask: &masks[i], layout: &layouts[i], fallback: Fallback::Original })
        .collect();
    let g = Graph::new();
    let pg = Binder::new(&g, &trainer.model.params, true);
    let pd = Binder::new(&g, &trainer.disc_params, false);
    let loss = trainer.generator_loss(&pg, &pd, &samples).unwrap();
    g.backward(loss.total).unwrap();
    let grads = pg.grads();
    let dead: Vec<&String> = trainer
        .model
        .params
        .names()
        .filter(|n| grads.get(*n).map_or(true, |t| t.data().iter().all(|&v| v == 0.0)))
        .collect();
    assert!(dead.is_empty(), "{} of {} parameters without gradient, first {:?}", dead.len(), trainer.model.params.len(), dead.first());
    assert!(pd.grads().is_empty(), "the generator step must not produce discriminator gradients");
}

#[test]
fn hidden_pixels_do_not_reach_the_generator() {
    let trainer = ModelTrainer::new(smoke(1)).unwrap();
    let scene = generate_scene(21, 32).unwrap();
    let mask = mask_for_scene(MaskKind::FreeForm, 5, &scene).unwrap();
    let layout = RegionLayout::of_scene(&scene).unwrap();
    let counts = layout.valid_counts(&mask.valid()).unwrap();
    assert!(counts.iter().all(|&c| c > 0), "fixture must not fully erase a region");
    let mut noisy = scene.clone();
    for p in (0..scene.pixels()).filter(|&p| mask.data[p] == 1) {
        noisy.image[3 * p..3 * p + 3].copy_from_slice(&[1.0, 0.0, 1.0]);
    }
    let fakes = |s: &LabeledScene| {
        let image = image_tensor::<f32>(32, 32, &s.image).unwrap();
        let g = Graph::new();
        let p = Binder::new(&g, &trainer.model.params, false);
        let sample = Sample { scene: s, image: &image, mask: &mask, layout: &layout, fallback: Fallback::Original };
        let out = trainer.model.forward(&p, &[sample]).unwrap();
        out.stages.iter().map(|v| v.value()).collect::<Vec<_>>()
    };
    assert!(fakes(&scene) == fakes(&noisy));
}

#[test]
fn fully_erased_instances_use_the_original_fallback_in_training() {
    let mut trainer = ModelTrainer::new(smoke(1)).unwrap();
    let scene = scene_with_instances(30);
    let mask = adding_object_mask(&scene.instance, 32, 32, 1).unwrap();
    let log = trainer.train_step(&[&scene], &[(MaskKind::AddObject, mask)]).unwrap();
    assert!(log.fallbacks >= 1);
    let log = trainer.train_step(&[&scene], &[(MaskKind::FreeForm, BinaryMask::zeros(32, 32))]).unwrap();
    assert_eq!(log.fallbacks, 0);
}

#[test]
fn run_writes_a_json_lines_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = corpus(4);
    let config = TrainConfig { epochs: 2, max_steps: None, batch_size: 2, checkpoint_every: 1, ..TrainConfig::smoke(7) };
    let mut trainer = ModelTrainer::new(config).unwrap();
    let logs = trainer.run(&scenes, Some(dir.path()), |_| {}).unwrap();
    assert_eq!(logs.len(), 4);
    let read = read_log(&dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(read.len(), logs.len());
    assert!(read.iter().zip(&logs).all(|(a, b)| a == b), "log entries do not round-trip");

    let first = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for key in ["step", "epoch", "L_adv", "L_P", "L_1", "total", "L_D", "fallbacks", "masks", "seconds"] {
        assert!(line.get(key).is_some(), "log line lacks {key}");
    }
    for name in ["epoch-0001.ssec", "epoch-0002.ssec", FINAL_CHECKPOINT] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    assert_eq!(latest_checkpoint(dir.path()).unwrap().unwrap(), dir.path().join(FINAL_CHECKPOINT));
    std::fs::remove_file(dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(latest_checkpoint(dir.path()).unwrap().unwrap(), dir.path().join("epoch-0002.ssec"));

    let resumed = ModelTrainer::from_checkpoint(&Checkpoint::load(&dir.path().join("epoch-0002.ssec")).unwrap()).unwrap();
    assert_eq!(resumed.progress, Progress { step: 4, epoch: 2, batch: 0 });
}

#[test]
fn epoch_order_and_mask_seeds_are_deterministic() {
    assert_eq!(epoch_order(1, 3, 20), epoch_order(1, 3, 20));
    assert_ne!(epoch_order(1, 3, 20), epoch_order(1, 4, 20));
    let mut sorted = epoch_order(9, 0, 20);
    sorted.sort_unstable();
    assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    assert_ne!(mask_seed(0, 0, 0, 1), mask_seed(0, 0, 1, 0));
}
