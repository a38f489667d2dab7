use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse_core::convert::image_tensor;
use sse_core::generator::{FusedNorm, GatedConv, ModulationInputs};
use sse_core::maskgen::free_form_mask;
use sse_core::model::Sample;
use sse_core::shapeworld::generate_scene;
use sse_core::style_codec::{Fallback, RegionId, RegionLayout};
use sse_core::training::{TrainConfig, Trainer};
use sse_tensor::gradcheck::GradCheck;
use sse_tensor::{Binder, ParamStore, Tensor, TensorError};

const SHAPES: [[usize; 4]; 3] = [[1, 2, 4, 4], [2, 3, 6, 4], [2, 1, 8, 6]];

fn core<T>(r: sse_core::Result<T>) -> Result<T, TensorError> {
    r.map_err(|e| TensorError::Invalid { op: "core", msg: e.to_string() })
}

/// Inputs for a check over `x` plus every parameter in `store`, in name order.
fn with_params(x: Vec<Tensor<f64>>, store: &ParamStore<f64>) -> (Vec<Tensor<f64>>, Vec<String>) {
    let names: Vec<String> = store.names().cloned().collect();
    let mut inputs = x;
    inputs.extend(names.iter().map(|n| store.get(n).unwrap().clone()));
    (inputs, names)
}

#[test]
fn gated_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for (i, s) in SHAPES.iter().enumerate() {
        let conv = GatedConv::new("gc", s[1], 3, 1 + i % 2);
        let mut store = ParamStore::new();
        conv.init::<f64>(i as u64, &mut store).unwrap();
        let x = Tensor::from_fn(s.to_vec(), |_| rng.gen_range(-1.0..1.0));
        let (inputs, names) = with_params(vec![x], &store);
        let report = GradCheck::default()
            .run(&inputs, |g, v| {
                let p = Binder::new(g, &store, false);
                for (n, var) in names.iter().zip(&v[1..]) {
                    p.bind(n, *var)?;
                }
                core(conv.forward(&p, v[0]))
            })
            .unwrap();
        assert!(report.passes(1e-3), "{s:?}: {report:?}");
    }
}

#[test]
fn fused_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for (i, s) in SHAPES.iter().enumerate() {
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (k, d) = (2 + i, 2);
        let norm = FusedNorm::new("fn", c, k, Some(d));
        let mut store = ParamStore::new();
        norm.init::<f64>(i as u64, &mut store).unwrap();
        let names: Vec<String> = store.names().cloned().collect();
        for name in &names {
            store.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let cond = Tensor::from_fn(vec![n, k, h, w], |_| rng.gen_range(0.0..1.0));
        let coverage: Vec<_> = (0..n)
            .map(|_| {
                let grid: Vec<RegionId> = (0..h * w).map(|_| RegionId::Stuff(rng.gen_range(0..3))).collect();
                RegionLayout::from_grid(w, h, &grid).unwrap().coverage()
            })
            .collect();
        let mods = ModulationInputs { cond, coverage: coverage.clone() };
        let x = Tensor::from_fn(s.to_vec(), |_| rng.gen_range(-1.0..1.0));
        let mut inputs = vec![x];
        inputs.extend(coverage.iter().map(|cov| Tensor::from_fn(vec![cov.regions, d], |_| rng.gen_range(-1.0..1.0))));
        let (inputs, names) = with_params(inputs, &store);
        let report = GradCheck::default()
            .run(&inputs, |g, v| {
                let p = Binder::new(g, &store, false);
                for (name, var) in names.iter().zip(&v[1 + n..]) {
                    p.bind(name, *var)?;
                }
                core(norm.forward(&p, v[0], &mods, Some(&v[1..1 + n])))
            })
            .unwrap();
        assert!(report.passes(1e-3), "{s:?}: {report:?}");
    }
}

#[test]
fn composite_generator_loss_gradient() {
    let mut config = TrainConfig::smoke(7);
    config.seed = 3;
    let trainer = Trainer::<f64>::new(config).unwrap();
    let scene = generate_scene(17, 32).unwrap();
    let mask = free_form_mask(17, 32, 32).unwrap();
    let image = image_tensor::<f64>(32, 32, &scene.image).unwrap();
    let layout = RegionLayout::of_scene(&scene).unwrap();
    let samples = [Sample { scene: &scene, image: &image, mask: &mask, layout: &layout, fallback: Fallback::Original }];

    let gate = trainer.model.codec.as_ref().unwrap().gate.as_ref().unwrap();
    let head = &trainer.model.generator.stages.last().unwrap().head;
    let mut names = gate.param_names();
    names.extend([head.weight_name(), head.bias_name()]);
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| trainer.model.params.get(n).unwrap().clone()).collect();

    // A small step keeps the probes off the ReLU and hinge kinks.
    let check = GradCheck { step: 1e-6, max_probes: 12, ..Default::default() };
    let report = check
        .run(&inputs, |g, v| {
            let pg = Binder::new(g, &trainer.model.params, false);
            let pd = Binder::new(g, &trainer.disc_params, false);
            for (n, var) in names.iter().zip(v) {
                pg.bind(n, *var)?;
            }
            Ok(core(trainer.generator_loss(&pg, &pd, &samples))?.total)
        })
        .unwrap();
    assert!(report.passes(1e-2), "{report:?}");
}
