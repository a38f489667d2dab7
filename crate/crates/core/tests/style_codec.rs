use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse_core::convert::image_tensor;
use sse_core::maskgen::{adding_object_mask, free_form_mask, BinaryMask};
use sse_core::shapeworld::{generate_scene, LabeledScene};
use sse_core::style_codec::*;
use sse_core::CoreError;
use sse_tensor::gradcheck::GradCheck;
use sse_tensor::{Binder, Graph, ParamStore, Tensor, TensorError};

fn random_layout(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RegionLayout {
    let regions = rng.gen_range(1..6);
    let ids: Vec<RegionId> = (0..regions).map(|i| if i % 2 == 0 { RegionId::Stuff(i as u16) } else { RegionId::Thing(i as u16) }).collect();
    let grid: Vec<RegionId> = (0..w * h).map(|_| ids[rng.gen_range(0..regions)]).collect();
    RegionLayout::from_grid(w, h, &grid).unwrap()
}

#[test]
fn pooling_matches_a_per_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for _ in 0..200 {
        let (w, h, d) = (rng.gen_range(8..=32), rng.gen_range(8..=32), rng.gen_range(1..6));
        let layout = random_layout(&mut rng, w, h);
        let valid: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.6)).collect();
        let feats = Tensor::from_fn(vec![d, h, w], |_| rng.gen_range(-2.0..2.0));
        let g = Graph::<f64>::new();
        let pooled = masked_region_pool(g.constant(feats.clone()), &layout, &valid).unwrap();
        let got = pooled.styles.value();
        for (r, &id) in layout.ids().iter().enumerate() {
            let pixels: Vec<usize> = (0..w * h).filter(|&p| valid[p] && layout.region_at(p) == id).collect();
            for c in 0..d {
                let expected = if pixels.is_empty() { 0.0 } else { pixels.iter().map(|&p| feats.data()[c * w * h + p]).sum::<f64>() / pixels.len() as f64 };
                worst = worst.max((got.data()[r * d + c] - expected).abs());
            }
            let total = (0..w * h).filter(|&p| layout.region_at(p) == id).count();
            assert_eq!(pooled.valid_ratios()[r], pixels.len() as f64 / total as f64);
        }
    }
    assert!(worst <= 1e-6, "max abs err {worst}");
}

struct Fixture {
    codec: StyleCodec,
    params: ParamStore<f32>,
}

impl Fixture {
    fn new() -> Self {
        let codec = StyleCodec::new(16, 0.125, true);
        let params = codec.init(5).unwrap();
        Self { codec, params }
    }

    fn table(&self, scene: &LabeledScene, image: &[f32], mask: &BinaryMask, fallback: Fallback<'_, f32>) -> sse_core::Result<StyleTable> {
        let t = image_tensor::<f32>(scene.width, scene.height, image)?;
        let layout = RegionLayout::of_scene(scene)?;
        let g = Graph::new();
        let p = Binder::new(&g, &self.params, false);
        let enc = self.codec.encode(&p, &[StyleRequest { image: &t, mask, layout: &layout, fallback }])?;
        Ok(enc[0].to_table())
    }
}

#[test]
fn hidden_content_never_reaches_visible_styles() {
    let fx = Fixture::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..50 {
        let scene = generate_scene(300 + trial, 32).unwrap();
        let mask = free_form_mask(trial, 32, 32).unwrap();
        let mut perturbed = scene.image.clone();
        for p in (0..scene.pixels()).filter(|&p| mask.data[p] == 1) {
            perturbed[3 * p..3 * p + 3].iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        }
        let a = fx.table(&scene, &scene.image, &mask, Fallback::Original).unwrap();
        let b = fx.table(&scene, &perturbed, &mask, Fallback::Original).unwrap();
        for (id, e) in &a.entries {
            if e.source == StyleSource::ErasedImage {
                assert_eq!(e, &b.entries[id], "trial {trial} region {id}");
            }
        }
    }
}

#[test]
fn fully_covered_instances_take_the_fallback_source() {
    let fx = Fixture::new();
    let reference = generate_scene(999, 32).unwrap();
    let ref_image = image_tensor::<f32>(32, 32, &reference.image).unwrap();
    let ref_layout = RegionLayout::of_scene(&reference).unwrap();
    let mut trials = 0;
    let mut seed = 0;
    while trials < 100 {
        seed += 1;
        let scene = generate_scene(seed, 32).unwrap();
        if scene.instance_count() == 0 {
            continue;
        }
        let id = (seed % scene.instance_count() as u64) as u16 + 1;
        let mask = adding_object_mask(&scene.instance, 32, 32, id).unwrap();
        let region = RegionId::Thing(id);

        let train = fx.table(&scene, &scene.image, &mask, Fallback::Original).unwrap();
        let e = train.get(region).unwrap();
        assert_eq!((e.source, e.valid_ratio), (StyleSource::OriginalImage, 1.0));

        let layout = RegionLayout::of_scene(&scene).unwrap();
        let counts = layout.valid_counts(&mask.valid()).unwrap();
        let refs: BTreeMap<RegionId, ExternalReference<'_, f32>> = layout
            .ids()
            .iter()
            .zip(&counts)
            .filter(|(_, &n)| n == 0)
            .map(|(&r, _)| (r, ExternalReference { image: &ref_image, layout: &ref_layout, region: ref_layout.ids()[0] }))
            .collect();
        let infer = fx.table(&scene, &scene.image, &mask, Fallback::References(refs)).unwrap();
        let e = infer.get(region).unwrap();
        assert_eq!((e.source, e.valid_ratio), (StyleSource::ExternalReference, 1.0));
        trials += 1;
    }
}

#[test]
fn orphans_without_references_are_listed() {
    let fx = Fixture::new();
    let scene = (1..).map(|s| generate_scene(s, 32).unwrap()).find(|s| s.instance_count() > 0).unwrap();
    let mask = adding_object_mask(&scene.instance, 32, 32, 1).unwrap();
    match fx.table(&scene, &scene.image, &mask, Fallback::References(BTreeMap::new())) {
        Err(CoreError::OrphanRegions(ids)) => assert!(ids.contains(&RegionId::Thing(1))),
        other => panic!("expected an orphan error, got {other:?}"),
    }
}

#[test]
fn table_json_carries_descriptor_ratio_source_and_payload() {
    let fx = Fixture::new();
    let scene = generate_scene(4, 32).unwrap();
    let mask = free_form_mask(4, 32, 32).unwrap();
    let table = fx.table(&scene, &scene.image, &mask, Fallback::Original).unwrap();
    let json: serde_json::Value = serde_json::from_str(&table.to_json().unwrap()).unwrap();
    let text = json.to_string();
    assert!(text.contains("stuff:") && text.contains("valid_ratio") && text.contains("erased_image"));
    assert_eq!(StyleTable::from_json(&table.to_json().unwrap()).unwrap(), table);
}

fn core<T>(r: sse_core::Result<T>) -> Result<T, TensorError> {
    r.map_err(|e| TensorError::Invalid { op: "core", msg: e.to_string() })
}

const SHAPES: [(usize, usize, usize); 3] = [(2, 4, 4), (3, 6, 5), (4, 8, 6)];

#[test]
fn pooling_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for &(d, h, w) in &SHAPES {
        let layout = random_layout(&mut rng, w, h);
        let valid: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.7)).collect();
        let x = Tensor::from_fn(vec![1, d, h, w], |_| rng.gen_range(-1.0..1.0));
        let report = GradCheck::default().run(&[x], |_, v| Ok(core(masked_region_pool(v[0], &layout, &valid))?.styles)).unwrap();
        assert!(report.passes(1e-3), "{d}×{h}×{w}: {report:?}");
    }
}

#[test]
fn broadcast_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for &(d, h, w) in &SHAPES {
        let mut cov = random_layout(&mut rng, w * 2, h * 2).coverage();
        if rng.gen_bool(0.5) {
            cov = cov.downsample().unwrap();
        }
        let s = Tensor::from_fn(vec![cov.regions, d], |_| rng.gen_range(-1.0..1.0));
        let report = GradCheck::default().run(&[s], |_, v| core(region_broadcast(v[0], &cov))).unwrap();
        assert!(report.passes(1e-3), "{report:?}");
    }
}

#[test]
fn gate_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (i, &(r, d)) in [(1, 3), (3, 5), (5, 8)].iter().enumerate() {
        let gate = ValidRatioGate::new("gate", d);
        let store = gate.init::<f64>(i as u64).unwrap();
        let names = gate.param_names();
        let ratios: Vec<f64> = (0..r).map(|_| rng.gen_range(0.05..1.0)).collect();
        let mut inputs = vec![Tensor::from_fn(vec![r, d], |_| rng.gen_range(-1.0..1.0))];
        inputs.extend(names.iter().map(|n| store.get(n).unwrap().clone()));
        let report = GradCheck::default()
            .run(&inputs, |g, v| {
                let p = Binder::new(g, &store, false);
                for (n, var) in names.iter().zip(&v[1..]) {
                    p.bind(n, *var)?;
                }
                core(gate.apply(&p, v[0], &ratios))
            })
            .unwrap();
        assert!(report.passes(1e-3), "{r}×{d}: {report:?}");
    }
}
