use proptest::prelude::*;
use sse_core::maskgen::*;
use sse_core::shapeworld::pngio::quantize_image;
use sse_core::shapeworld::*;

fn brute_bbox(scene: &LabeledScene, id: u16) -> (usize, usize, usize, usize) {
    let (mut x0, mut y0, mut x1, mut y1) = (scene.width, scene.height, 0, 0);
    for y in 0..scene.height {
        for x in 0..scene.width {
            if scene.instance[y * scene.width + x] == id {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0, y0, x1, y1)
}

#[test]
fn mask_protocols_on_100_scenes() {
    for seed in 0..100 {
        let scene = generate_scene(seed, 64).unwrap();
        let (w, h) = (scene.width, scene.height);
        let ext = mask_for_scene(MaskKind::Extension, seed, &scene).unwrap();
        let out = mask_for_scene(MaskKind::Outpainting, seed, &scene).unwrap();
        let mut wrong = 0;
        for y in 0..h {
            for x in 0..w {
                wrong += (ext.is_erased(x, y) != (x < w / 2)) as usize;
                let kept = (w / 4..3 * w / 4).contains(&x) && (h / 4..3 * h / 4).contains(&y);
                wrong += (out.is_erased(x, y) == kept) as usize;
            }
        }
        assert_eq!(wrong, 0, "seed {seed}");
        assert_eq!(out.erased_count(), w * h - w * h / 4);
        for id in 1..=scene.instance_count() {
            let m = adding_object_mask(&scene.instance, h, w, id).unwrap();
            let (x0, y0, x1, y1) = brute_bbox(&scene, id);
            let bad = (0..w * h).filter(|&p| (m.data[p] == 1) != ((x0..=x1).contains(&(p % w)) && (y0..=y1).contains(&(p / w)))).count();
            assert_eq!(bad, 0, "seed {seed} instance {id}");
        }
    }
}

#[test]
fn adding_object_rejects_absent_instances() {
    let scene = generate_scene(1, 32).unwrap();
    assert!(adding_object_mask(&scene.instance, 32, 32, scene.instance_count() + 1).is_err());
    assert!(adding_object_mask(&scene.instance, 32, 32, 0).is_err());
}

#[test]
fn scene_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [0, 5, 77] {
        let scene = generate_scene(seed, 64).unwrap();
        let sub = dir.path().join(format!("s{seed}"));
        write_scene(&sub, &scene).unwrap();
        let back = read_scene(&sub).unwrap();
        assert_eq!((back.semantic == scene.semantic, back.instance == scene.instance, back.edges == scene.edges), (true, true, true));
        assert_eq!(quantize_image(&back.image), quantize_image(&scene.image));
        assert_eq!(back.seed, seed);
    }
}

#[test]
fn manifest_round_trip_regenerates_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let m = CorpusManifest::new(3, 5, 32);
    let path = dir.path().join("manifest.json");
    m.save(&path).unwrap();
    let back = CorpusManifest::load(&path).unwrap();
    assert_eq!(back, m);
    assert!(back.scenes().unwrap() == m.scenes().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_scenes_satisfy_label_invariants(seed in any::<u64>(), res in prop::sample::select(vec![32usize, 64])) {
        let catalog = ClassCatalog::default();
        let scene = generate_scene(seed, res).unwrap();
        prop_assert!(scene.validate(&catalog).is_ok());
        prop_assert!(scene.image.iter().all(|v| (0.0..=1.0).contains(v)));
        for id in 1..=scene.instance_count() {
            let area = scene.instance.iter().filter(|&&i| i == id).count();
            prop_assert!(area >= min_instance_pixels(res), "instance {} has {} pixels", id, area);
        }
        prop_assert!(generate_scene(seed, res).unwrap() == scene);
    }

    #[test]
    fn render_options_only_change_colors(seed in any::<u64>()) {
        let catalog = ClassCatalog::default();
        let a = generate_scene(seed, 32).unwrap();
        let b = generate_scene_with(seed, 32, &catalog, RenderOptions { jitter: false, texture: false }).unwrap();
        prop_assert!(a.semantic == b.semantic && a.instance == b.instance);
    }

    #[test]
    fn free_form_masks_are_deterministic_and_bounded(seed in any::<u64>(), hw in prop::sample::select(vec![(32usize, 32usize), (64, 64), (64, 128)])) {
        let (h, w) = hw;
        let m = free_form_mask(seed, h, w).unwrap();
        prop_assert!((FREE_FORM_MIN_FRACTION..=FREE_FORM_MAX_FRACTION).contains(&m.erased_fraction()));
        prop_assert!(free_form_mask(seed, h, w).unwrap() == m);
        let back = BinaryMask::read_png(m.to_png_bytes().unwrap().as_slice()).unwrap();
        prop_assert!(back == m);
    }

    #[test]
    fn training_masks_follow_their_protocol(seed in any::<u64>(), scene_seed in 0u64..500) {
        let scene = generate_scene(scene_seed, 32).unwrap();
        let (kind, mask) = training_mask(seed, &scene).unwrap();
        match kind {
            MaskKind::Extension => prop_assert!(mask == extension_mask(32, 32).unwrap()),
            MaskKind::Outpainting => prop_assert!(mask == outpainting_mask(32, 32).unwrap()),
            MaskKind::AddObject => prop_assert!(scene.instance_count() > 0 && mask.erased_count() > 0),
            MaskKind::FreeForm => prop_assert!(mask.erased_fraction() >= FREE_FORM_MIN_FRACTION),
        }
    }
}
