use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse_core::maskgen::BinaryMask;
use sse_core::metrics::*;
use sse_core::model::{InpaintModel, ModelConfig};
use sse_core::shapeworld::{generate_scene, generate_scene_with, ClassCatalog, RenderOptions};

fn random_features(seed: u64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|j| rng.gen_range(-1.0..1.0) * (1.0 + j as f64 * 0.1) + shift).collect()).collect()
}

fn stats(features: &[Vec<f64>]) -> FeatureStats {
    FeatureStats::from_features(features, 7).unwrap()
}

#[test]
fn distance_to_itself_is_zero() {
    for seed in 0..5 {
        let a = stats(&random_features(seed, 40, 8, 0.0));
        assert!(frechet_distance(&a, &a).unwrap() <= 1e-6);
    }
}

#[test]
fn mean_shift_matches_closed_form() {
    let base = random_features(3, 50, 6, 0.0);
    let v: Vec<f64> = (0..6).map(|j| 0.3 * j as f64 - 0.5).collect();
    let shifted: Vec<Vec<f64>> = base.iter().map(|f| f.iter().zip(&v).map(|(a, b)| a + b).collect()).collect();
    let d = frechet_distance(&stats(&base), &stats(&shifted)).unwrap();
    let expected: f64 = v.iter().map(|x| x * x).sum();
    assert!((d - expected).abs() <= 1e-6, "{d} vs {expected}");
}

#[test]
fn diagonal_covariances_match_per_dimension_form() {
    let mk = |mean: Vec<f64>, var: Vec<f64>| {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = var[i];
        }
        FeatureStats { mean, cov, n: 100, extractor_seed: 1 }
    };
    let a = mk(vec![0.0, 1.0, -2.0], vec![1.0, 4.0, 0.25]);
    let b = mk(vec![0.5, 1.0, 0.0], vec![9.0, 1.0, 0.0]);
    let expected: f64 = (0..3).map(|i| (a.mean[i] - b.mean[i]).powi(2) + (a.cov[i * 4].sqrt() - b.cov[i * 4].sqrt()).powi(2)).sum();
    assert!((frechet_distance(&a, &b).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn different_extractors_are_incomparable() {
    let f = random_features(1, 10, 3, 0.0);
    let a = FeatureStats::from_features(&f, 1).unwrap();
    let b = FeatureStats::from_features(&f, 2).unwrap();
    assert!(frechet_distance(&a, &b).is_err());
}

#[test]
fn covariance_is_symmetric_psd() {
    let s = stats(&random_features(9, 30, 5, 0.2));
    let m = nalgebra::DMatrix::from_row_slice(5, 5, &s.cov);
    assert!((&m - m.transpose()).abs().max() < 1e-12);
    assert!(nalgebra::SymmetricEigen::new(m).eigenvalues.iter().all(|&l| l > -1e-6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn distance_is_symmetric_and_nonnegative(s1 in 0u64..1000, s2 in 0u64..1000, shift in -1.0f64..1.0) {
        let a = stats(&random_features(s1, 20, 4, 0.0));
        let b = stats(&random_features(s2, 25, 4, shift));
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab));
    }

    #[test]
    fn accumulation_ignores_order(seed in 0u64..1000) {
        let f = random_features(seed, 30, 5, 100.0);
        let mut g = f.clone();
        g.reverse();
        g.rotate_left(seed as usize % 30);
        let (a, b) = (stats(&f), stats(&g));
        for (x, y) in a.mean.iter().zip(&b.mean).chain(a.cov.iter().zip(&b.cov)) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn scores_match_brute_force(seed in 0u64..10_000, holes in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 5;
        let gt: Vec<u16> = (0..256).map(|_| rng.gen_range(0..k as u16)).collect();
        let pred: Vec<u16> = gt.iter().map(|&g| if rng.gen_bool(0.3) { rng.gen_range(0..k as u16) } else { g }).collect();
        let mask = BinaryMask::from_fn(16, 16, |x, y| !holes || (x + y) % 3 != 0);
        let scope = if holes { Scope::HolesOnly(&mask) } else { Scope::Full };
        let got = miou_and_accuracy(&pred, &gt, k, scope).unwrap();
        let in_scope: Vec<usize> = (0..256).filter(|&p| mask.data[p] == 1).collect();
        let correct = in_scope.iter().filter(|&&p| pred[p] == gt[p]).count();
        let mut ious = Vec::new();
        for c in 0..k as u16 {
            let inter = in_scope.iter().filter(|&&p| pred[p] == c && gt[p] == c).count();
            let union = in_scope.iter().filter(|&&p| pred[p] == c || gt[p] == c).count();
            if in_scope.iter().any(|&p| gt[p] == c) {
                ious.push(inter as f64 / union as f64);
            }
        }
        prop_assert_eq!(got.acc, correct as f64 / in_scope.len() as f64);
        prop_assert_eq!(got.miou, ious.iter().sum::<f64>() / ious.len() as f64);
    }
}

#[test]
fn segmentation_fixed_cases() {
    let gt = vec![1u16; 16];
    assert_eq!(miou_and_accuracy(&gt, &gt, 3, Scope::Full).unwrap(), SegmentationScores { miou: 1.0, acc: 1.0 });
    let other = vec![2u16; 16];
    assert_eq!(miou_and_accuracy(&other, &gt, 3, Scope::Full).unwrap().miou, 0.0);
    // 4×4 canvas, class 1 on columns 0..2 in gt and 1..3 in pred: IoU of class 1 is 4/12
    let gt: Vec<u16> = (0..16).map(|p| u16::from(p % 4 < 2)).collect();
    let pred: Vec<u16> = (0..16).map(|p| u16::from((1..3).contains(&(p % 4)))).collect();
    let mut cm = ConfusionMatrix::new(2);
    cm.add(&pred, &gt, Scope::Full).unwrap();
    let (tp, fp, fnn) = (cm.get(1, 1), cm.get(0, 1), cm.get(1, 0));
    assert_eq!(tp as f64 / (tp + fp + fnn) as f64, 1.0 / 3.0);
    let empty = BinaryMask::zeros(4, 4);
    assert!(miou_and_accuracy(&pred, &gt, 2, Scope::HolesOnly(&empty)).is_err());
}

#[test]
fn oracle_is_exact_without_jitter() {
    let catalog = ClassCatalog::default();
    for seed in 0..100 {
        let s = generate_scene_with(seed, 64, &catalog, RenderOptions { jitter: false, texture: false }).unwrap();
        let pred = oracle_segment(&s.image, 64, 64, &catalog).unwrap();
        let wrong = pred.iter().zip(&s.semantic).filter(|(a, b)| a != b).count();
        assert_eq!(wrong, 0, "seed {seed}: {wrong} pixels misclassified");
    }
}

#[test]
fn oracle_accuracy_with_default_rendering() {
    let catalog = ClassCatalog::default();
    let (mut correct, mut total) = (0usize, 0usize);
    for seed in 0..100 {
        let s = generate_scene(seed, 64).unwrap();
        let pred = oracle_segment(&s.image, 64, 64, &catalog).unwrap();
        assert_eq!(pred, oracle_segment(&s.image, 64, 64, &catalog).unwrap());
        correct += pred.iter().zip(&s.semantic).filter(|(a, b)| a == b).count();
        total += pred.len();
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.98, "accuracy {acc}");
}

#[test]
fn median_keeps_center_unless_surrounded() {
    let mut img = vec![0.5f32; 3 * 9];
    img[3 * 4..3 * 5].copy_from_slice(&[0.9, 0.1, 0.2]);
    assert_eq!(&median_smooth(&img, 3, 3).unwrap()[3 * 4..3 * 5], &[0.5, 0.5, 0.5]);
    img[3 * 5..3 * 6].copy_from_slice(&[0.9, 0.1, 0.2]);
    assert_eq!(&median_smooth(&img, 3, 3).unwrap()[3 * 4..3 * 5], &[0.9, 0.1, 0.2]);
}

#[test]
fn diversity_contract() {
    let mask = BinaryMask::from_fn(4, 4, |x, _| x < 2);
    let a = vec![0.2f32; 48];
    let mut b = a.clone();
    for p in 0..16 {
        if p % 4 < 2 {
            b[3 * p..3 * p + 3].iter_mut().for_each(|v| *v += 0.25);
        }
    }
    assert_eq!(diversity_score(&[&a, &a], &mask).unwrap(), 0.0);
    assert!((diversity_score(&[&a, &b], &mask).unwrap() - 0.25).abs() < 1e-6);
    assert!(diversity_score(&[&a], &mask).is_err());
    let mut c = a.clone();
    c[3 * 3] = 0.0;
    assert!(diversity_score(&[&a, &c], &mask).is_err());
}

#[test]
fn evaluation_report_covers_each_protocol() {
    let model = InpaintModel::<f32>::new(ModelConfig::smoke(ClassCatalog::default().len()), 0).unwrap();
    let scenes: Vec<_> = (100..106).map(|s| generate_scene(s, 32).unwrap()).collect();
    let report = evaluate(&model, &scenes, &EvalOptions::default()).unwrap();
    assert_eq!(report.0.len(), 4);
    for r in report.0.values() {
        assert!(r.fid.is_finite() && r.fid >= 0.0);
        assert!((0.0..=1.0).contains(&r.miou) && (0.0..=1.0).contains(&r.acc));
        assert_eq!(r.scenes + r.skipped, scenes.len());
    }
    let json = serde_json::to_value(&report).unwrap();
    assert!(json["addobj"]["fid"].is_number());
}
