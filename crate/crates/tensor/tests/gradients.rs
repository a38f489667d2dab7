use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse_tensor::gradcheck::GradCheck;
use sse_tensor::{Graph, Tensor};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

const SHAPES: [[usize; 4]; 3] = [[1, 2, 4, 4], [2, 3, 6, 4], [2, 1, 8, 6]];

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (i, s) in SHAPES.iter().enumerate() {
        let (k, stride) = [(3, 1), (3, 2), (5, 2)][i];
        let x = rand_tensor(&mut rng, s);
        let w = rand_tensor(&mut rng, &[3, s[1], k, k]);
        let b = rand_tensor(&mut rng, &[3]);
        let report = GradCheck::default()
            .run(&[x, w, b], |_, v| v[0].conv2d(v[1], Some(v[2]), stride, k / 2))
            .unwrap();
        assert!(report.passes(1e-3), "{s:?}: {report:?}");
    }
}

#[test]
fn conv2d_input_gradient_on_2x3x8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_tensor(&mut rng, &[2, 3, 8, 8]);
    let w = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    let check = GradCheck { max_probes: 400, ..Default::default() };
    let report = check.run(&[x, w], |_, v| v[0].conv2d(v[1], None, 1, 1)).unwrap();
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn pointwise_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 5, 3, 3]);
    let w = rand_tensor(&mut rng, &[2, 5, 1, 1]);
    let report = GradCheck::default().run(&[x, w], |_, v| v[0].conv2d(v[1], None, 1, 0)).unwrap();
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn instance_norm_gradients_and_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in SHAPES {
        let x = rand_tensor(&mut rng, &s);
        let report = GradCheck::default().run(&[x], |_, v| v[0].instance_norm()).unwrap();
        assert!(report.passes(1e-3), "{s:?}: {report:?}");
    }
    let g = Graph::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(vec![2, 4, 6, 6], |_| rng.gen_range(-3.0f32..5.0));
    let y = g.constant(x).instance_norm().unwrap().value();
    for plane in y.data().chunks(36) {
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / 36.0;
        let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 36.0;
        assert!(mean.abs() < 1e-5, "{mean}");
        assert!((var - 1.0).abs() < 1e-3, "{var}");
    }
}

#[test]
fn resample_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for s in [[1, 2, 4, 4], [2, 1, 2, 6], [1, 3, 6, 2]] {
        let x = rand_tensor(&mut rng, &s);
        let up = GradCheck::default().run(&[x.clone()], |_, v| v[0].upsample2()).unwrap();
        let down = GradCheck::default().run(&[x], |_, v| v[0].avgpool2()).unwrap();
        assert!(up.passes(1e-3) && down.passes(1e-3), "{s:?}: {up:?} {down:?}");
    }
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [5, 17, 40] {
        // keep away from the kink at zero
        let x = Tensor::from_fn(vec![n], |_| {
            let v: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) { v } else { -v }
        });
        let leaky = GradCheck::default().run(&[x.clone()], |_, v| v[0].leaky_relu(0.2)).unwrap();
        assert!(leaky.passes(1e-6), "{leaky:?}");
        for (name, report) in [
            ("elu", GradCheck::default().run(&[x.clone()], |_, v| v[0].elu()).unwrap()),
            ("sigmoid", GradCheck::default().run(&[x.clone()], |_, v| v[0].sigmoid()).unwrap()),
            ("tanh", GradCheck::default().run(&[x.clone()], |_, v| v[0].tanh()).unwrap()),
            ("abs", GradCheck::default().run(&[x.clone()], |_, v| v[0].abs()).unwrap()),
        ] {
            assert!(report.passes(1e-3), "{name}: {report:?}");
        }
    }
}

#[test]
fn linear_and_shape_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (r, i, o) in [(1, 1, 4), (3, 5, 2), (6, 4, 8)] {
        let x = rand_tensor(&mut rng, &[r, i]);
        let w = rand_tensor(&mut rng, &[o, i]);
        let b = rand_tensor(&mut rng, &[o]);
        let report = GradCheck::default().run(&[x, w, b], |_, v| v[0].linear(v[1], Some(v[2]))).unwrap();
        assert!(report.passes(1e-3), "{report:?}");
    }
    let a = rand_tensor(&mut rng, &[2, 3, 2, 2]);
    let b = rand_tensor(&mut rng, &[2, 1, 2, 2]);
    let report = GradCheck::default()
        .run(&[a, b], |_, v| {
            let c = sse_tensor::Var::concat(&[v[0], v[1]], 1)?;
            c.narrow(1, 1, 3)?.mul(c.narrow(1, 0, 3)?)
        })
        .unwrap();
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn composite_conv_norm_relu_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in SHAPES {
        let x = rand_tensor(&mut rng, &s);
        let w = rand_tensor(&mut rng, &[4, s[1], 3, 3]);
        let b = rand_tensor(&mut rng, &[4]);
        // a 1e-3 step straddles the leaky-ReLU kink for some normalised outputs
        let report = GradCheck { step: 1e-6, ..Default::default() }
            .run(&[x, w, b], |_, v| v[0].conv2d(v[1], Some(v[2]), 1, 1)?.instance_norm()?.leaky_relu(0.2)?.sum())
            .unwrap();
        assert!(report.passes(1e-3), "{s:?}: {report:?}");
    }
}

#[test]
fn forward_and_backward_are_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_fn(vec![2, 3, 8, 8], |_| rng.gen_range(-1.0..1.0)), true);
        let w = g.leaf(Tensor::from_fn(vec![5, 3, 3, 3], |_| rng.gen_range(-1.0..1.0)), true);
        let y = x.conv2d(w, None, 2, 1).unwrap().instance_norm().unwrap().elu().unwrap();
        let loss = y.mul(y).unwrap().mean().unwrap();
        g.backward(loss).unwrap();
        (y.value(), x.grad().unwrap(), w.grad().unwrap())
    };
    assert_eq!(run(), run());
}
