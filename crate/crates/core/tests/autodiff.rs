use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vot::autodiff::{
    adam_step, clip_grad_norm, global_norm, AdamConfig, AdamState, Checkpoint, ParameterSet, Tape,
    Tensor, Var,
};
use vot::Error;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Checks tape gradients of `f` against central differences for every input.
fn check<F>(inputs: &[Tensor], f: F, tol: f64)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone(), true)).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };
    let h = 1e-5;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(&tape, vars[i]);
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[j];
            assert!(
                rel_err(a, numeric) <= tol,
                "input {i} element {j}: analytic {a}, numeric {numeric}"
            );
        }
    }
}

/// Random projection to a scalar so every output element gets a distinct weight.
fn project(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(tape.value(x).shape(), &mut rng);
    let w = tape.constant(w);
    let y = tape.mul(x, w).unwrap();
    tape.sum(y)
}

#[test]
fn matmul_hand_example_and_identity() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
    let b = tape.constant(Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
    let i = tape.constant(Tensor::identity(2));
    let ai = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(ai), tape.value(a));
}

#[test]
fn matmul_shape_mismatch_is_rejected() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    let c = tape.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.add(a, c), Err(Error::Shape { .. })));
}

#[test]
fn matmul_gradient_of_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [random(&[3, 4], &mut rng), random(&[4, 2], &mut rng)];
    check(
        &inputs,
        |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            t.sum(c)
        },
        1e-6,
    );
    check(
        &inputs,
        |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            project(t, c, 7)
        },
        1e-6,
    );
}

#[test]
fn softmax_rows_properties() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[&[0.0, 3f64.ln()], &[100.0, 100.0 + 3f64.ln()]]).unwrap());
    let y = tape.softmax_rows(x).unwrap();
    for r in 0..2 {
        assert!((tape.value(y).get2(r, 0) - 0.25).abs() < 1e-12);
        assert!((tape.value(y).get2(r, 1) - 0.75).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = tape.constant(random(&[5, 7], &mut rng).map(|v| 50.0 * v));
    let y = tape.softmax_rows(x).unwrap();
    for r in 0..5 {
        let s: f64 = tape.value(y).row(r).iter().sum();
        assert!((s - 1.0).abs() <= 1e-9);
    }
    check(
        &[random(&[3, 5], &mut rng)],
        |t, v| {
            let y = t.softmax_rows(v[0]).unwrap();
            project(t, y, 3)
        },
        1e-6,
    );
}

/// Phi(1) by composite Simpson integration of the density from 0 to 1.
fn phi_one_by_quadrature() -> f64 {
    let n = 2000;
    let h = 1.0 / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

#[test]
fn gelu_values_and_gradient() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[3], vec![0.0, 10.0, 1.0]).unwrap());
    let y = tape.gelu(x);
    let v = tape.value(y).data();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 10.0).abs() < 1e-6);
    assert!((v[2] - phi_one_by_quadrature()).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    check(
        &[random(&[4, 3], &mut rng).map(|v| 3.0 * v)],
        |t, v| {
            let y = t.gelu(v[0]);
            project(t, y, 4)
        },
        1e-6,
    );
}

#[test]
fn layer_norm_statistics_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::new();
    let x = tape.constant(random(&[6, 8], &mut rng).map(|v| 5.0 * v + 2.0));
    let g = tape.constant(Tensor::full(&[8], 1.0));
    let b = tape.constant(Tensor::zeros(&[8]));
    let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
    for r in 0..6 {
        let row = tape.value(y).row(r);
        let mean = row.iter().sum::<f64>() / 8.0;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
        assert!(mean.abs() <= 1e-9);
        assert!((var - 1.0).abs() <= 1e-6);
    }
    let c = tape.constant(Tensor::full(&[2, 8], 3.5));
    let gain = tape.constant(random(&[8], &mut rng));
    let bias = tape.constant(random(&[8], &mut rng));
    let y = tape.layer_norm(c, gain, bias, 1e-5).unwrap();
    for r in 0..2 {
        assert_eq!(tape.value(y).row(r), tape.value(bias).data());
    }
    assert!(tape.layer_norm(c, gain, bias, 0.0).is_err());
    let inputs = [random(&[3, 6], &mut rng), random(&[6], &mut rng), random(&[6], &mut rng)];
    check(
        &inputs,
        |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
            project(t, y, 5)
        },
        1e-6,
    );
}

#[test]
fn attention_matches_unfused_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (seq, heads, d, segs) = (3, 2, 4, 2);
    let inputs = [
        random(&[segs * seq, d], &mut rng),
        random(&[segs * seq, d], &mut rng),
        random(&[segs * seq, d], &mut rng),
    ];
    let mut tape = Tape::new();
    let v: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let fused = tape.attention(v[0], v[1], v[2], seq, heads).unwrap();
    let fused = tape.value(fused).clone();
    let dh = d / heads;
    for s in 0..segs {
        for h in 0..heads {
            let q = tape.slice(v[0], 0, s * seq, seq).unwrap();
            let q = tape.slice(q, 1, h * dh, dh).unwrap();
            let k = tape.slice(v[1], 0, s * seq, seq).unwrap();
            let k = tape.slice(k, 1, h * dh, dh).unwrap();
            let vv = tape.slice(v[2], 0, s * seq, seq).unwrap();
            let vv = tape.slice(vv, 1, h * dh, dh).unwrap();
            let kt = transpose(tape.value(k));
            let kt = tape.constant(kt);
            let scores = tape.matmul(q, kt).unwrap();
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let p = tape.softmax_rows(scores).unwrap();
            let o = tape.matmul(p, vv).unwrap();
            for r in 0..seq {
                for c in 0..dh {
                    let got = fused.get2(s * seq + r, h * dh + c);
                    assert!((got - tape.value(o).get2(r, c)).abs() < 1e-12);
                }
            }
        }
    }
    check(
        &inputs,
        |t, v| {
            let o = t.attention(v[0], v[1], v[2], seq, heads).unwrap();
            project(t, o, 6)
        },
        1e-6,
    );
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = t.dims2("t").unwrap();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.get2(i, j);
        }
    }
    Tensor::new(&[c, r], out).unwrap()
}

#[test]
fn attention_rows_are_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tape = Tape::new();
    let q = tape.constant(random(&[10, 6], &mut rng).map(|v| 4.0 * v));
    let o = tape.attention(q, q, q, 5, 3).unwrap();
    let p = tape.attention_probs(o).unwrap();
    assert_eq!(p.len(), 2 * 3 * 5 * 5);
    for row in p.chunks(5) {
        assert!(row.iter().all(|&x| x >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert!(tape.attention(q, q, q, 4, 3).is_err());
    assert!(tape.attention(q, q, q, 5, 4).is_err());
}

#[test]
fn elementwise_suite_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[2, 3], &mut rng);
    check(
        &[a.clone(), b.clone()],
        |t, v| {
            let s = t.add(v[0], v[1]).unwrap();
            let d = t.sub(s, v[1]).unwrap();
            let m = t.mul(d, v[1]).unwrap();
            let k = t.scale(m, -2.5);
            let r = t.reshape(k, &[3, 2]).unwrap();
            let r = t.reshape(r, &[6]).unwrap();
            let sq = t.sum_sq(r);
            let mean = t.mean(v[0]);
            let total = t.add(sq, mean).unwrap();
            t.add(total, mean).unwrap()
        },
        1e-6,
    );
    check(
        &[a, b, random(&[2, 2], &mut rng)],
        |t, v| {
            let c = t.concat(&[v[0], v[2], v[1]], 1).unwrap();
            let s = t.slice(c, 1, 2, 4).unwrap();
            let rows = t.concat(&[v[0], v[1]], 0).unwrap();
            let g = t.gather_rows(rows, &[3, 0, 3]).unwrap();
            let e = t.slice(v[2], 0, 1, 1).unwrap();
            let e = t.expand_rows(e, 4).unwrap();
            let p1 = project(t, s, 8);
            let p2 = project(t, g, 9);
            let p3 = project(t, e, 10);
            let x = t.add(p1, p2).unwrap();
            t.add(x, p3).unwrap()
        },
        1e-6,
    );
}

#[test]
fn concat_gradient_routes_upstream_segments() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 1]), true);
    let b = tape.leaf(Tensor::zeros(&[2, 2]), true);
    let c = tape.concat(&[a, b], 1).unwrap();
    let w = tape.constant(Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
    let y = tape.mul(c, w).unwrap();
    let l = tape.sum(y);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(&tape, a).data(), &[1.0, 4.0]);
    assert_eq!(g.wrt(&tape, b).data(), &[2.0, 3.0, 5.0, 6.0]);
}

#[test]
fn reshape_round_trip_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0 = random(&[3, 4], &mut rng);
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone(), true);
    let r = tape.reshape(x, &[2, 6]).unwrap();
    let back = tape.reshape(r, &[3, 4]).unwrap();
    assert_eq!(tape.value(back), &x0);
    let l = tape.sum(back);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(&tape, x), Tensor::full(&[3, 4], 1.0));
}

#[test]
fn sum_sq_hand_value() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
    let s = tape.sum_sq(x);
    assert_eq!(tape.value(s).item(), 25.0);
}

#[test]
fn backward_chain_rule_fan_out_and_reachability() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0), true);
    let unused = tape.leaf(Tensor::scalar(1.0), true);
    let l = tape.mul(x, x).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(&tape, x).item(), 6.0);
    assert_eq!(g.wrt(&tape, unused).item(), 0.0);

    check(
        &[Tensor::new(&[3], vec![0.3, -1.2, 2.0]).unwrap()],
        |t, v| {
            let a = t.gelu(v[0]);
            let b = t.scale(v[0], 3.0);
            let s = t.mul(a, b).unwrap();
            t.sum(s)
        },
        1e-6,
    );

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2]), true);
    assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x0 = random(&[3, 3], &mut rng);
    let grad_of = |alpha: f64, beta: f64| {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone(), true);
        let g = tape.gelu(x);
        let l1 = tape.sum_sq(g);
        let sm = tape.softmax_rows(x).unwrap();
        let l2 = project(&mut tape, sm, 11);
        let a = tape.scale(l1, alpha);
        let b = tape.scale(l2, beta);
        let l = tape.add(a, b).unwrap();
        tape.backward(l).unwrap().wrt(&tape, x)
    };
    let g1 = grad_of(1.0, 0.0);
    let g2 = grad_of(0.0, 1.0);
    let g = grad_of(2.0, -0.5);
    for i in 0..9 {
        let expect = 2.0 * g1.data()[i] - 0.5 * g2.data()[i];
        assert!((g.data()[i] - expect).abs() <= 1e-9);
    }
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut tape = Tape::new();
        let q = tape.leaf(random(&[6, 4], &mut rng), true);
        let o = tape.attention(q, q, q, 3, 2).unwrap();
        let l = tape.sum_sq(o);
        let g = tape.backward(l).unwrap().wrt(&tape, q);
        (tape.value(l).item().to_bits(), g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn clip_grad_norm_contract() {
    let mut small = vec![Tensor::new(&[2], vec![0.3, 0.4]).unwrap()];
    let before = small.clone();
    assert_eq!(clip_grad_norm(&mut small, 1.0).unwrap(), 0.5);
    assert_eq!(small, before);

    let mut big = vec![Tensor::new(&[2], vec![0.0, 4.0]).unwrap()];
    clip_grad_norm(&mut big, 1.0).unwrap();
    assert!((global_norm(&big) - 1.0).abs() <= 1e-9);

    let mut two = vec![
        Tensor::new(&[2], vec![3.0, 0.0]).unwrap(),
        Tensor::new(&[2], vec![0.0, 4.0]).unwrap(),
    ];
    assert_eq!(clip_grad_norm(&mut two, 1.0).unwrap(), 5.0);
    let got: Vec<f64> = two.iter().flat_map(|t| t.data().to_vec()).collect();
    for (g, e) in got.iter().zip([0.6, 0.0, 0.0, 0.8]) {
        assert!((g - e).abs() <= 1e-15);
    }
    assert!(clip_grad_norm(&mut two, 0.0).is_err());
}

fn scalar_params(v: f64) -> ParameterSet {
    let mut p = ParameterSet::new();
    p.insert("w", Tensor::scalar(v)).unwrap();
    p
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = scalar_params(1.0);
    let mut s = AdamState::new(&p);
    adam_step(&mut p, &[Tensor::scalar(0.0)], &mut s, 1e-3, AdamConfig::default()).unwrap();
    assert_eq!(p.by_name("w").unwrap().item(), 1.0);
    assert_eq!(s.t, 1);
}

#[test]
fn adam_first_step_matches_hand_update() {
    let mut p = scalar_params(1.0);
    let mut s = AdamState::new(&p);
    adam_step(&mut p, &[Tensor::scalar(0.1)], &mut s, 1e-3, AdamConfig::default()).unwrap();
    // m = 0.01, v = 1e-5; mhat = 0.1, vhat = 0.01; step = 1e-3 * 0.1 / (0.1 + 1e-8)
    let m: f64 = 0.1 * 0.1;
    let v: f64 = 0.001 * 0.01;
    let mhat = m / (1.0 - 0.9);
    let vhat = v / (1.0 - 0.999);
    let expect = 1.0 - 1e-3 * mhat / (vhat.sqrt() + 1e-8);
    assert!((p.by_name("w").unwrap().item() - expect).abs() < 1e-15);
}

#[test]
fn adam_constant_gradient_update_tends_to_lr() {
    let mut p = scalar_params(0.0);
    let mut s = AdamState::new(&p);
    let mut last = 0.0;
    for _ in 0..5000 {
        let before = p.by_name("w").unwrap().item();
        adam_step(&mut p, &[Tensor::scalar(0.3)], &mut s, 1e-3, AdamConfig::default()).unwrap();
        last = before - p.by_name("w").unwrap().item();
    }
    assert!((last - 1e-3).abs() < 1e-9);
    assert_eq!(s.t, 5000);
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut p = scalar_params(0.0);
    let mut s = AdamState::new(&p);
    let r = adam_step(&mut p, &[Tensor::zeros(&[2])], &mut s, 1e-3, AdamConfig::default());
    assert!(matches!(r, Err(Error::Shape { .. })));
}

#[test]
fn parameter_names_are_unique() {
    let mut p = scalar_params(0.0);
    assert!(p.insert("w", Tensor::scalar(1.0)).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut params = ParameterSet::new();
    params.insert("a.weight", random(&[3, 2], &mut rng)).unwrap();
    params.insert("a.bias", random(&[2], &mut rng)).unwrap();
    params.insert("s", Tensor::scalar(f64::MIN_POSITIVE)).unwrap();
    let mut adam = AdamState::new(&params);
    let grads: Vec<Tensor> = params.tensors().iter().map(|t| random(t.shape(), &mut rng)).collect();
    adam_step(&mut params, &grads, &mut adam, 0.01, AdamConfig::default()).unwrap();
    let ckpt = Checkpoint {
        params,
        adam: Some(adam),
        norm: vec![("rgb.mean".into(), random(&[3], &mut rng))],
        meta: vec![("epoch".into(), Tensor::scalar(4.0))],
    };
    let mut bytes = Vec::new();
    ckpt.write_to(&mut bytes).unwrap();
    let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.meta_value("epoch"), Some(4.0));
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(bytes, again);

    assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::read_from(bad.as_slice()), Err(Error::Format(_))));
}
