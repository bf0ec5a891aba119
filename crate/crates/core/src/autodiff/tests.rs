use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::*;
use crate::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Nested-loop same-padded cross-correlation.
fn naive_conv(x: &Tensor, k: &Tensor, bias: &[f64]) -> Vec<f64> {
    let (b, cin, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (cout, kh, kw) = (k.shape[0], k.shape[2], k.shape[3]);
    let (pt, pl) = (kh / 2, kw / 2);
    let mut y = vec![0.0; b * cout * h * w];
    for n in 0..b {
        for co in 0..cout {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let (si, sj) = (i + ki, j + kj);
                                if si < pt || sj < pl || si - pt >= h || sj - pl >= w {
                                    continue;
                                }
                                acc += x.data[((n * cin + ci) * h + si - pt) * w + sj - pl]
                                    * k.data[((co * cin + ci) * kh + ki) * kw + kj];
                            }
                        }
                    }
                    y[((n * cout + co) * h + i) * w + j] = acc;
                }
            }
        }
    }
    y
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, &[2, 1, 4, 5], 1.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let k = tape.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
    let b = tape.constant(Tensor::zeros(vec![1]));
    let y = tape.conv2d(xv, k, b).unwrap();
    assert_eq!(tape.value(y), &x.data[..]);
}

#[test]
fn conv_zero_input_gives_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 3, 3]));
    let k = tape.constant(rand_tensor(&mut rng, &[3, 2, 3, 3], 1.0));
    let b = tape.constant(Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
    let y = tape.conv2d(x, k, b).unwrap();
    for (co, chunk) in tape.value(y).chunks(9).enumerate() {
        assert!(chunk.iter().all(|&v| v == [0.5, -1.0, 2.0][co]));
    }
}

#[test]
fn conv_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (kh, kw, cout) in [(3, 3, 3), (1, 9, 2), (9, 1, 2), (2, 2, 1), (5, 5, 2)] {
        let x = rand_tensor(&mut rng, &[2, 2, 5, 5], 1.0);
        let k = rand_tensor(&mut rng, &[cout, 2, kh, kw], 1.0);
        let bias: Vec<f64> = (0..cout).map(|i| i as f64 * 0.1).collect();
        let mut tape = Tape::new();
        let (xv, kv) = (tape.constant(x.clone()), tape.constant(k.clone()));
        let bv = tape.constant(Tensor::new(vec![cout], bias.clone()).unwrap());
        let y = tape.conv2d(xv, kv, bv).unwrap();
        let want = naive_conv(&x, &k, &bias);
        for (a, b) in tape.value(y).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{kh}x{kw}");
        }
    }
}

#[test]
fn conv_channel_mismatch() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 3, 3]));
    let k = tape.constant(Tensor::zeros(vec![1, 3, 3, 3]));
    let b = tape.constant(Tensor::zeros(vec![1]));
    assert!(matches!(tape.conv2d(x, k, b), Err(Error::ShapeMismatch(_))));
}

#[test]
fn dense_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 5] = 1.0;
    }
    let w = tape.constant(Tensor::new(vec![4, 4], eye).unwrap());
    let b = tape.constant(Tensor::zeros(vec![4]));
    let y = tape.dense(x, w, b).unwrap();
    assert_eq!(tape.value(y), &[1.0, 2.0, 3.0, 4.0]);

    let w1 = tape.constant(Tensor::new(vec![2, 4], vec![1.0; 8]).unwrap());
    let b1 = tape.constant(Tensor::zeros(vec![2]));
    let y1 = tape.dense(x, w1, b1).unwrap();
    assert_eq!(tape.value(y1), &[10.0, 10.0]);

    let bad = tape.constant(Tensor::zeros(vec![2, 3]));
    assert!(tape.dense(x, bad, b1).is_err());
}

#[test]
fn dense_weight_gradient_is_batch_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[3, 4], 1.0);
    let w = rand_tensor(&mut rng, &[2, 4], 1.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.variable(w);
    let bv = tape.variable(Tensor::zeros(vec![2]));
    let y = tape.dense(xv, wv, bv).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    let gw = tape.grad(wv).unwrap();
    for o in 0..2 {
        for i in 0..4 {
            let want: f64 = (0..3).map(|n| x.data[n * 4 + i]).sum();
            assert!((gw[o * 4 + i] - want).abs() < 1e-12);
        }
    }
    assert_eq!(tape.grad(bv).unwrap(), &[3.0, 3.0]);
}

#[test]
fn batch_norm_train_standardizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[4, 3, 2, 2], 20.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let g = tape.constant(Tensor::new(vec![3], vec![1.0; 3]).unwrap());
    let b = tape.constant(Tensor::zeros(vec![3]));
    let (y, stats) = tape.batch_norm_train(xv, g, b, BN_EPS).unwrap();
    assert_eq!(stats.mean.len(), 3);
    let yv = tape.value(y);
    for ch in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|n| yv[(n * 3 + ch) * 4..(n * 3 + ch + 1) * 4].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / 16.0;
        let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 16.0;
        assert!(m.abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }
}

#[test]
fn batch_norm_constant_channel_maps_to_beta() {
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(vec![3, 1, 2], vec![7.0; 6]).unwrap());
    let g = tape.constant(Tensor::scalar(1.0));
    let b = tape.constant(Tensor::scalar(0.0));
    let (y, _) = tape.batch_norm_train(xv, g, b, BN_EPS).unwrap();
    assert!(tape.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn batch_norm_eval_closed_form() {
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(vec![1, 2, 1, 1], vec![3.0, -1.0]).unwrap());
    let g = tape.constant(Tensor::new(vec![2], vec![2.0, 0.5]).unwrap());
    let b = tape.constant(Tensor::new(vec![2], vec![0.1, -0.2]).unwrap());
    let y = tape
        .batch_norm_eval(xv, g, b, &[1.0, 0.0], &[4.0, 0.25], BN_EPS)
        .unwrap();
    let want0 = (3.0 - 1.0) / (4.0f64 + 1e-5).sqrt() * 2.0 + 0.1;
    let want1 = (-1.0 - 0.0) / (0.25f64 + 1e-5).sqrt() * 0.5 - 0.2;
    assert!((tape.value(y)[0] - want0).abs() < 1e-14);
    assert!((tape.value(y)[1] - want1).abs() < 1e-14);
}

#[test]
fn batch_norm_rejects_single_sample_in_train_mode() {
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::zeros(vec![1, 2, 2, 2]));
    let g = tape.constant(Tensor::zeros(vec![2]));
    let b = tape.constant(Tensor::zeros(vec![2]));
    assert!(matches!(
        tape.batch_norm_train(xv, g, b, BN_EPS),
        Err(Error::DegenerateBatch)
    ));
}

#[test]
fn leaky_relu_values_and_slopes() {
    let mut tape = Tape::new();
    let x = tape.variable(Tensor::new(vec![4], vec![2.0, -2.0, -1.0, 1.0]).unwrap());
    let y = tape.leaky_relu(x, LEAKY_SLOPE);
    assert_eq!(tape.value(y)[0], 2.0);
    assert!((tape.value(y)[1] + 0.6).abs() < 1e-15);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    let g = tape.grad(x).unwrap();
    assert_eq!(g[2], 0.3);
    assert_eq!(g[3], 1.0);
}

#[test]
fn sigmoid_is_stable() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![5], vec![0.0, 50.0, -50.0, 800.0, -800.0]).unwrap());
    let y = tape.sigmoid(x);
    let v = tape.value(y);
    assert_eq!(v[0], 0.5);
    assert!(v.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
}

/// Textbook softmax with max subtraction.
fn plain_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}

fn softmax_row(row: &[f64], t: f64) -> Vec<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, row.len()], row.to_vec()).unwrap());
    let y = tape.softmax_t(x, t).unwrap();
    tape.value(y).to_vec()
}

#[test]
fn softmax_t_examples() {
    assert_eq!(softmax_row(&[0.0, 0.0], 3.0), vec![0.5, 0.5]);
    let p = softmax_row(&[1.0, 0.0], 1.0);
    // e / (1 + e)
    let e = std::f64::consts::E;
    assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
    assert!((p[0] - 0.731059).abs() < 1e-6 && (p[1] - 0.268941).abs() < 1e-6);
    let flat = softmax_row(&[1.0, 0.0], 1000.0);
    assert!(flat.iter().all(|v| (v - 0.5).abs() < 1e-3));
}

#[test]
fn softmax_t_rejects_bad_temperature() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 3]));
    for t in [0.0, -1.0, f64::NAN] {
        assert!(tape.softmax_t(x, t).is_err());
    }
}

#[test]
fn softmax_t_unit_temperature_is_plain_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let row: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
    assert_eq!(softmax_row(&row, 1.0), plain_softmax(&row));
}

#[test]
fn mse_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, &[3, 5], 1.0);
    let b = rand_tensor(&mut rng, &[3, 5], 1.0);
    let mut tape = Tape::new();
    let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let same = tape.mse_loss(av, av).unwrap();
    assert_eq!(tape.value(same)[0], 0.0);
    let shifted = tape.constant(Tensor::new(a.shape.clone(), a.data.iter().map(|v| v + 2.0).collect()).unwrap());
    let four = tape.mse_loss(shifted, av).unwrap();
    assert!((tape.value(four)[0] - 4.0).abs() < 1e-12);
    let l = tape.mse_loss(av, bv).unwrap();
    let mut oracle = 0.0;
    for i in 0..15 {
        oracle += (a.data[i] - b.data[i]).powi(2);
    }
    assert!((tape.value(l)[0] - oracle / 15.0).abs() < 1e-12);
    let other = tape.constant(Tensor::zeros(vec![15]));
    assert!(tape.mse_loss(av, other).is_err());
}

#[test]
fn soft_cross_entropy_examples() {
    let mut tape = Tape::new();
    let u = tape.constant(Tensor::new(vec![1, 4], vec![0.25; 4]).unwrap());
    let h = tape.soft_cross_entropy(u, u).unwrap();
    assert!((tape.value(h)[0] - 4f64.ln()).abs() < 1e-12);
    assert!((tape.value(h)[0] - 1.386294).abs() < 1e-6);

    let onehot = tape.constant(Tensor::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap());
    let q = tape.constant(Tensor::new(vec![1, 3], vec![0.5, 0.2, 0.3]).unwrap());
    let h = tape.soft_cross_entropy(onehot, q).unwrap();
    assert!((tape.value(h)[0] + 0.2f64.ln()).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p: Vec<f64> = plain_softmax(&(0..10).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())
        .into_iter()
        .chain(plain_softmax(&(0..10).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
        .collect();
    let q: Vec<f64> = plain_softmax(&(0..10).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())
        .into_iter()
        .chain(plain_softmax(&(0..10).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
        .collect();
    let oracle: f64 = -p.iter().zip(&q).map(|(a, b)| a * b.ln()).sum::<f64>() / 2.0;
    let pv = tape.constant(Tensor::new(vec![2, 10], p).unwrap());
    let qv = tape.constant(Tensor::new(vec![2, 10], q).unwrap());
    let h = tape.soft_cross_entropy(pv, qv).unwrap();
    assert!((tape.value(h)[0] - oracle).abs() < 1e-12);
}

#[test]
fn soft_cross_entropy_clamps_zero_probability() {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
    let q = tape.variable(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
    let h = tape.soft_cross_entropy(p, q).unwrap();
    assert!((tape.value(h)[0] - 0.5 * -(1e-12f64).ln()).abs() < 1e-9);
    tape.backward(h).unwrap();
    assert!(tape.grad(q).unwrap().iter().all(|g| g.is_finite()));
}

#[test]
fn structural_ops() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let zero = tape.constant(Tensor::zeros(vec![1]));
    let gated = tape.scale_gate(x, zero).unwrap();
    assert!(tape.value(gated).iter().all(|&v| v == 0.0));
    let zeros = tape.constant(Tensor::zeros(vec![1, 2, 1, 2]));
    let same = tape.add(x, zeros).unwrap();
    assert_eq!(tape.value(same), tape.value(x));

    let a = tape.constant(Tensor::new(vec![2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![2, 2, 1, 1], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
    let c = tape.concat_channels(a, b).unwrap();
    assert_eq!(tape.shape(c), &[2, 4, 1, 1]);
    assert_eq!(tape.value(c), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
    let wrong = tape.constant(Tensor::zeros(vec![2, 2, 2, 1]));
    assert!(tape.concat_channels(a, wrong).is_err());
    assert!(tape.add(a, wrong).is_err());
}

#[test]
fn backward_basic_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xt = rand_tensor(&mut rng, &[2, 3], 1.0);
    let mut tape = Tape::new();
    let x = tape.variable(xt.clone());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 1.0));

    let mut tape = Tape::new();
    let x = tape.variable(xt.clone());
    let z = tape.constant(Tensor::zeros(vec![2, 3]));
    let l = tape.mse_loss(x, z).unwrap();
    tape.backward(l).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip(&xt.data) {
        assert!((g - 2.0 * v / 6.0).abs() < 1e-15);
    }
    assert!(tape.grad(z).is_none());

    // second call accumulates
    tape.backward(l).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip(&xt.data) {
        assert!((g - 4.0 * v / 6.0).abs() < 1e-15);
    }
    tape.zero_grad();
    assert!(tape.grad(x).is_none());

    assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn unreachable_leaf_gets_no_gradient() {
    let mut tape = Tape::new();
    let a = tape.variable(Tensor::scalar(2.0));
    let b = tape.variable(Tensor::scalar(3.0));
    let s = tape.sum(a);
    let _unused = tape.scale(b, 2.0);
    tape.backward(s).unwrap();
    assert!(tape.grad(b).is_none());
}

const H: f64 = 1e-6;
const FLOOR: f64 = 1e-8;
const TOL: f64 = 1e-5;

fn assert_grad<F>(inputs: &[Tensor], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> crate::Result<Var>,
{
    let r = check_gradients(inputs, H, FLOOR, f).unwrap();
    assert!(r.max_rel_error < TOL, "max rel error {:e}", r.max_rel_error);
}

/// Weighted sum so every output element carries a distinct adjoint.
fn project(tape: &mut Tape, y: Var, seed: u64) -> crate::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(y).to_vec();
    let w = tape.constant(rand_tensor(&mut rng, &shape, 1.0));
    // 0.5 * sum((y - w)^2) / n via mse keeps this a scalar of y
    tape.mse_loss(y, w)
}

#[test]
fn gradcheck_conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (kh, kw) in [(3, 3), (1, 9), (9, 1), (2, 2), (1, 1)] {
        let inputs = [
            rand_tensor(&mut rng, &[2, 2, 4, 5], 1.0),
            rand_tensor(&mut rng, &[3, 2, kh, kw], 0.5),
            rand_tensor(&mut rng, &[3], 0.5),
        ];
        assert_grad(&inputs, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            project(t, y, 1)
        });
    }
}

#[test]
fn gradcheck_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = [
        rand_tensor(&mut rng, &[3, 6], 1.0),
        rand_tensor(&mut rng, &[4, 6], 0.5),
        rand_tensor(&mut rng, &[4], 0.5),
    ];
    assert_grad(&inputs, |t, v| {
        let y = t.dense(v[0], v[1], v[2])?;
        project(t, y, 2)
    });
}

#[test]
fn gradcheck_batch_norm_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inputs = [
        rand_tensor(&mut rng, &[3, 2, 2, 3], 2.0),
        rand_tensor(&mut rng, &[2], 1.0),
        rand_tensor(&mut rng, &[2], 1.0),
    ];
    assert_grad(&inputs, |t, v| {
        let (y, _) = t.batch_norm_train(v[0], v[1], v[2], BN_EPS)?;
        project(t, y, 3)
    });
    assert_grad(&inputs, |t, v| {
        let y = t.batch_norm_eval(v[0], v[1], v[2], &[0.2, -0.1], &[1.5, 0.7], BN_EPS)?;
        project(t, y, 3)
    });
}

#[test]
fn gradcheck_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    // keep away from the LeakyReLU kink
    let mut x = rand_tensor(&mut rng, &[2, 10], 3.0);
    for v in &mut x.data {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    assert_grad(std::slice::from_ref(&x), |t, v| {
        let y = t.leaky_relu(v[0], LEAKY_SLOPE);
        project(t, y, 4)
    });
    assert_grad(std::slice::from_ref(&x), |t, v| {
        let y = t.sigmoid(v[0]);
        project(t, y, 5)
    });
}

#[test]
fn sigmoid_derivative_matches_finite_difference() {
    for x0 in [-3.0, -0.5, 0.0, 0.7, 4.0] {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::scalar(x0));
        let y = tape.sigmoid(x);
        tape.backward(y).unwrap();
        let fd = (sigmoid_scalar(x0 + 1e-6) - sigmoid_scalar(x0 - 1e-6)) / 2e-6;
        assert!((tape.grad(x).unwrap()[0] - fd).abs() < 1e-7);
    }
}

#[test]
fn gradcheck_softmax_and_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inputs = [
        rand_tensor(&mut rng, &[2, 7], 2.0),
        rand_tensor(&mut rng, &[2, 7], 2.0),
    ];
    for t0 in [0.5, 1.0, 5.0] {
        assert_grad(&inputs, |t, v| {
            let p = t.softmax_t(v[0], t0)?;
            let q = t.softmax_t(v[1], t0)?;
            t.soft_cross_entropy(p, q)
        });
    }
}

#[test]
fn gradcheck_structural() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let inputs = [
        rand_tensor(&mut rng, &[2, 2, 2, 3], 1.0),
        rand_tensor(&mut rng, &[2, 3, 2, 3], 1.0),
        rand_tensor(&mut rng, &[1], 1.0),
    ];
    assert_grad(&inputs, |t, v| {
        let c = t.concat_channels(v[0], v[1])?;
        let g = t.scale_gate(c, v[2])?;
        let f = t.flatten(g)?;
        let r = t.reshape(f, vec![2, 5, 6])?;
        let s = t.scale(r, 0.7);
        let back = t.reshape(s, vec![2, 5, 2, 3])?;
        let doubled = t.add(back, c)?;
        project(t, doubled, 6)
    });
}

#[test]
fn gradcheck_conv_bn_leaky_dense_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inputs = [
        rand_tensor(&mut rng, &[3, 2, 4, 4], 1.0),
        rand_tensor(&mut rng, &[2, 2, 3, 3], 0.5),
        rand_tensor(&mut rng, &[2], 0.1),
        rand_tensor(&mut rng, &[2], 1.0),
        rand_tensor(&mut rng, &[2], 0.1),
        rand_tensor(&mut rng, &[5, 32], 0.3),
        rand_tensor(&mut rng, &[5], 0.1),
    ];
    assert_grad(&inputs, |t, v| {
        let c = t.conv2d(v[0], v[1], v[2])?;
        let (n, _) = t.batch_norm_train(c, v[3], v[4], BN_EPS)?;
        let a = t.leaky_relu(n, LEAKY_SLOPE);
        let f = t.flatten(a)?;
        let y = t.dense(f, v[5], v[6])?;
        let s = t.sigmoid(y);
        project(t, s, 7)
    });
}

#[test]
fn no_overflow_on_large_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_tensor(&mut rng, &[2, 50], 100.0);
    let mut tape = Tape::new();
    let xv = tape.variable(x);
    let s = tape.sigmoid(xv);
    let p = tape.softmax_t(xv, 0.1).unwrap();
    let q = tape.softmax_t(s, 1.0).unwrap();
    let h = tape.soft_cross_entropy(p, q).unwrap();
    tape.backward(h).unwrap();
    assert!(tape.value(h)[0].is_finite());
    assert!(tape.grad(xv).unwrap().iter().all(|g| g.is_finite()));
}

mod props {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-50.0f64..50.0, 2..40),
                                   t in prop::sample::select(vec![0.1, 1.0, 5.0, 100.0])) {
            let p = softmax_row(&row, t);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_peak_flattens_with_temperature(row in prop::collection::vec(-10.0f64..10.0, 2..30)) {
            prop_assume!(row.iter().any(|v| (v - row[0]).abs() > 1e-6));
            let mut last = f64::INFINITY;
            for t in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
                let peak = softmax_row(&row, t).into_iter().fold(0.0, f64::max);
                prop_assert!(peak <= last + 1e-15);
                last = peak;
            }
        }
    }
}
