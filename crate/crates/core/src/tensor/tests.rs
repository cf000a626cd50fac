use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn param_set(shapes: &[(&str, &[usize])], seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    for (name, shape) in shapes {
        ps.add(*name, random(shape, &mut rng)).unwrap();
    }
    ps
}

fn id(ps: &ParamSet, name: &str) -> ParamId {
    ps.id(name).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::ones(&[3]));
    let y = tape.softmax(x, 0).unwrap();
    for v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_shift_invariance_and_row_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random(&[4, 7], &mut rng);
    let shifted = base.map(|x| x + 123.25);
    let mut tape = Tape::new();
    let a = tape.constant(base);
    let b = tape.constant(shifted);
    let sa = tape.softmax(a, 1).unwrap();
    let sb = tape.softmax(b, 1).unwrap();
    for (x, y) in tape.value(sa).data().iter().zip(tape.value(sb).data()) {
        assert!((x - y).abs() < 1e-12);
    }
    for row in tape.value(sa).data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let s0 = tape.softmax(a, 0).unwrap();
    for j in 0..7 {
        let col: f64 = (0..4).map(|i| tape.value(s0).data()[i * 7 + j]).sum();
        assert!((col - 1.0).abs() < 1e-12);
    }
}

#[test]
fn masked_softmax_zeroes_masked_positions() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let y = tape
        .masked_softmax(x, 1, Some(&[true, false, true, false, false, false]))
        .unwrap();
    let v = tape.value(y).data();
    assert_eq!(v[1], 0.0);
    assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
    assert_eq!(&v[3..], &[0.0, 0.0, 0.0]);
}

#[test]
fn conv_of_ones_is_nine() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
    let w = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.conv2d(x, w, b).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).item(), 9.0);
}

#[test]
fn two_channel_conv_then_pool_keeps_eighteen() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::ones(&[1, 2, 3, 3]));
    let w = tape.constant(Tensor::ones(&[1, 2, 3, 3]));
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.conv2d(x, w, b).unwrap();
    let p = tape.maxpool2d(y, 3, 3).unwrap();
    assert_eq!(tape.shape(p), &[1, 1, 1, 1]);
    assert_eq!(tape.value(p).item(), 18.0);
}

#[test]
fn conv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xv = random(&[2, 3, 5, 6], &mut rng);
    let wv = random(&[4, 3, 2, 3], &mut rng);
    let bv = random(&[4], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(xv.clone());
    let w = tape.constant(wv.clone());
    let b = tape.constant(bv.clone());
    let y = tape.conv2d(x, w, b).unwrap();
    assert_eq!(tape.shape(y), &[2, 4, 4, 4]);
    let yd = tape.value(y).data();
    for n in 0..2 {
        for f in 0..4 {
            for oy in 0..4 {
                for ox in 0..4 {
                    let mut s = bv.data()[f];
                    for c in 0..3 {
                        for ky in 0..2 {
                            for kx in 0..3 {
                                s += xv.data()[((n * 3 + c) * 5 + oy + ky) * 6 + ox + kx]
                                    * wv.data()[((f * 3 + c) * 2 + ky) * 3 + kx];
                            }
                        }
                    }
                    let got = yd[((n * 4 + f) * 4 + oy) * 4 + ox];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn maxpool_ceil_mode_sizes() {
    assert_eq!(pooled_len(1, 3, 3), 1);
    assert_eq!(pooled_len(3, 3, 3), 1);
    assert_eq!(pooled_len(4, 3, 3), 2);
    assert_eq!(pooled_len(10, 3, 3), 4);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_fn(&[1, 1, 4, 4], |i| i as f64));
    let p = tape.maxpool2d(x, 3, 3).unwrap();
    assert_eq!(tape.value(p).data(), &[10.0, 11.0, 14.0, 15.0]);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 4]));
    match tape.add(a, b) {
        Err(Error::Shape { op, lhs, rhs }) => {
            assert_eq!(op, "add");
            assert_eq!(lhs, [2, 3]);
            assert_eq!(rhs, [2, 4]);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    let before = tape.len();
    let c = tape.constant(Tensor::zeros(&[3, 3]));
    assert!(tape.concat(&[a, c], 1).is_err());
    assert_eq!(tape.len(), before + 1, "rejected op records nothing");
}

#[test]
fn backward_of_sum_is_ones() {
    let ps = param_set(&[("w", &[2, 3, 2])], 1);
    let mut tape = Tape::new();
    let w = tape.param(&ps, id(&ps, "w"));
    let s = tape.sum(w);
    let g = tape.backward(s).unwrap();
    assert!(g.get(id(&ps, "w")).unwrap().data().iter().all(|&x| x == 1.0));
}

#[test]
fn sigmoid_derivative_at_zero() {
    let mut ps = ParamSet::new();
    let w = ps.add("w", Tensor::scalar(0.0)).unwrap();
    let mut tape = Tape::new();
    let v = tape.param(&ps, w);
    let s = tape.sigmoid(v);
    let l = tape.scale(s, 3.0);
    let g = tape.backward(l).unwrap();
    assert!((g.get(w).unwrap().item() - 0.75).abs() < 1e-15);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let ps = param_set(&[("w", &[2])], 1);
    let mut tape = Tape::new();
    let w = tape.param(&ps, id(&ps, "w"));
    assert!(matches!(tape.backward(w), Err(Error::Usage(_))));
}

#[test]
fn gradients_accumulate_into_buffers() {
    let mut ps = param_set(&[("w", &[3])], 1);
    for _ in 0..2 {
        let mut tape = Tape::new();
        let w = tape.param(&ps, id(&ps, "w"));
        let s = tape.sum(w);
        let g = tape.backward(s).unwrap();
        ps.accumulate(&g);
    }
    assert_eq!(ps.get(id(&ps, "w")).grad.data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn ops_do_not_mutate_inputs() {
    let ps = param_set(&[("a", &[2, 3]), ("b", &[3, 2])], 4);
    let before = ps.clone();
    let mut tape = Tape::new();
    let a = tape.param(&ps, id(&ps, "a"));
    let b = tape.param(&ps, id(&ps, "b"));
    let av = tape.value(a).clone();
    let m = tape.matmul(a, b).unwrap();
    let t = tape.tanh(m);
    let l = tape.sum(t);
    tape.backward(l).unwrap();
    assert_eq!(ps, before);
    assert_eq!(av, *before.value(id(&ps, "a")));
}

#[test]
fn bce_and_cross_entropy_values() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(&[2], vec![0.0, 2.0]).unwrap());
    let l = tape.bce_with_logits(z, &[1.0, 0.0]).unwrap();
    let want = (std::f64::consts::LN_2 + (1.0 + 2f64.exp()).ln()) / 2.0;
    assert!((tape.value(l).item() - want).abs() < 1e-14);

    let x = tape.constant(Tensor::zeros(&[2, 4]));
    let ce = tape.cross_entropy(x, &[1, 3], &[1.0, 1.0]).unwrap();
    assert!((tape.value(ce).item() - 4f64.ln()).abs() < 1e-14);
}

fn gru_fixture(seed: u64, input: usize, hidden: usize) -> (ParamSet, Gru) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let gru = Gru::new(&mut ps, "gru", input, hidden, &mut rng).unwrap();
    // non-zero biases so every path is exercised
    for id in gru.param_ids() {
        for v in ps.value_mut(id).data_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    (ps, gru)
}

#[test]
fn gru_zero_params_halve_the_state() {
    let mut ps = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gru = Gru::new(&mut ps, "g", 2, 3, &mut rng).unwrap();
    for id in gru.param_ids() {
        ps.value_mut(id).data_mut().fill(0.0);
    }
    let h0 = [0.8, -0.4, 2.0];
    let h1 = gru.step_value(&ps, &[0.3, -7.0], &h0).unwrap();
    assert_eq!(h1, [0.4, -0.2, 1.0]);

    let mut tape = Tape::new();
    let bound = gru.bind(&mut tape, &ps);
    let x = tape.constant(random(&[1, 5, 2], &mut rng));
    let h = tape.constant(Tensor::new(&[1, 3], h0.to_vec()).unwrap());
    let out = bound.run(&mut tape, x, None, Some(h)).unwrap();
    for (got, start) in tape.value(out.last).data().iter().zip(h0) {
        assert_eq!(*got, start * 0.5f64.powi(5));
    }
    assert_eq!(gru.step_value(&ps, &[0.0, 0.0], &[0.0; 3]).unwrap(), [0.0; 3]);
}

#[test]
fn gru_run_matches_step_value_and_bounds() {
    let (ps, gru) = gru_fixture(21, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let xv = random(&[2, 5, 3], &mut rng).map(|x| x * 3.0);
    let mask = [1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let mut tape = Tape::new();
    let bound = gru.bind(&mut tape, &ps);
    let x = tape.constant(xv.clone());
    let out = bound.run(&mut tape, x, Some(&mask), None).unwrap();
    let states = tape.value(out.states).data();
    for n in 0..2 {
        let mut h = vec![0.0; 4];
        for t in 0..5 {
            let xt = &xv.data()[(n * 5 + t) * 3..(n * 5 + t + 1) * 3];
            let valid = mask[n * 5 + t] == 1.0;
            if valid {
                let next = gru.step_value(&ps, xt, &h).unwrap();
                let bound_ok = next.iter().map(|v| v.abs()).fold(0.0, f64::max)
                    <= h.iter().map(|v| v.abs()).fold(1.0, f64::max);
                assert!(bound_ok);
                h = next;
            }
            for j in 0..4 {
                let want = if valid { h[j] } else { 0.0 };
                assert!((states[((n * 5 + t) * 4) + j] - want).abs() < 1e-12);
            }
        }
        for j in 0..4 {
            assert!((tape.value(out.last).data()[n * 4 + j] - h[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_with_zero_scores_is_a_masked_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut ps = ParamSet::new();
    let att = AdditiveAttention::new(&mut ps, "att", 3, 3, 4, &mut rng).unwrap();
    ps.value_mut(att.param_ids()[2]).data_mut().fill(0.0);
    let hv = random(&[1, 4, 3], &mut rng);
    let mut tape = Tape::new();
    let bound = att.bind(&mut tape, &ps);
    let h = tape.constant(hv.clone());
    let mask = [true, true, true, false];
    let a = bound.weights(&mut tape, h, h, Some(&mask)).unwrap();
    let c = bound.context(&mut tape, a, h).unwrap();
    for t in 0..4 {
        for j in 0..3 {
            let mean: f64 = (0..3).map(|s| hv.data()[s * 3 + j]).sum::<f64>() / 3.0;
            assert!((tape.value(c).data()[t * 3 + j] - mean).abs() < 1e-12);
        }
    }
}

