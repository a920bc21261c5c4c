use super::*;
use crate::error::Error;
use crate::rng::SplitMix64;

fn random(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

/// Uniform on ±[0.1, 1], away from the relu kink.
fn random_off_kink(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    random(rng, shape).map(|x| {
        if x.abs() < 0.1 {
            x.signum() * 0.1 + x
        } else {
            x
        }
    })
}

fn named(blocks: Vec<Tensor>) -> Vec<(String, Tensor)> {
    blocks
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("in{i}"), t))
        .collect()
}

#[test]
fn elementwise_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![0.0, -2.0]));
    let s = tape.sin(x);
    let r = tape.relu(x);
    assert_eq!(tape.value(s).data()[0], 0.0);
    assert_eq!(tape.value(r).data()[1], 0.0);
}

#[test]
fn tanh_derivative_at_zero_is_one() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(0.0));
    let y = tape.tanh(x);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap().item(), 1.0);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.0, 1.0, -1.0]));
    let y = tape.relu(x);
    let l = tape.sum(y);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn square_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap().item(), 6.0);
}

#[test]
fn sum_of_sines_at_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[5]));
    let s = tape.sin(x);
    let l = tape.sum(s);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0; 5]);
}

#[test]
fn constants_and_untouched_leaves_get_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let unused = tape.param(Tensor::scalar(5.0));
    let p = tape.mul(x, c).unwrap();
    let l = tape.sum(p);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[3.0, 4.0]);
    assert_eq!(g.wrt(c).unwrap().data(), &[0.0, 0.0]);
    assert_eq!(g.wrt(unused).unwrap().data(), &[0.0]);
    assert!(g.wrt(p).is_none());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[3]));
    let y = tape.sin(x);
    assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
}

#[test]
fn binary_shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::zeros(&[2]));
    let b = tape.param(Tensor::zeros(&[3]));
    assert!(matches!(tape.add(a, b), Err(Error::Shape { .. })));
    assert!(matches!(tape.mul(a, b), Err(Error::Shape { .. })));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = SplitMix64::new(42);
    let blocks = named(vec![random(&mut rng, &[3, 3]), random(&mut rng, &[3, 3])]);
    let report = grad_check(
        |t, v| {
            let p = t.matmul(v[0], v[1])?;
            Ok(t.sum(p))
        },
        &blocks,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed, "{report}");
}

/// Every registered op, 10 seeds, analytic vs central differences.
#[test]
fn every_op_passes_gradient_check() {
    type Build = fn(&mut Tape, &[Var]) -> crate::error::Result<Var>;
    let weights = |t: &mut Tape, v: Var| {
        // Non-uniform upstream gradient so that sums do not hide errors.
        let n = t.value(v).len();
        let w = Tensor::new(
            t.shape(v).to_vec(),
            (0..n).map(|i| 0.3 + 0.17 * i as f64).collect(),
        )
        .unwrap();
        let c = t.constant(w);
        let p = t.mul(v, c)?;
        Ok(t.sum(p))
    };
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            Ok(t.sum(y))
        }),
        ("matmul_bt", vec![vec![3, 4], vec![2, 4]], |t, v| {
            let y = t.matmul_bt(v[0], v[1])?;
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("add", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.add(v[0], v[1])?;
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("sub", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            let y = t.square(y);
            Ok(t.mean(y))
        }),
        ("mul", vec![vec![5], vec![5]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            let y = t.sin(y);
            Ok(t.sum(y))
        }),
        ("scale_shift", vec![vec![4]], |t, v| {
            let y = t.scale(v[0], -2.5);
            let y = t.shift(y, 0.7);
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("add_row", vec![vec![3, 2], vec![2]], |t, v| {
            let y = t.add_row(v[0], v[1])?;
            let y = t.tanh(y);
            Ok(t.sum(y))
        }),
        ("interleave", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.interleave_cols(v[0], v[1])?;
            let w = t.constant(Tensor::matrix(6, 1, vec![1.0, -2.0, 3.0, 0.5, -1.0, 2.0]).unwrap());
            let y = t.matmul(y, w)?;
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("affine", vec![vec![3, 4], vec![2, 4], vec![2]], |t, v| {
            let y = t.affine(v[0], v[1], v[2])?;
            let y = t.tanh(y);
            Ok(t.sum(y))
        }),
        ("cos_sin", vec![vec![2, 3]], |t, v| {
            let y = t.cos_sin(v[0])?;
            let w = t.constant(Tensor::matrix(6, 1, vec![1.0, -2.0, 3.0, 0.5, -1.0, 2.0]).unwrap());
            let y = t.matmul(y, w)?;
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("concat", vec![vec![2, 1], vec![2, 3]], |t, v| {
            let y = t.concat_cols(&[v[0], v[1], v[0]])?;
            let w = t.constant(Tensor::matrix(5, 1, vec![1.0, -2.0, 3.0, 0.5, -1.0]).unwrap());
            let y = t.matmul(y, w)?;
            let y = t.square(y);
            Ok(t.sum(y))
        }),
        ("slice_reshape", vec![vec![4, 2]], |t, v| {
            let y = t.slice_rows(v[0], 1, 2)?;
            let y = t.reshape(y, &[4])?;
            let y = t.cos(y);
            Ok(t.sum(y))
        }),
    ];
    for seed in 0..10u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        for (name, shapes, build) in &cases {
            let blocks = named(shapes.iter().map(|s| random(&mut rng, s)).collect());
            let report = grad_check(build, &blocks, 1e-5, 1e-4).unwrap();
            assert!(report.passed, "{name} seed {seed}: {report}");
        }
        for kind in Unary::ALL {
            let mut x = random_off_kink(&mut rng, &[6]);
            if kind == Unary::Ln {
                x = x.map(|v| v.abs() + 0.5);
            }
            let blocks = named(vec![x]);
            let report = grad_check(
                |t, v| {
                    let y = t.unary(kind, v[0]);
                    weights(t, y)
                },
                &blocks,
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "{kind:?} seed {seed}: {report}");
        }
    }
}

fn mlp_loss(
    t: &mut Tape,
    v: &[Var],
    x: &Tensor,
    y: &Tensor,
    relu: bool,
) -> crate::error::Result<Var> {
    let xin = t.constant(x.clone());
    let target = t.constant(y.clone());
    let h = t.matmul_bt(xin, v[0])?;
    let h = t.add_row(h, v[1])?;
    let h = if relu { t.relu(h) } else { t.tanh(h) };
    let o = t.matmul_bt(h, v[2])?;
    let o = t.add_row(o, v[3])?;
    let d = t.sub(o, target)?;
    let d = t.square(d);
    Ok(t.mean(d))
}

#[test]
fn two_layer_tanh_mlp_gradients() {
    let mut rng = SplitMix64::new(5);
    let x = random(&mut rng, &[8, 3]);
    let y = random(&mut rng, &[8, 2]);
    let blocks = vec![
        ("w1".to_string(), random(&mut rng, &[4, 3])),
        ("b1".to_string(), random(&mut rng, &[4])),
        ("w2".to_string(), random(&mut rng, &[2, 4])),
        ("b2".to_string(), random(&mut rng, &[2])),
    ];
    let report = grad_check(|t, v| mlp_loss(t, v, &x, &y, false), &blocks, 1e-5, 1e-4).unwrap();
    assert!(report.passed, "{report}");
    assert_eq!(report.blocks.len(), 4);
}

#[test]
fn linear_layer_grad_check_passes() {
    let mut rng = SplitMix64::new(8);
    let x = random(&mut rng, &[6, 3]);
    let blocks = vec![("w".to_string(), random(&mut rng, &[2, 3]))];
    let report = grad_check(
        |t, v| {
            let xin = t.constant(x.clone());
            let o = t.matmul_bt(xin, v[0])?;
            Ok(t.sum(o))
        },
        &blocks,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn relu_network_away_from_kinks_passes() {
    let mut rng = SplitMix64::new(9);
    // Pre-activations stay away from zero: identity first layer, inputs offset by 0.1.
    let x = random_off_kink(&mut rng, &[8, 3]);
    let y = random(&mut rng, &[8, 2]);
    let mut eye = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    let blocks = vec![
        ("w1".to_string(), eye),
        ("b1".to_string(), Tensor::zeros(&[3])),
        ("w2".to_string(), random(&mut rng, &[2, 3])),
        ("b2".to_string(), random(&mut rng, &[2])),
    ];
    let report = grad_check(|t, v| mlp_loss(t, v, &x, &y, true), &blocks, 1e-5, 1e-4).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn zero_tolerance_always_fails() {
    let blocks = vec![("x".to_string(), Tensor::vector(vec![0.3, -0.4]))];
    let report = grad_check(
        |t, v| {
            let y = t.sin(v[0]);
            Ok(t.sum(y))
        },
        &blocks,
        1e-5,
        0.0,
    )
    .unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error() >= 0.0);
}

#[test]
fn non_finite_output_names_block() {
    let blocks = vec![
        ("fine".to_string(), Tensor::scalar(1.0)),
        ("bad".to_string(), Tensor::scalar(-1.0)),
    ];
    let err = grad_check(
        |t, v| {
            let l = t.ln(v[1]);
            let s = t.add(l, v[0])?;
            Ok(t.sum(s))
        },
        &blocks,
        1e-5,
        1e-4,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
}

#[test]
fn tape_replay_is_bit_identical() {
    let run = || {
        let mut rng = SplitMix64::new(77);
        let x = random(&mut rng, &[16, 3]);
        let y = random(&mut rng, &[16, 2]);
        let mut params = vec![
            random(&mut rng, &[4, 3]),
            random(&mut rng, &[4]),
            random(&mut rng, &[2, 4]),
            random(&mut rng, &[2]),
        ];
        let mut state = AdamState::new(AdamConfig::default(), &params).unwrap();
        let mut losses = Vec::new();
        for _ in 0..20 {
            let mut t = Tape::new();
            let vars: Vec<Var> = params.iter().map(|p| t.param(p.clone())).collect();
            let l = mlp_loss(&mut t, &vars, &x, &y, false).unwrap();
            losses.push(t.value(l).item().to_bits());
            let g = t.backward(l).unwrap();
            let grads: Vec<Tensor> = vars.iter().map(|v| g.wrt(*v).unwrap().clone()).collect();
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        losses
    };
    assert_eq!(run(), run());
}
