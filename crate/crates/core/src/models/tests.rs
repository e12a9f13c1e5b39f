use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear2() -> ModelSpec {
    ModelSpec::Linear {
        input_dim: 2,
        output_dim: 1,
    }
}

fn pv(v: &[f64]) -> ParameterVector {
    ParameterVector::new(v.to_vec()).unwrap()
}

/// Central finite differences of `loss`; independent of the backward pass.
fn fd_gradient(spec: &ModelSpec, p: &ParameterVector, b: &Batch, obj: Objective, h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let mut plus = p.as_slice().to_vec();
            let mut minus = p.as_slice().to_vec();
            plus[i] += h;
            minus[i] -= h;
            let lp = loss(spec, &pv(&plus), b, obj).unwrap();
            let lm = loss(spec, &pv(&minus), b, obj).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

#[test]
fn parameter_counts() {
    assert_eq!(linear2().parameter_count(), 2);
    assert_eq!(ModelSpec::hospital_default().parameter_count(), 11);
    let deep = ModelSpec::Mlp {
        input_dim: 4,
        hidden: vec![3, 2],
        output_dim: 5,
    };
    assert_eq!(deep.parameter_count(), 4 * 3 + 3 + 3 * 2 + 2 + 2 * 5 + 5);
}

#[test]
fn linear_prediction_is_dot_product() {
    let out = predict(&linear2(), &pv(&[5.0, 6.0]), &[1.0, 1.0]).unwrap();
    assert_eq!(out, vec![11.0]);
    let zero = predict(&linear2(), &ParameterVector::zeros(2), &[3.0, -7.0, 0.5, 2.0]).unwrap();
    assert_eq!(zero, vec![0.0, 0.0]);
}

#[test]
fn zero_mlp_predicts_zero() {
    let spec = ModelSpec::hospital_default();
    let out = predict(&spec, &ParameterVector::zeros(11), &[0.3, -2.0, 9.0, 1.0, 1.0, 1.0]).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
}

#[test]
fn predict_rejects_wrong_parameter_length() {
    let err = predict(&linear2(), &pv(&[1.0, 2.0, 3.0]), &[1.0, 1.0]).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 3 }));
}

#[test]
fn rmse_values() {
    let spec = linear2();
    let perfect = Batch::from_rows([(vec![1.0, 2.0], 17.0), (vec![0.0, 1.0], 6.0)]).unwrap();
    assert_eq!(loss(&spec, &pv(&[5.0, 6.0]), &perfect, Objective::Rmse).unwrap(), 0.0);

    let single = Batch::from_rows([(vec![1.0, 0.0], 8.0)]).unwrap();
    assert_eq!(loss(&spec, &pv(&[5.0, 6.0]), &single, Objective::Rmse).unwrap(), 3.0);

    // zero parameters: rmse is the root mean square of the targets
    let ys = [11.3, -2.0, 0.7, 4.4];
    let b = Batch::from_rows(ys.iter().map(|&y| (vec![1.0, -1.0], y))).unwrap();
    let expect = (ys.iter().map(|y| y * y).sum::<f64>() / 4.0).sqrt();
    let got = loss(&spec, &ParameterVector::zeros(2), &b, Objective::Rmse).unwrap();
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn empty_batch_is_rejected() {
    let b = Batch::new(vec![], 2, vec![], 1).unwrap();
    assert!(matches!(
        loss(&linear2(), &ParameterVector::zeros(2), &b, Objective::Rmse),
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn rmse_gradient_at_zero_residual_is_zero() {
    let b = Batch::from_rows([(vec![1.0, 2.0], 17.0)]).unwrap();
    let g = gradient(&linear2(), &pv(&[5.0, 6.0]), &b, Objective::Rmse).unwrap();
    assert_eq!(g, vec![0.0, 0.0]);
}

#[test]
fn rmse_gradient_single_sample_points_along_minus_y_x() {
    // d/dθ |y − xᵀθ| at θ = 0 is −sign(y)·x; proportional to −y·x
    let x = [2.0, -3.0];
    let y = 4.0;
    let b = Batch::from_rows([(x.to_vec(), y)]).unwrap();
    let g = gradient(&linear2(), &ParameterVector::zeros(2), &b, Objective::Rmse).unwrap();
    let k = g[0] / (-y * x[0]);
    assert!(k > 0.0);
    assert!((g[1] - k * (-y * x[1])).abs() < 1e-12);
}

#[test]
fn cross_entropy_uniform_logits_bias_gradient() {
    // zero output weights give uniform logits; d/db_c = mean(1/K − [target = c])
    let k = 4;
    let spec = ModelSpec::Mlp {
        input_dim: 2,
        hidden: vec![3],
        output_dim: k,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = spec.init_params(&mut rng).into_inner();
    let out_w = 2 * 3 + 3;
    p[out_w..].iter_mut().for_each(|v| *v = 0.0);
    let labels = [1.0, 1.0, 1.0, 3.0, 0.0];
    let b = Batch::new(
        (0..labels.len()).flat_map(|i| [i as f64 * 0.3, 1.0 - i as f64]).collect(),
        2,
        labels.to_vec(),
        1,
    )
    .unwrap();
    let g = gradient(&spec, &pv(&p), &b, Objective::CrossEntropy).unwrap();
    let bias = &g[out_w + 3 * k..];
    let m = labels.len() as f64;
    for (c, gc) in bias.iter().enumerate() {
        let hits = labels.iter().filter(|&&l| l as usize == c).count() as f64;
        let expect = (m / k as f64 - hits) / m;
        assert!((gc - expect).abs() < 1e-12, "class {c}: {gc} vs {expect}");
    }
    let l = loss(&spec, &pv(&p), &b, Objective::CrossEntropy).unwrap();
    assert!((l - (k as f64).ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_rejects_bad_labels() {
    let spec = ModelSpec::Linear {
        input_dim: 1,
        output_dim: 3,
    };
    let b = Batch::new(vec![1.0], 1, vec![3.0], 1).unwrap();
    assert!(loss(&spec, &ParameterVector::zeros(3), &b, Objective::CrossEntropy).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [
        linear2(),
        ModelSpec::hospital_default(),
        ModelSpec::Mlp {
            input_dim: 3,
            hidden: vec![4, 3],
            output_dim: 2,
        },
    ];
    for spec in &specs {
        for obj in [Objective::Rmse, Objective::CrossEntropy] {
            let p = spec.init_params(&mut rng);
            let rows = 6;
            let feats: Vec<f64> = (0..rows * spec.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (targets, tdim) = match obj {
                Objective::Rmse => (
                    (0..rows * spec.output_dim()).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    spec.output_dim(),
                ),
                Objective::CrossEntropy => (
                    (0..rows).map(|_| rng.random_range(0..spec.output_dim()) as f64).collect(),
                    1,
                ),
            };
            let b = Batch::new(feats, spec.input_dim(), targets, tdim).unwrap();
            let g = gradient(spec, &p, &b, obj).unwrap();
            let fd = fd_gradient(spec, &p, &b, obj, 1e-5);
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
            assert!(diff / scale < 1e-4, "{spec:?} {obj:?}: rel err {}", diff / scale);
        }
    }
}

#[test]
fn zero_step_leaves_params_unchanged() {
    let b = Batch::from_rows([(vec![1.0, 2.0], 3.0), (vec![-1.0, 0.5], 1.0)]).unwrap();
    let cfg = LocalTraining {
        step_size: 0.0,
        epochs: 3,
        batch_size: 1,
        objective: Objective::Rmse,
    };
    let p = pv(&[0.3, -0.2]);
    let out = local_update(&linear2(), &p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out, p);
}

#[test]
fn full_batch_single_epoch_is_one_gradient_step() {
    let b = Batch::from_rows([(vec![1.0, 2.0], 3.0), (vec![-1.0, 0.5], 1.0), (vec![0.2, 0.1], -2.0)]).unwrap();
    let cfg = LocalTraining {
        step_size: 0.1,
        epochs: 1,
        batch_size: 3,
        objective: Objective::Rmse,
    };
    let p = pv(&[0.3, -0.2]);
    let g = gradient(&linear2(), &p, &b, Objective::Rmse).unwrap();
    let out = local_update(&linear2(), &p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    for (i, gi) in g.iter().enumerate() {
        // the shuffle permutes rows but the full-batch gradient is order-free
        assert!((out.as_slice()[i] - (p.as_slice()[i] - 0.1 * gi)).abs() < 1e-12);
    }
}

#[test]
fn local_update_validates_inputs() {
    let b = Batch::from_rows([(vec![1.0, 2.0], 3.0)]).unwrap();
    let mut cfg = LocalTraining {
        step_size: 0.1,
        epochs: 1,
        batch_size: 0,
        objective: Objective::Rmse,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(local_update(&linear2(), &ParameterVector::zeros(2), &b, &cfg, &mut rng).is_err());
    cfg.batch_size = 1;
    let empty = Batch::new(vec![], 2, vec![], 1).unwrap();
    assert!(matches!(
        local_update(&linear2(), &ParameterVector::zeros(2), &empty, &cfg, &mut rng),
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn local_update_is_deterministic() {
    let spec = ModelSpec::hospital_default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = spec.init_params(&mut rng);
    let b = Batch::new(
        (0..30).map(|i| (i as f64 * 0.37).sin()).collect(),
        3,
        (0..10).map(|i| (i as f64).cos()).collect(),
        1,
    )
    .unwrap();
    let cfg = LocalTraining {
        step_size: 0.05,
        epochs: 4,
        batch_size: 3,
        objective: Objective::Rmse,
    };
    let a = local_update(&spec, &p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let c = local_update(&spec, &p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, c);
    assert_ne!(a, p);
}

#[test]
fn non_finite_parameters_are_rejected() {
    assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
    assert!(ParameterVector::try_from(vec![f64::INFINITY]).is_err());
}

proptest! {
    #[test]
    fn pack_unpack_roundtrip(
        input in 1usize..5,
        hidden in proptest::collection::vec(1usize..5, 0..3),
        output in 1usize..4,
        seed in any::<u64>(),
    ) {
        let spec = ModelSpec::Mlp { input_dim: input, hidden, output_dim: output };
        let p = spec.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        let layers: Vec<(Vec<f64>, Vec<f64>)> = spec
            .unpack(p.as_slice())
            .unwrap()
            .into_iter()
            .map(|(w, b)| (w.to_vec(), b.to_vec()))
            .collect();
        prop_assert_eq!(spec.pack(&layers).unwrap(), p);
    }

    #[test]
    fn rmse_is_residual_norm_over_sqrt_m(
        rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -20.0f64..20.0), 1..20),
        t0 in -5.0f64..5.0,
        t1 in -5.0f64..5.0,
    ) {
        let b = Batch::from_rows(rows.iter().map(|&(a, c, y)| (vec![a, c], y))).unwrap();
        let l = loss(&linear2(), &pv(&[t0, t1]), &b, Objective::Rmse).unwrap();
        let rss: f64 = rows.iter().map(|&(a, c, y)| (y - a * t0 - c * t1).powi(2)).sum();
        prop_assert!(l >= 0.0);
        prop_assert!((l - (rss / rows.len() as f64).sqrt()).abs() <= 1e-12 * (1.0 + l));
    }
}
