use super::{BatchNormParams, Result, Tensor3, TensorError};

/// Per-map inference normalization:
/// `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn batchnorm_infer(input: &Tensor3, params: &BatchNormParams) -> Result<Tensor3> {
    params.validate()?;
    if params.len() != input.maps() {
        return Err(TensorError::ShapeMismatch {
            layer: params.name.clone(),
            expected: format!("{} maps", params.len()),
            found: format!("{} maps", input.maps()),
        });
    }
    let (maps, rows, cols) = input.dims();
    let per_map = rows * cols;
    let mut data = Vec::with_capacity(input.data().len());
    for m in 0..maps {
        let scale = params.gamma[m] / (params.running_var[m] + params.epsilon).sqrt();
        let mean = params.running_mean[m];
        let beta = params.beta[m];
        data.extend(
            input.data()[m * per_map..(m + 1) * per_map]
                .iter()
                .map(|&x| scale * (x - mean) + beta),
        );
    }
    Tensor3::new(maps, rows, cols, data)
}

/// Exponential linear unit: `x` for `x >= 0`, `alpha * (exp(x) - 1)` otherwise.
pub fn elu(input: &Tensor3, alpha: f32) -> Tensor3 {
    let (m, r, c) = input.dims();
    let data = input
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { alpha * x.exp_m1() })
        .collect();
    Tensor3 {
        maps: m,
        rows: r,
        cols: c,
        data,
    }
}

/// Non-overlapping mean pooling along the column (time) axis.
pub fn avg_pool_w(input: &Tensor3, width: usize) -> Result<Tensor3> {
    let (maps, rows, cols) = input.dims();
    if width == 0 || cols % width != 0 {
        return Err(TensorError::PoolRemainder { width, cols });
    }
    let inv = 1.0 / width as f32;
    let data = input
        .data()
        .chunks_exact(width)
        .map(|w| w.iter().sum::<f32>() * inv)
        .collect();
    Tensor3::new(maps, rows, cols / width, data)
}

/// `logits[c] = sum_f weight[c * features + f] * x[f] + bias[c]`,
/// with `weight` stored row-major `classes x features`.
pub fn dense(features: &[f32], weight: &[f32], bias: &[f32]) -> Result<Vec<f32>> {
    let classes = bias.len();
    if classes == 0 || weight.len() != classes * features.len() {
        return Err(TensorError::ShapeMismatch {
            layer: "classifier".into(),
            expected: format!("[{classes}, {}] weights", features.len()),
            found: format!("{} weights", weight.len()),
        });
    }
    Ok(weight
        .chunks_exact(features.len())
        .zip(bias)
        .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f32>() + b)
        .collect())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(TensorError::InvalidArgument("softmax of empty vector".into()));
    }
    if let Some(i) = logits.iter().position(|v| v.is_nan()) {
        return Err(TensorError::NanInput(i));
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f32 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(maps: usize, rows: usize, cols: usize, data: Vec<f32>) -> Tensor3 {
        Tensor3::new(maps, rows, cols, data).unwrap()
    }

    #[test]
    fn batchnorm_identity() {
        let x = t(2, 1, 3, vec![1.0, -2.0, 3.5, 0.0, 10.0, -0.25]);
        let out = batchnorm_infer(&x, &BatchNormParams::identity("bn", 2)).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn batchnorm_zero_gamma_gives_beta() {
        let x = t(2, 2, 2, (0..8).map(|v| v as f32).collect());
        let mut p = BatchNormParams::identity("bn", 2);
        p.gamma = vec![0.0, 0.0];
        p.beta = vec![0.5, -3.0];
        let out = batchnorm_infer(&x, &p).unwrap();
        assert!(out.data()[..4].iter().all(|&v| v == 0.5));
        assert!(out.data()[4..].iter().all(|&v| v == -3.0));
    }

    #[test]
    fn batchnorm_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = t(3, 2, 4, (0..24).map(|_| rng.random_range(-2.0..2.0)).collect());
        let p = BatchNormParams {
            name: "bn".into(),
            gamma: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
            beta: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
            running_mean: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            running_var: (0..3).map(|_| rng.random_range(0.0..3.0)).collect(),
            epsilon: 1e-5,
        };
        let out = batchnorm_infer(&x, &p).unwrap();
        for m in 0..3 {
            for i in 0..8 {
                let xv = x.data()[m * 8 + i] as f64;
                let expect = p.gamma[m] as f64 * (xv - p.running_mean[m] as f64)
                    / (p.running_var[m] as f64 + 1e-5).sqrt()
                    + p.beta[m] as f64;
                assert!((out.data()[m * 8 + i] as f64 - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn batchnorm_length_mismatch() {
        let x = t(3, 1, 2, vec![0.0; 6]);
        assert!(matches!(
            batchnorm_infer(&x, &BatchNormParams::identity("bn2", 2)),
            Err(TensorError::ShapeMismatch { .. })
        ));
        let mut p = BatchNormParams::identity("bn", 3);
        p.running_var[1] = -1.0;
        assert!(batchnorm_infer(&x, &p).is_err());
    }

    #[test]
    fn elu_values() {
        let x = t(1, 1, 4, vec![0.0, 1.5, -1.0, -1e30]);
        let out = elu(&x, 1.0);
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[1], 1.5);
        assert!((out.data()[2] as f64 - ((-1.0f64).exp() - 1.0)).abs() < 1e-7);
        assert_eq!(out.data()[3], -1.0);
        let out = elu(&x, 0.5);
        assert!((out.data()[2] as f64 - 0.5 * ((-1.0f64).exp() - 1.0)).abs() < 1e-7);
    }

    #[test]
    fn elu_monotone_and_bounded() {
        let xs: Vec<f32> = (0..400).map(|i| -40.0 + i as f32 * 0.1).collect();
        let out = elu(&t(1, 1, xs.len(), xs), 1.0);
        for w in out.data().windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(out.data().iter().all(|&v| v >= -1.0));
    }

    #[test]
    fn pool_cases() {
        let out = avg_pool_w(&t(1, 1, 4, vec![1., 2., 3., 4.]), 4).unwrap();
        assert_eq!(out.data(), &[2.5]);
        let out = avg_pool_w(&t(2, 1, 8, vec![3.0; 16]), 4).unwrap();
        assert_eq!(out.dims(), (2, 1, 2));
        assert!(out.data().iter().all(|&v| v == 3.0));
        let x = t(1, 2, 3, vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(avg_pool_w(&x, 1).unwrap(), x);
        assert_eq!(
            avg_pool_w(&t(1, 1, 6, vec![0.0; 6]), 4),
            Err(TensorError::PoolRemainder { width: 4, cols: 6 })
        );
    }

    #[test]
    fn pool_then_replicate_preserves_window_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = t(2, 1, 16, (0..32).map(|_| rng.random_range(-1.0..1.0)).collect());
        let pooled = avg_pool_w(&x, 4).unwrap();
        let up: Vec<f32> = pooled.data().iter().flat_map(|&v| std::iter::repeat_n(v, 4)).collect();
        let repooled = avg_pool_w(&t(2, 1, 16, up), 4).unwrap();
        assert_eq!(repooled.data(), pooled.data());
    }

    #[test]
    fn dense_cases() {
        let x = [0.3, -1.0, 2.0, 5.0];
        assert_eq!(dense(&x, &[0.0; 16], &[1., 2., 3., 4.]).unwrap(), vec![1., 2., 3., 4.]);
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let out = dense(&x, &eye, &[1.0; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(out[i], x[i] + 1.0);
        }
        assert!(dense(&x, &[0.0; 15], &[0.0; 4]).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let z = [1.0f32, 2.0, 3.0, 4.0];
        let p = softmax(&z).unwrap();
        let denom: f64 = z.iter().map(|&v| (v as f64).exp()).sum();
        for (pi, zi) in p.iter().zip(z) {
            assert!((*pi as f64 - (zi as f64).exp() / denom).abs() < 1e-6);
        }
        let shifted: Vec<f32> = z.iter().map(|v| v + 100.0).collect();
        for (a, b) in softmax(&shifted).unwrap().iter().zip(&p) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(softmax(&[0.0, f32::NAN]), Err(TensorError::NanInput(1)));
        assert!(softmax(&[]).is_err());
    }
}
