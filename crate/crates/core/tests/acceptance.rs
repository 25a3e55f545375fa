//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line in `cargo test` output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use eegodl::archive::ArchiveError;
use eegodl::dataset::synth::{synthetic_run, RunSpec};
use eegodl::dataset::{parse_edf_bytes, write_edf_bytes, EdfError};
use eegodl::harness::run_bench;
use eegodl::model::{self, decode_weights, encode_weights, footprint, ConfigId, DenseLayer, ModelConfig};
use eegodl::online::{adapt_step, dense_gradient, DenseGradient};
use eegodl::tensor::{avg_pool_w, batchnorm_infer, conv2d, dense, BatchNormParams, ConvKernelBank, Padding, Tensor3};
use eegodl::{ClassifierState, EegEpoch, MiClass, ModelWeights, OnlineHyperparams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient oracle", gradient_oracle),
        ("EMA/update algebra", ema_update_algebra),
        ("frozen backbone", frozen_backbone),
        ("synthetic adaptation gain", synthetic_adaptation_gain),
        ("kernel oracles", kernel_oracles),
        ("parser", parser),
        ("shape/footprint determinism", shape_footprint_determinism),
        ("latency ordering", latency_ordering),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- gradient

/// Cross-entropy of a dense head in f64, the finite-difference target.
fn loss_f64(w: &[f64], b: &[f64], x: &[f64], y: usize) -> f64 {
    let fd = x.len();
    let z: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(c, bc)| bc + w[c * fd..(c + 1) * fd].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

fn gradient_oracle() -> Outcome {
    const DRAWS_PER_DIM: usize = 40;
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e1d);
    let mut worst = 0.0f64;
    let mut draws = 0;
    for fd in [480usize, 320, 160] {
        for _ in 0..DRAWS_PER_DIM {
            // Feature magnitudes are kept away from zero so each gradient entry
            // d_c * x_f is well above the finite-difference noise floor.
            let x: Vec<f32> = (0..fd)
                .map(|_| {
                    let m: f32 = rng.random_range(0.05..1.0);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let w: Vec<f32> = (0..4 * fd).map(|_| rng.random_range(-0.1..0.1)).collect();
            let b: Vec<f32> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            let y = rng.random_range(0..4);

            let state = ClassifierState::from_dense(&DenseLayer {
                classes: 4,
                features: fd,
                weight: w.clone(),
                bias: b.clone(),
            });
            let p = state.probabilities(&x).map_err(|e| e.to_string())?;
            let g = dense_gradient(&x, &p, y).map_err(|e| e.to_string())?;

            let (mut w64, mut b64): (Vec<f64>, Vec<f64>) = (
                w.iter().map(|&v| v as f64).collect(),
                b.iter().map(|&v| v as f64).collect(),
            );
            let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs());
            for i in 0..w64.len() {
                let orig = w64[i];
                w64[i] = orig + H;
                let up = loss_f64(&w64, &b64, &x64, y);
                w64[i] = orig - H;
                let down = loss_f64(&w64, &b64, &x64, y);
                w64[i] = orig;
                worst = worst.max(rel(g.weight[i] as f64, (up - down) / (2.0 * H)));
            }
            for i in 0..4 {
                let orig = b64[i];
                b64[i] = orig + H;
                let up = loss_f64(&w64, &b64, &x64, y);
                b64[i] = orig - H;
                let down = loss_f64(&w64, &b64, &x64, y);
                b64[i] = orig;
                worst = worst.max(rel(g.bias[i] as f64, (up - down) / (2.0 * H)));
            }
            draws += 1;
        }
    }
    check(worst <= 1e-4, || format!("max relative error {worst:.3e} > 1e-4"))?;
    Ok(format!(
        "{draws} draws over feature dims 480/320/160, max relative error {worst:.2e} (tolerance 1e-4)"
    ))
}

// ---------------------------------------------------------------- EMA

fn fresh_state(fd: usize, rng: &mut ChaCha8Rng) -> ClassifierState {
    ClassifierState::from_dense(&DenseLayer {
        classes: 4,
        features: fd,
        weight: (0..4 * fd).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bias: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
    })
}

fn random_grad(fd: usize, rng: &mut ChaCha8Rng) -> DenseGradient {
    DenseGradient {
        weight: (0..4 * fd).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bias: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn ema_update_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe3a);
    let fd = 160;

    // β = 0: the buffer becomes the gradient exactly, whatever it held.
    for _ in 0..20 {
        let mut s = fresh_state(fd, &mut rng);
        let junk = random_grad(fd, &mut rng);
        s.ema_update(&junk, 0.5).map_err(|e| e.to_string())?;
        let g = random_grad(fd, &mut rng);
        s.ema_update(&g, 0.0).map_err(|e| e.to_string())?;
        check(s.ema_weight == g.weight && s.ema_bias == g.bias, || {
            "β=0 is not a passthrough".into()
        })?;
    }

    // Constant gradient from a zero buffer: v_n = (1 - β^n) g.
    let mut worst = 0.0f64;
    for &beta in &[0.1f32, 0.5, 0.75, 0.9] {
        let g = random_grad(fd, &mut rng);
        let mut s = fresh_state(fd, &mut rng);
        for n in 1..=50 {
            s.ema_update(&g, beta).map_err(|e| e.to_string())?;
            let k = 1.0 - (beta as f64).powi(n);
            for (v, gv) in s
                .ema_weight
                .iter()
                .chain(&s.ema_bias)
                .zip(g.weight.iter().chain(&g.bias))
            {
                worst = worst.max((*v as f64 - k * *gv as f64).abs());
            }
        }
    }
    check(worst <= 1e-6, || {
        format!("constant-gradient recurrence off by {worst:.3e}")
    })?;

    // θ' = θ - λ v, elementwise.
    let mut s = fresh_state(fd, &mut rng);
    s.ema_update(&random_grad(fd, &mut rng), 0.0)
        .map_err(|e| e.to_string())?;
    let before = s.clone();
    s.apply_update(0.01).map_err(|e| e.to_string())?;
    let mut upd = 0.0f64;
    for ((w1, w0), v) in s.weight.iter().zip(&before.weight).zip(&before.ema_weight) {
        upd = upd.max((*w1 as f64 - (*w0 as f64 - 0.01 * *v as f64)).abs());
    }
    check(upd <= 1e-6, || format!("parameter update off by {upd:.3e}"))?;

    // λ = 0: parameters are bitwise unchanged by full steps.
    let hyper = OnlineHyperparams {
        learning_rate: 0.0,
        ..OnlineHyperparams::default()
    };
    let mut s = fresh_state(fd, &mut rng);
    let (w0, b0) = (s.weight.clone(), s.bias.clone());
    for i in 0..100 {
        let x: Vec<f32> = (0..fd).map(|_| rng.random_range(-2.0..2.0)).collect();
        s.step_features(&x, i % 4, &hyper).map_err(|e| e.to_string())?;
    }
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(&s.weight) == bits(&w0) && bits(&s.bias) == bits(&b0), || {
        "λ=0 step moved parameters".into()
    })?;

    Ok(format!(
        "β=0 passthrough exact; constant-gradient max error {worst:.2e} (tolerance 1e-6); \
         update max error {upd:.2e}; λ=0 leaves parameters bitwise unchanged over 100 steps"
    ))
}

// ---------------------------------------------------------------- frozen backbone

fn random_epoch(config: &ModelConfig, rng: &mut ChaCha8Rng) -> EegEpoch {
    let names = (0..config.channels).map(|c| format!("E{c}")).collect();
    let data = (0..config.channels * config.samples)
        .map(|_| rng.random_range(-60.0..60.0))
        .collect();
    let label = MiClass::from_index(rng.random_range(0..4)).unwrap();
    EegEpoch::new(1, 4, label, 0.0, names, config.samples, data).unwrap()
}

fn frozen_backbone() -> Outcome {
    const STEPS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xf0f0);
    let hyper = OnlineHyperparams::default();
    for id in ConfigId::ALL {
        let config = id.config();
        let original = ModelWeights::random(&config, rng.random());
        let mut weights = original.clone();
        let mut state = ClassifierState::from_dense(&weights.classifier);
        for _ in 0..STEPS {
            let e = random_epoch(&config, &mut rng);
            adapt_step(&mut weights, &config, &mut state, &hyper, &e, e.label.index()).map_err(|e| e.to_string())?;
        }
        check(weights.backbone_bits() == original.backbone_bits(), || {
            format!("{id}: backbone tensors changed")
        })?;
        check(weights.classifier != original.classifier, || {
            format!("{id}: classifier never moved")
        })?;
        check(state.samples_seen == STEPS as u64, || {
            format!("{id}: samples_seen {}", state.samples_seen)
        })?;
    }
    Ok(format!(
        "{STEPS} steps per config on random streams; every non-dense tensor bitwise unchanged, dense head moved"
    ))
}

// ---------------------------------------------------------------- adaptation gain

/// Class `y` lifts its own quarter of the features by 1 over bounded noise,
/// so the block-indicator head separates every sample with a positive margin.
fn separable(fd: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<f32>, usize)> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .map(|y| {
            let mut x: Vec<f32> = (0..fd).map(|_| rng.random_range(-0.4..0.4)).collect();
            for v in &mut x[y * fd / 4..(y + 1) * fd / 4] {
                *v += 1.0;
            }
            (x, y)
        })
        .collect()
}

fn margin(data: &[(Vec<f32>, usize)], fd: usize) -> f32 {
    let q = fd / 4;
    data.iter()
        .map(|(x, y)| {
            let score = |c: usize| x[c * q..(c + 1) * q].iter().sum::<f32>();
            let own = score(*y);
            (0..4)
                .filter(|c| c != y)
                .map(|c| own - score(c))
                .fold(f32::INFINITY, f32::min)
        })
        .fold(f32::INFINITY, f32::min)
}

/// Full-batch multinomial logistic regression in f64.
fn logistic_regression(train: &[(Vec<f32>, usize)], fd: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut w, mut b) = (vec![0.0f64; 4 * fd], vec![0.0f64; 4]);
    let n = train.len() as f64;
    for _ in 0..300 {
        let (mut gw, mut gb) = (vec![0.0f64; 4 * fd], vec![0.0f64; 4]);
        for (x, y) in train {
            let z: Vec<f64> = (0..4)
                .map(|c| b[c] + (0..fd).map(|f| w[c * fd + f] * x[f] as f64).sum::<f64>())
                .collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let tot: f64 = e.iter().sum();
            for c in 0..4 {
                let d = e[c] / tot - if c == *y { 1.0 } else { 0.0 };
                gb[c] += d / n;
                for f in 0..fd {
                    gw[c * fd + f] += d * x[f] as f64 / n;
                }
            }
        }
        for (a, g) in w.iter_mut().zip(&gw) {
            *a -= 0.05 * g;
        }
        for (a, g) in b.iter_mut().zip(&gb) {
            *a -= 0.05 * g;
        }
    }
    (w, b)
}

fn synthetic_adaptation_gain() -> Outcome {
    const BUDGET: usize = 200;
    let hyper = OnlineHyperparams {
        learning_rate: 0.01,
        ema_coefficient: 0.9,
        epochs_per_sample: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xada9);
    let mut parts = Vec::new();
    for fd in [480usize, 320, 160] {
        let train = separable(fd, BUDGET, &mut rng);
        let test = separable(fd, 400, &mut rng);
        let m = margin(&train, fd).min(margin(&test, fd));
        check(m > 0.0, || format!("dim {fd}: constructed stream has margin {m}"))?;

        // A random head that carries no class information: each row is
        // zero-mean within every class block, so only noise drives it.
        let mut weight: Vec<f32> = (0..4 * fd).map(|_| rng.random_range(-0.01..0.01)).collect();
        for block in weight.chunks_mut(fd / 4) {
            let mean = block.iter().sum::<f32>() / block.len() as f32;
            block.iter_mut().for_each(|v| *v -= mean);
        }
        let mut s = ClassifierState::from_dense(&DenseLayer {
            classes: 4,
            features: fd,
            weight,
            bias: vec![0.0; 4],
        });
        let acc = |s: &ClassifierState| {
            test.iter()
                .filter(|(x, y)| model::argmax(&s.probabilities(x).unwrap()) == *y)
                .count() as f64
                / test.len() as f64
        };
        let pre = acc(&s);
        check((0.15..=0.35).contains(&pre), || {
            format!("dim {fd}: starting accuracy {pre} is not near chance")
        })?;
        let mut reached = None;
        for (i, (x, y)) in train.iter().enumerate() {
            s.step_features(x, *y, &hyper).map_err(|e| e.to_string())?;
            if reached.is_none() && (i + 1) % 10 == 0 && acc(&s) >= 0.9 {
                reached = Some(i + 1);
            }
        }
        let post = acc(&s);
        let n = reached.ok_or_else(|| format!("dim {fd}: accuracy {post:.3} after {BUDGET} samples"))?;

        let (w, b) = logistic_regression(&train, fd);
        let oracle = test
            .iter()
            .filter(|(x, y)| {
                let z: Vec<f32> = (0..4)
                    .map(|c| (b[c] + (0..fd).map(|f| w[c * fd + f] * x[f] as f64).sum::<f64>()) as f32)
                    .collect();
                model::argmax(&z) == *y
            })
            .count() as f64
            / test.len() as f64;
        check(oracle >= 0.95, || {
            format!("dim {fd}: logistic-regression oracle reached only {oracle:.3}")
        })?;
        parts.push(format!(
            "dim {fd}: {pre:.2} -> {post:.2}, >=0.90 after {n} samples, oracle {oracle:.2}"
        ));
    }
    Ok(format!("λ=0.01 β=0.9; {}", parts.join("; ")))
}

// ---------------------------------------------------------------- kernels

fn conv_ref(input: &Tensor3, bank: &ConvKernelBank, padding: Padding) -> (usize, usize, usize, Vec<f64>) {
    let (maps, rows, cols) = input.dims();
    let per_group = maps / bank.groups;
    let kpg = bank.kernels / bank.groups;
    let (rb, ra) = padding.amounts(bank.kernel_rows);
    let (cb, ca) = padding.amounts(bank.kernel_cols);
    let out_rows = rows + rb + ra - bank.kernel_rows + 1;
    let out_cols = cols + cb + ca - bank.kernel_cols + 1;
    let mut out = vec![0.0f64; bank.kernels * out_rows * out_cols];
    for o in 0..bank.kernels {
        let g = o / kpg;
        for r in 0..out_rows {
            for c in 0..out_cols {
                let mut acc = 0.0f64;
                for m in 0..per_group {
                    for kr in 0..bank.kernel_rows {
                        for kc in 0..bank.kernel_cols {
                            let ir = r as isize + kr as isize - rb as isize;
                            let ic = c as isize + kc as isize - cb as isize;
                            if ir < 0 || ic < 0 || ir >= rows as isize || ic >= cols as isize {
                                continue;
                            }
                            let wi = ((o * per_group + m) * bank.kernel_rows + kr) * bank.kernel_cols + kc;
                            acc +=
                                bank.weights[wi] as f64 * input.at(g * per_group + m, ir as usize, ic as usize) as f64;
                        }
                    }
                }
                out[(o * out_rows + r) * out_cols + c] = acc;
            }
        }
    }
    (bank.kernels, out_rows, out_cols, out)
}

fn max_abs(got: &[f32], want: &[f64]) -> Result<f64, String> {
    check(got.len() == want.len(), || {
        format!("length {} vs reference {}", got.len(), want.len())
    })?;
    Ok(got
        .iter()
        .zip(want)
        .map(|(g, w)| (*g as f64 - w).abs())
        .fold(0.0, f64::max))
}

fn kernel_oracles() -> Outcome {
    const SHAPES: usize = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let mut worst = [0.0f64; 4];
    let mut depthwise = 0;
    let mut grouped = 0;

    for i in 0..SHAPES {
        let groups = rng.random_range(1..=4);
        // Every third shape is depthwise (one input map per group).
        let per_group = if i % 3 == 0 { 1 } else { rng.random_range(1..=3) };
        let kpg = rng.random_range(1..=3);
        if per_group == 1 && groups > 1 {
            depthwise += 1;
        } else if groups > 1 {
            grouped += 1;
        }
        let (kr, kc) = (rng.random_range(1..=4), rng.random_range(1..=12));
        let padding = if rng.random_bool(0.5) {
            Padding::Same
        } else {
            Padding::Valid
        };
        let rows = rng.random_range(kr..=kr + 5);
        let cols = rng.random_range(kc..=kc + 40);
        let maps = groups * per_group;
        let input = Tensor3::new(
            maps,
            rows,
            cols,
            (0..maps * rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let fan_in = (per_group * kr * kc) as f32;
        let scale = 1.0 / fan_in.sqrt();
        let kernels = groups * kpg;
        let bank = ConvKernelBank::new(
            "conv",
            kernels,
            kr,
            kc,
            groups,
            (0..kernels * per_group * kr * kc)
                .map(|_| rng.random_range(-scale..scale))
                .collect(),
        );
        let got = conv2d(&input, &bank, padding).map_err(|e| e.to_string())?;
        let (m, r, c, want) = conv_ref(&input, &bank, padding);
        check(got.dims() == (m, r, c), || {
            format!("conv dims {:?} vs reference {:?}", got.dims(), (m, r, c))
        })?;
        worst[0] = worst[0].max(max_abs(got.data(), &want)?);

        let features = rng.random_range(1..=500);
        let classes = rng.random_range(1..=6);
        let x: Vec<f32> = (0..features).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = 1.0 / (features as f32).sqrt();
        let w: Vec<f32> = (0..classes * features).map(|_| rng.random_range(-s..s)).collect();
        let b: Vec<f32> = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = dense(&x, &w, &b).map_err(|e| e.to_string())?;
        let want: Vec<f64> = (0..classes)
            .map(|k| {
                b[k] as f64
                    + (0..features)
                        .map(|f| w[k * features + f] as f64 * x[f] as f64)
                        .sum::<f64>()
            })
            .collect();
        worst[1] = worst[1].max(max_abs(&got, &want)?);

        let (maps, rows, cols) = (
            rng.random_range(1..=16),
            rng.random_range(1..=4),
            rng.random_range(1..=64),
        );
        // Outputs stay O(1): an absolute 1e-6 bound is below f32 resolution past about 8.
        let t = Tensor3::new(
            maps,
            rows,
            cols,
            (0..maps * rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let p = BatchNormParams {
            name: "bn".into(),
            gamma: (0..maps).map(|_| rng.random_range(0.5..1.0)).collect(),
            beta: (0..maps).map(|_| rng.random_range(-0.5..0.5)).collect(),
            running_mean: (0..maps).map(|_| rng.random_range(-0.5..0.5)).collect(),
            running_var: (0..maps).map(|_| rng.random_range(0.8..2.0)).collect(),
            epsilon: BatchNormParams::DEFAULT_EPSILON,
        };
        let got = batchnorm_infer(&t, &p).map_err(|e| e.to_string())?;
        let mut want = Vec::with_capacity(maps * rows * cols);
        for m in 0..maps {
            for r in 0..rows {
                for c in 0..cols {
                    let v = t.at(m, r, c) as f64;
                    want.push(
                        p.gamma[m] as f64 * (v - p.running_mean[m] as f64)
                            / (p.running_var[m] as f64 + p.epsilon as f64).sqrt()
                            + p.beta[m] as f64,
                    );
                }
            }
        }
        worst[2] = worst[2].max(max_abs(got.data(), &want)?);

        let width = rng.random_range(1..=8);
        let (maps, rows, cols) = (
            rng.random_range(1..=16),
            rng.random_range(1..=4),
            width * rng.random_range(1..=30),
        );
        let t = Tensor3::new(
            maps,
            rows,
            cols,
            (0..maps * rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let got = avg_pool_w(&t, width).map_err(|e| e.to_string())?;
        check(got.dims() == (maps, rows, cols / width), || "pool dims".into())?;
        let mut want = Vec::new();
        for m in 0..maps {
            for r in 0..rows {
                for o in 0..cols / width {
                    want.push((0..width).map(|k| t.at(m, r, o * width + k) as f64).sum::<f64>() / width as f64);
                }
            }
        }
        worst[3] = worst[3].max(max_abs(got.data(), &want)?);
    }
    let names = ["conv2d", "dense", "batchnorm", "pool"];
    for (n, w) in names.iter().zip(worst) {
        check(w <= 1e-6, || format!("{n} max abs error {w:.3e} > 1e-6"))?;
    }
    Ok(format!(
        "{SHAPES} random shapes each ({grouped} grouped, {depthwise} depthwise convs); max abs error \
         conv2d {:.1e}, dense {:.1e}, batchnorm {:.1e}, pool {:.1e} (tolerance 1e-6)",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// ---------------------------------------------------------------- parser

fn parse_quietly(bytes: &[u8]) -> Result<Result<eegodl::dataset::EdfRecord, EdfError>, String> {
    catch_unwind(|| parse_edf_bytes(bytes)).map_err(|_| "parser panicked".to_string())
}

fn set_field(bytes: &mut [u8], start: usize, width: usize, value: &str) {
    let padded = format!("{value:<width$}");
    bytes[start..start + width].copy_from_slice(padded.as_bytes());
}

fn parser() -> Outcome {
    // Round trips.
    let specs = [
        RunSpec::default(),
        RunSpec {
            subject: 42,
            run: 8,
            events: RunSpec::alternating(3, 4, 6),
            seed: 9,
            ..RunSpec::default()
        },
        RunSpec {
            subject: 7,
            run: 12,
            amplitude: 80.0,
            noise: 40.0,
            seed: 3,
            ..RunSpec::default()
        },
    ];
    for spec in &specs {
        let rec = synthetic_run(spec);
        let bytes = write_edf_bytes(&rec).map_err(|e| e.to_string())?;
        let back = parse_edf_bytes(&bytes).map_err(|e| e.to_string())?;
        let (h0, h1) = (&rec.header, &back.header);
        check(
            h0.version == h1.version
                && h0.patient_id == h1.patient_id
                && h0.recording_id == h1.recording_id
                && h0.start_date == h1.start_date
                && h0.start_time == h1.start_time
                && h0.reserved == h1.reserved
                && h0.data_records == h1.data_records
                && h0.record_duration == h1.record_duration,
            || "file header fields differ after round trip".into(),
        )?;
        check(rec.signals.len() == back.signals.len(), || {
            "signal count differs".into()
        })?;
        for (a, b) in rec.signals.iter().zip(&back.signals) {
            check(a.header == b.header, || {
                format!("signal header {} differs", a.header.label)
            })?;
            let (pa, pb) = (a.physical(), b.physical());
            check(
                pa.iter().map(|v| v.to_bits()).eq(pb.iter().map(|v| v.to_bits())),
                || format!("calibrated samples of {} differ", a.header.label),
            )?;
        }
        check(rec.annotations == back.annotations, || "annotations differ".into())?;
        check(back == rec, || "records differ".into())?;
        check(write_edf_bytes(&back).map_err(|e| e.to_string())? == bytes, || {
            "re-encoding is not byte-stable".into()
        })?;
    }

    // Malformed corpus. Every case must return an error, none may panic.
    let good = write_edf_bytes(&synthetic_run(&RunSpec {
        events: RunSpec::alternating(1, 1, 2),
        ..RunSpec::default()
    }))
    .map_err(|e| e.to_string())?;
    let ns: usize = std::str::from_utf8(&good[252..256]).unwrap().trim().parse().unwrap();
    let header_len = 256 * (ns + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0xbad);
    let mut cases: Vec<(String, Vec<u8>)> = Vec::new();

    let mut cuts: Vec<usize> = (0..header_len).step_by(37).collect();
    cuts.extend((0..200).map(|_| rng.random_range(header_len..good.len())));
    cuts.push(good.len() - 1);
    for cut in cuts {
        cases.push((format!("truncated at {cut}"), good[..cut].to_vec()));
    }
    for v in ["1", "EDF+", "\u{7f}", "BIOSEMI"] {
        let mut b = good.clone();
        let s = if v == "\u{7f}" { "x".to_string() } else { v.to_string() };
        set_field(&mut b, 0, 8, &s);
        if v == "\u{7f}" {
            b[0] = 0xff;
        }
        cases.push((format!("bad version field {v:?}"), b));
    }
    for (start, width, value, what) in [
        (184, 8, "512", "header length disagrees with signal count"),
        (184, 8, "abc", "non-numeric header length"),
        (252, 4, &*(ns + 1).to_string(), "signal count too high"),
        (252, 4, "0", "zero signals"),
        (236, 8, "99999999", "record count beyond data"),
        (244, 8, "0", "zero record duration"),
    ] {
        let mut b = good.clone();
        set_field(&mut b, start, width, value);
        cases.push((what.to_string(), b));
    }
    // Samples-per-record of the first signal no longer matches the data size.
    let spr_col = 256 + ns * (16 + 80 + 8 * 5 + 80);
    let mut b = good.clone();
    set_field(&mut b, spr_col, 8, "161");
    cases.push(("inconsistent samples per record".into(), b));
    let mut b = good.clone();
    b.extend_from_slice(&[0, 0, 0]);
    cases.push(("trailing bytes".into(), b));
    let mut b = good.clone();
    set_field(&mut b, 236, 8, "-1");
    b.push(0);
    cases.push(("unknown record count with ragged data".into(), b));
    for n in [0usize, 1, 255, 256, 257, 1024, 4096] {
        cases.push((format!("{n} random bytes"), (0..n).map(|_| rng.random()).collect()));
    }

    let mut kinds = std::collections::BTreeMap::<&str, usize>::new();
    for (what, bytes) in &cases {
        match parse_quietly(bytes)? {
            Ok(_) => return Err(format!("malformed input accepted: {what}")),
            Err(e) => {
                let kind = match e {
                    EdfError::Truncated { .. } => "truncated",
                    EdfError::MalformedHeader { .. } => "malformed-header",
                    EdfError::InconsistentSignals(_) => "inconsistent-signals",
                    EdfError::MalformedAnnotation { .. } => "malformed-annotation",
                    EdfError::FieldOverflow { .. } => "field-overflow",
                    EdfError::Io { .. } => "io",
                };
                *kinds.entry(kind).or_default() += 1;
            }
        }
    }
    // Random header corruption may or may not be rejected, but must not panic.
    let mut fuzzed = 0;
    for _ in 0..300 {
        let mut b = good.clone();
        for _ in 0..rng.random_range(1..8) {
            let i = rng.random_range(0..header_len);
            b[i] = rng.random();
        }
        parse_quietly(&b)?.ok();
        fuzzed += 1;
    }

    // The weight container is parsed with the same discipline.
    let c = ConfigId::CTwo.config();
    let enc = encode_weights(&ModelWeights::random(&c, 1), &c).map_err(|e| e.to_string())?;
    let mut container_cases = 0;
    let mut bad_magic = enc.clone();
    bad_magic[..4].copy_from_slice(b"EDAX");
    let mut bad_version = enc.clone();
    bad_version[4..8].copy_from_slice(&99u32.to_le_bytes());
    let mut flipped = enc.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    let mut inputs = vec![bad_magic, bad_version, flipped];
    inputs.extend((0..enc.len()).step_by(97).map(|n| enc[..n].to_vec()));
    for b in &inputs {
        let r = catch_unwind(|| decode_weights(b)).map_err(|_| "container decoder panicked".to_string())?;
        match r {
            Ok(_) => return Err("malformed container accepted".into()),
            Err(model::ModelError::Archive(
                ArchiveError::BadMagic { .. }
                | ArchiveError::UnsupportedVersion { .. }
                | ArchiveError::Checksum { .. }
                | ArchiveError::Header(_)
                | ArchiveError::Layout(_),
            )) => container_cases += 1,
            Err(e) => return Err(format!("unstructured container error: {e}")),
        }
    }

    let kinds: Vec<String> = kinds.iter().map(|(k, n)| format!("{k} {n}")).collect();
    Ok(format!(
        "{} EDF round trips exact; {} malformed EDF files rejected ({}); {fuzzed} fuzzed headers, \
         {container_cases} malformed containers rejected; no panics",
        specs.len(),
        cases.len(),
        kinds.join(", ")
    ))
}

// ---------------------------------------------------------------- shapes

fn shape_footprint_determinism() -> Outcome {
    let mut dims = Vec::new();
    let mut params = Vec::new();
    for ((ch, secs), want_fd, want_params) in [((64, 3.0), 480, 4244), ((19, 2.0), 320, 2884), ((8, 1.0), 160, 2068)] {
        let c = ModelConfig::build(ch, secs, 160).map_err(|e| e.to_string())?;
        check(c.feature_dim() == want_fd, || {
            format!("({ch}, {secs}s): feature dim {}", c.feature_dim())
        })?;
        let f = footprint(&c);
        // Independent count of trainable parameters from the layer arithmetic.
        let (f1, d, f2) = (8, 2, 16);
        let oracle = f1 * 80 + 2 * f1 + f1 * d * ch + 2 * f1 * d + f1 * d * 20 + f2 * f1 * d + 2 * f2 + 4 * want_fd + 4;
        check(f.total_params == oracle && oracle == want_params, || {
            format!("({ch}, {secs}s): {} params, oracle {oracle}", f.total_params)
        })?;
        dims.push(c.feature_dim());
        params.push(f.total_params);
    }
    check(params.windows(2).all(|w| w[0] > w[1]), || {
        format!("parameter totals not decreasing: {params:?}")
    })?;

    let render = || -> Vec<String> {
        ConfigId::ALL
            .iter()
            .map(|id| serde_json::to_string_pretty(&footprint(&id.config())).unwrap())
            .collect()
    };
    let first = render();
    let threads: Vec<_> = (0..4).map(|_| std::thread::spawn(render)).collect();
    for t in threads {
        check(t.join().unwrap() == first, || {
            "footprint JSON differs between runs".into()
        })?;
    }
    Ok(format!(
        "feature dims {dims:?}, parameter totals {params:?} (strictly decreasing), footprint JSON byte-identical across 5 renders"
    ))
}

// ---------------------------------------------------------------- latency

fn latency_ordering() -> Outcome {
    let mut parts = Vec::new();
    for id in ConfigId::ALL {
        let c = id.config();
        let b = run_bench(id, &ModelWeights::random(&c, 1), 100, 1).map_err(|e| e.to_string())?;
        check(b.update.p50_us < b.forward.p50_us, || {
            format!(
                "{id}: update p50 {:.1} us >= forward p50 {:.1} us",
                b.update.p50_us, b.forward.p50_us
            )
        })?;
        parts.push(format!(
            "{id} update {:.1} us vs forward {:.1} us ({:.0}x)",
            b.update.p50_us,
            b.forward.p50_us,
            b.forward.p50_us / b.update.p50_us
        ));
    }
    Ok(format!(
        "p50 over 100 reps, classifier update on cached features: {}",
        parts.join("; ")
    ))
}
