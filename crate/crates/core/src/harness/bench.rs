use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::model::{self, footprint, ConfigId, FootprintReport, ModelConfig, ModelWeights};
use crate::online::{ClassifierState, OnlineHyperparams};

/// What the `update` latency covers.
pub const UPDATE_SCOPE: &str = "classifier step on cached backbone features: softmax, loss, \
gradient, EMA and parameter update; the backbone forward is timed separately as `forward`";

pub const ENERGY_NOTE: &str = "energy is not measured on the host; device energy figures in \
`reference` are quoted constants only";

const WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub reps: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub mean_us: f64,
    pub min_us: f64,
}

impl LatencyStats {
    fn from_samples(mut us: Vec<f64>) -> Self {
        us.sort_by(f64::total_cmp);
        Self {
            reps: us.len(),
            p50_us: percentile(&us, 50.0),
            p95_us: percentile(&us, 95.0),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            min_us: us[0],
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub config: ConfigId,
    pub forward: LatencyStats,
    pub update: LatencyStats,
    /// Forward plus update, i.e. one full streaming adaptation step.
    pub adapt_step: LatencyStats,
    pub update_scope: String,
    pub footprint: FootprintReport,
    pub energy_note: String,
}

fn time_us(mut f: impl FnMut()) -> f64 {
    let t = Instant::now();
    f();
    t.elapsed().as_secs_f64() * 1e6
}

/// Time `reps` forwards and `reps` classifier updates on a random input.
pub fn run_bench(id: ConfigId, weights: &ModelWeights, reps: usize, seed: u64) -> Result<BenchEntry> {
    if reps == 0 {
        return Err(HarnessError::Spec("benchmark repetitions must be at least 1".into()));
    }
    let config: ModelConfig = id.config();
    weights.validate(&config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<f32> = (0..config.channels * config.samples)
        .map(|_| rng.random_range(-50.0..50.0))
        .collect();
    let hyper = OnlineHyperparams::default();
    let features = model::forward_input(weights, &config, &input)?.features;
    let pristine = ClassifierState::from_dense(&weights.classifier);

    let mut forward = Vec::with_capacity(reps);
    for i in 0..WARMUP + reps {
        let mut out = None;
        let us = time_us(|| out = Some(model::forward_input(weights, &config, black_box(&input))));
        out.expect("ran")?;
        if i >= WARMUP {
            forward.push(us);
        }
    }

    // Each timed update starts from the same state so every rep does equal work.
    let mut update = Vec::with_capacity(reps);
    let mut state = pristine.clone();
    for i in 0..WARMUP + reps {
        state.clone_from(&pristine);
        let label = i % config.num_classes;
        let mut res = None;
        let us = time_us(|| res = Some(state.step_features(black_box(&features), label, &hyper)));
        res.expect("ran")?;
        if i >= WARMUP {
            update.push(us);
        }
    }

    let mut adapt_step = Vec::with_capacity(reps);
    for i in 0..WARMUP + reps {
        state.clone_from(&pristine);
        let label = i % config.num_classes;
        let mut res: Option<Result<()>> = None;
        let us = time_us(|| {
            res = Some((|| {
                let f = model::forward_input(weights, &config, black_box(&input))?.features;
                state.step_features(&f, label, &hyper)?;
                Ok(())
            })())
        });
        res.expect("ran")?;
        if i >= WARMUP {
            adapt_step.push(us);
        }
    }

    Ok(BenchEntry {
        config: id,
        forward: LatencyStats::from_samples(forward),
        update: LatencyStats::from_samples(update),
        adapt_step: LatencyStats::from_samples(adapt_step),
        update_scope: UPDATE_SCOPE.into(),
        footprint: footprint(&config),
        energy_note: ENERGY_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.0), 1.0);
    }

    #[test]
    fn zero_reps_is_an_error() {
        let c = ConfigId::CTwo.config();
        assert!(run_bench(ConfigId::CTwo, &ModelWeights::random(&c, 1), 0, 1).is_err());
    }

    #[test]
    fn small_bench_has_fields() {
        let c = ConfigId::CTwo.config();
        let b = run_bench(ConfigId::CTwo, &ModelWeights::random(&c, 1), 5, 1).unwrap();
        assert_eq!(b.forward.reps, 5);
        assert!(b.forward.p50_us <= b.forward.p95_us);
        assert!(b.update.min_us > 0.0);
        assert_eq!(b.footprint.config, c);
    }
}
