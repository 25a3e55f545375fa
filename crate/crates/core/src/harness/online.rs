use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, Averaging, HarnessError, Result, SubjectEpochs, Tally};
use crate::dataset::{EegEpoch, OnlineSplit, SplitPlan};
use crate::model::{self, DenseLayer, ModelConfig, ModelWeights};
use crate::online::{adapt_session, OnlineHyperparams};
use crate::tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectOnline {
    pub subject: u32,
    pub adapt_samples: usize,
    pub test_samples: usize,
    pub pre_correct: usize,
    pub post_correct: usize,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    /// `post_accuracy - pre_accuracy`.
    pub gain: f64,
    /// Mean adaptation loss over the stream.
    pub mean_adapt_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub averaging: Averaging,
    pub hyperparams: OnlineHyperparams,
    pub subjects: Vec<SubjectOnline>,
    pub mean_pre: f64,
    pub mean_post: f64,
    /// `mean_post - mean_pre`.
    pub mean_gain: f64,
}

fn head_correct(head: &DenseLayer, features: &[Vec<f32>], labels: &[usize]) -> Result<usize> {
    let mut correct = 0;
    for (f, &y) in features.iter().zip(labels) {
        let logits = tensor::dense(f, &head.weight, &head.bias).map_err(model::ModelError::from)?;
        correct += usize::from(model::argmax(&logits) == y);
    }
    Ok(correct)
}

fn pick<'a>(epochs: &'a [EegEpoch], idx: &[usize], subject: u32) -> Result<Vec<&'a EegEpoch>> {
    idx.iter()
        .map(|&i| {
            epochs
                .get(i)
                .ok_or_else(|| HarnessError::PlanMismatch(format!("subject {subject} has no instance {i}")))
        })
        .collect()
}

fn run_subject(
    base: &ModelWeights,
    config: &ModelConfig,
    hyper: &OnlineHyperparams,
    split: &OnlineSplit,
    epochs: &[EegEpoch],
) -> Result<SubjectOnline> {
    let s = split.subject;
    if split.adapt.is_empty() {
        return Err(HarnessError::EmptyHalf {
            subject: s,
            half: "adaptation",
        });
    }
    if split.test.is_empty() {
        return Err(HarnessError::EmptyHalf {
            subject: s,
            half: "test",
        });
    }
    let adapt = pick(epochs, &split.adapt, s)?;
    let test = pick(epochs, &split.test, s)?;

    // The backbone is frozen, so test features are computed once and scored
    // against the pristine and the adapted head. Scoring by logits gives the
    // same argmax as scoring by probabilities.
    let features = test
        .iter()
        .map(|e| Ok(model::forward(base, config, e)?.features))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = test.iter().map(|e| e.label.index()).collect();
    let pre_correct = head_correct(&base.classifier, &features, &labels)?;

    let mut weights = base.clone();
    let outcome = adapt_session(&mut weights, config, hyper, adapt.iter().map(|e| (*e, e.label.index())))
        .map_err(|source| HarnessError::Session { subject: s, source })?;
    let post_correct = head_correct(&weights.classifier, &features, &labels)?;

    let n = test.len();
    let pre = Tally {
        correct: pre_correct,
        total: n,
    }
    .accuracy();
    let post = Tally {
        correct: post_correct,
        total: n,
    }
    .accuracy();
    let mean_loss = outcome.events.iter().map(|e| e.loss as f64).sum::<f64>() / outcome.events.len() as f64;
    Ok(SubjectOnline {
        subject: s,
        adapt_samples: adapt.len(),
        test_samples: n,
        pre_correct,
        post_correct,
        pre_accuracy: pre,
        post_accuracy: post,
        gain: post - pre,
        mean_adapt_loss: mean_loss,
    })
}

/// For each subject in the online plan: score the test half with the
/// pristine head, adapt a private copy on the adaptation half, score again.
/// Subjects run in parallel; results are in plan order.
pub fn run_online_experiment(
    weights: &ModelWeights,
    config: &ModelConfig,
    hyper: &OnlineHyperparams,
    plan: &SplitPlan,
    data: &SubjectEpochs,
    averaging: Averaging,
) -> Result<OnlineReport> {
    hyper.validate()?;
    weights.validate(config)?;
    let splits = plan
        .online()
        .ok_or_else(|| HarnessError::PlanMismatch(format!("expected an online plan, got {:?}", plan.protocol())))?;
    let subjects = splits
        .par_iter()
        .map(|split| {
            let epochs = data.get(&split.subject).ok_or_else(|| {
                HarnessError::PlanMismatch(format!("plan names subject {}, absent from data", split.subject))
            })?;
            run_subject(weights, config, hyper, split, epochs)
        })
        .collect::<Result<Vec<_>>>()?;

    let pre: Vec<Tally> = subjects
        .iter()
        .map(|s| Tally {
            correct: s.pre_correct,
            total: s.test_samples,
        })
        .collect();
    let post: Vec<Tally> = subjects
        .iter()
        .map(|s| Tally {
            correct: s.post_correct,
            total: s.test_samples,
        })
        .collect();
    let mean_pre = aggregate(&pre, averaging);
    let mean_post = aggregate(&post, averaging);
    Ok(OnlineReport {
        averaging,
        hyperparams: *hyper,
        subjects,
        mean_pre,
        mean_post,
        mean_gain: mean_post - mean_pre,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_splits, Catalog, Protocol, SplitOptions};
    use crate::harness::{evaluate, testutil::random_data};
    use crate::model::ConfigId;

    fn setup(rate: f64) -> (ModelConfig, ModelWeights, SubjectEpochs, SplitPlan) {
        let config = ConfigId::CTwo.config();
        let data = random_data(&config, 3, 12, 4);
        let cat = Catalog::new(data.iter().map(|(&s, e)| (s, e.len())));
        let plan = make_splits(
            &cat,
            Protocol::Online,
            &SplitOptions {
                folds: 5,
                online_rate: rate,
            },
            8,
        )
        .unwrap();
        (config.clone(), ModelWeights::random(&config, 2), data, plan)
    }

    #[test]
    fn lr_zero_means_no_gain() {
        let (config, w, data, plan) = setup(0.5);
        let hyper = OnlineHyperparams {
            learning_rate: 0.0,
            ..OnlineHyperparams::default()
        };
        let r = run_online_experiment(&w, &config, &hyper, &plan, &data, Averaging::Subject).unwrap();
        for s in &r.subjects {
            assert_eq!(s.pre_accuracy, s.post_accuracy);
            assert_eq!(s.gain, 0.0);
        }
        assert_eq!(r.mean_gain, 0.0);
    }

    #[test]
    fn gains_and_means_are_consistent() {
        let (config, w, data, plan) = setup(0.5);
        let before = w.clone();
        let r = run_online_experiment(
            &w,
            &config,
            &OnlineHyperparams::default(),
            &plan,
            &data,
            Averaging::Subject,
        )
        .unwrap();
        assert_eq!(w, before);
        for s in &r.subjects {
            assert_eq!(s.gain, s.post_accuracy - s.pre_accuracy);
            assert_eq!((s.adapt_samples, s.test_samples), (6, 6));
        }
        let n = r.subjects.len() as f64;
        let mp = r.subjects.iter().map(|s| s.pre_accuracy).sum::<f64>() / n;
        assert!((r.mean_pre - mp).abs() < 1e-12);
        assert!((r.mean_gain - (r.mean_post - r.mean_pre)).abs() < 1e-12);

        // pre matches a full forward pass on the test half
        let split = &plan.online().unwrap()[0];
        let test: Vec<&EegEpoch> = split.test.iter().map(|&i| &data[&split.subject][i]).collect();
        let t = evaluate(&w, &config, test).unwrap();
        assert_eq!(t.correct, r.subjects[0].pre_correct);

        let again = run_online_experiment(
            &w,
            &config,
            &OnlineHyperparams::default(),
            &plan,
            &data,
            Averaging::Subject,
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn empty_half_is_an_error() {
        let (config, w, data, plan) = setup(1.0);
        let err = run_online_experiment(
            &w,
            &config,
            &OnlineHyperparams::default(),
            &plan,
            &data,
            Averaging::Subject,
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::EmptyHalf { half: "test", .. }));
    }
}
