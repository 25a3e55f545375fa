use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, evaluate, Averaging, HarnessError, Result, SubjectEpochs, Tally};
use crate::dataset::{EegEpoch, Protocol, SplitPlan};
use crate::model::{ModelConfig, ModelWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAccuracy {
    pub fold: usize,
    pub accuracy: f64,
    pub test_instances: usize,
}

/// Mean held-out accuracy under both protocols; `degradation = loso - louo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub averaging: Averaging,
    pub louo_folds: Vec<FoldAccuracy>,
    pub loso_folds: Vec<FoldAccuracy>,
    pub louo_mean: f64,
    pub loso_mean: f64,
    pub degradation: f64,
}

fn mean(folds: &[FoldAccuracy]) -> f64 {
    folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64
}

fn check(plan: &SplitPlan, protocol: Protocol, weights: usize) -> Result<()> {
    if plan.protocol() != protocol {
        return Err(HarnessError::PlanMismatch(format!(
            "expected a {protocol:?} plan, got {:?}",
            plan.protocol()
        )));
    }
    if weights != plan.options.folds {
        return Err(HarnessError::PlanMismatch(format!(
            "{protocol:?} plan has {} folds but {weights} containers were given",
            plan.options.folds
        )));
    }
    Ok(())
}

fn subject(data: &SubjectEpochs, s: u32) -> Result<&[EegEpoch]> {
    data.get(&s)
        .map(Vec::as_slice)
        .ok_or_else(|| HarnessError::PlanMismatch(format!("plan names subject {s}, absent from data")))
}

fn fold_tallies(weights: &ModelWeights, config: &ModelConfig, sets: Vec<Vec<&EegEpoch>>) -> Result<Vec<Tally>> {
    sets.into_par_iter().map(|set| evaluate(weights, config, set)).collect()
}

/// Evaluate fold `k`'s container on fold `k`'s held-out data for both
/// protocols.
pub fn run_degradation_eval(
    config: &ModelConfig,
    louo_weights: &[ModelWeights],
    loso_weights: &[ModelWeights],
    louo_plan: &SplitPlan,
    loso_plan: &SplitPlan,
    data: &SubjectEpochs,
    averaging: Averaging,
) -> Result<DegradationReport> {
    check(louo_plan, Protocol::Louo, louo_weights.len())?;
    check(loso_plan, Protocol::Loso, loso_weights.len())?;

    let mut louo_folds = Vec::new();
    for (k, w) in louo_weights.iter().enumerate() {
        let (_, test) = louo_plan
            .louo_fold(k)
            .ok_or_else(|| HarnessError::PlanMismatch(format!("LOUO fold {k} missing")))?;
        let sets = test
            .iter()
            .map(|&s| Ok(subject(data, s)?.iter().collect()))
            .collect::<Result<Vec<Vec<&EegEpoch>>>>()?;
        let tallies = fold_tallies(w, config, sets)?;
        louo_folds.push(FoldAccuracy {
            fold: k,
            accuracy: aggregate(&tallies, averaging),
            test_instances: tallies.iter().map(|t| t.total).sum(),
        });
    }

    let mut loso_folds = Vec::new();
    for (k, w) in loso_weights.iter().enumerate() {
        let fold = loso_plan
            .loso_fold(k)
            .ok_or_else(|| HarnessError::PlanMismatch(format!("LOSO fold {k} missing")))?;
        let sets = fold
            .iter()
            .map(|(&s, (_, test))| {
                let epochs = subject(data, s)?;
                test.iter()
                    .map(|&i| {
                        epochs
                            .get(i)
                            .ok_or_else(|| HarnessError::PlanMismatch(format!("subject {s} has no instance {i}")))
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<&EegEpoch>>>>()?;
        let tallies = fold_tallies(w, config, sets)?;
        loso_folds.push(FoldAccuracy {
            fold: k,
            accuracy: aggregate(&tallies, averaging),
            test_instances: tallies.iter().map(|t| t.total).sum(),
        });
    }

    let louo_mean = mean(&louo_folds);
    let loso_mean = mean(&loso_folds);
    Ok(DegradationReport {
        averaging,
        louo_folds,
        loso_folds,
        louo_mean,
        loso_mean,
        degradation: loso_mean - louo_mean,
    })
}
