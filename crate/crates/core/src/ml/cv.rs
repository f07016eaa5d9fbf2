//! Seeded k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::average;
use super::metrics::{eval_metrics, EvalMetrics};
use super::{Dataset, RegressorSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub k: usize,
    pub mean: EvalMetrics,
    pub folds: Vec<EvalMetrics>,
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at
/// most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InsufficientData { what: "k-fold cross-validation", needed: k, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

struct Split {
    train: Dataset,
    test: Dataset,
}

fn splits(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Split>> {
    let folds = kfold_indices(data.len(), k, seed)?;
    Ok((0..k)
        .map(|f| {
            let train: Vec<usize> =
                folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            Split { train: data.subset(&train), test: data.subset(&folds[f]) }
        })
        .collect())
}

/// Run `job` once per fold. Folds are independent and run on separate
/// threads where the platform has them.
fn per_fold<T: Send>(splits: &[Split], job: impl Fn(&Split) -> Result<T> + Sync) -> Result<Vec<T>> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        std::thread::scope(|s| {
            let handles: Vec<_> = splits.iter().map(|sp| s.spawn(|| job(sp))).collect();
            handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
        })
    }
    #[cfg(target_arch = "wasm32")]
    {
        splits.iter().map(job).collect()
    }
}

pub fn kfold_cv(spec: &RegressorSpec, data: &Dataset, k: usize, seed: u64) -> Result<CvReport> {
    let sp = splits(data, k, seed)?;
    let folds = per_fold(&sp, |s| {
        let model = spec.fit(&s.train)?;
        eval_metrics(s.test.targets(), &model.predict_all(&s.test)?)
    })?;
    Ok(CvReport { model: spec.name().to_string(), k, mean: EvalMetrics::mean_of(&folds).expect("k >= 2"), folds })
}

/// Cross-validate several specs on shared folds. An ensemble whose forest
/// and boosting settings also appear in `specs` reuses their fold
/// predictions instead of refitting.
pub fn compare_models(specs: &[RegressorSpec], data: &Dataset, k: usize, seed: u64) -> Result<Vec<CvReport>> {
    let sp = splits(data, k, seed)?;
    let per_fold_metrics = per_fold(&sp, |s| {
        let mut preds: Vec<Option<Vec<f64>>> = vec![None; specs.len()];
        for (i, spec) in specs.iter().enumerate() {
            if !matches!(spec, RegressorSpec::Ensemble { .. }) {
                preds[i] = Some(spec.fit(&s.train)?.predict_all(&s.test)?);
            }
        }
        for (i, spec) in specs.iter().enumerate() {
            if let RegressorSpec::Ensemble { rf, gb } = spec {
                let find =
                    |target: &RegressorSpec| specs.iter().position(|x| x == target).and_then(|j| preds[j].clone());
                let p_rf = match find(&RegressorSpec::RandomForest(*rf)) {
                    Some(p) => p,
                    None => RegressorSpec::RandomForest(*rf).fit(&s.train)?.predict_all(&s.test)?,
                };
                let p_gb = match find(&RegressorSpec::GradientBoosting(*gb)) {
                    Some(p) => p,
                    None => RegressorSpec::GradientBoosting(*gb).fit(&s.train)?.predict_all(&s.test)?,
                };
                preds[i] = Some(p_rf.iter().zip(&p_gb).map(|(a, b)| average(*a, *b)).collect());
            }
        }
        preds
            .into_iter()
            .map(|p| eval_metrics(s.test.targets(), &p.expect("every spec predicted")))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let folds: Vec<EvalMetrics> = per_fold_metrics.iter().map(|f| f[i]).collect();
            CvReport { model: spec.name().to_string(), k, mean: EvalMetrics::mean_of(&folds).expect("k >= 2"), folds }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{BoostingParams, ForestParams};

    #[test]
    fn reference_campaign_folds_of_64() {
        let folds = kfold_indices(320, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 64));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..320).collect::<Vec<_>>());
    }

    #[test]
    fn uneven_folds_differ_by_at_most_one() {
        let folds = kfold_indices(23, 5, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn bad_k() {
        assert!(kfold_indices(10, 1, 0).is_err());
        assert!(kfold_indices(3, 5, 0).is_err());
    }

    #[test]
    fn linear_truth_is_predicted_perfectly() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 2) as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[1] + 0.5 * r[2]).collect();
        let data = Dataset::from_rows(&rows, &y).unwrap();
        let r = kfold_cv(&RegressorSpec::Linear, &data, 5, 1).unwrap();
        assert!((r.mean.r2 - 1.0).abs() < 1e-12);
        assert!(r.mean.rmse < 1e-9 && r.mean.mae < 1e-9);
    }

    #[test]
    fn same_seed_same_result_and_ensemble_reuse_matches_refit() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 7 % 13) as f64, (i % 2) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sqrt() + 3.0 * r[1]).collect();
        let data = Dataset::from_rows(&rows, &y).unwrap();
        let rf = ForestParams { n_trees: 10, seed: 4, ..Default::default() };
        let gb = BoostingParams { n_rounds: 20, seed: 4, ..Default::default() };
        let ens = RegressorSpec::Ensemble { rf, gb };
        let specs = vec![RegressorSpec::RandomForest(rf), RegressorSpec::GradientBoosting(gb), ens.clone()];
        let a = compare_models(&specs, &data, 5, 9).unwrap();
        let b = compare_models(&specs, &data, 5, 9).unwrap();
        assert_eq!(a, b);
        let alone = kfold_cv(&ens, &data, 5, 9).unwrap();
        assert_eq!(alone.mean, a[2].mean);
    }
}
