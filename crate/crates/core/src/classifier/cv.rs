use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{predict, train_forest, ForestParams};
use super::metrics::{metrics, ConfusionMatrix, Metrics};
use super::{Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// Held-out sample ids per fold, in dataset order.
    pub fold_members: Vec<Vec<String>>,
    pub folds: Vec<ConfusionMatrix>,
    pub pooled: ConfusionMatrix,
    /// Pooled matrix as `[[tp_sb, fn_sb], [fp_sb, tn_sb]]`: rows ground
    /// truth, columns prediction, swim bladder first.
    pub pooled_table: [[u64; 2]; 2],
    pub metrics: Metrics,
}

/// Stratified fold index per sample: each class is shuffled with `seed` and
/// dealt round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs k ≥ 2".into()));
    }
    let counts = data.class_counts();
    for label in Label::ALL {
        if counts[label.index()] < k {
            return Err(Error::TooFewSamples {
                class: label.as_str(),
                count: counts[label.index()],
                needed: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; data.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.samples[i].label == label).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

/// Stratified k-fold evaluation with pooled confusion and metrics. Fold `f`
/// trains with forest seed `params.seed + f`.
pub fn cross_validate(data: &Dataset, k: usize, params: &ForestParams, seed: u64) -> Result<CvReport> {
    let fold = stratified_folds(data, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    let mut fold_members = Vec::with_capacity(k);
    for f in 0..k {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
        let fold_params = ForestParams {
            seed: params.seed.wrapping_add(f as u64),
            ..params.clone()
        };
        let model = train_forest(&data.subset(&train_idx), &fold_params)?;
        let mut cm = ConfusionMatrix::default();
        for &i in &test_idx {
            let s = &data.samples[i];
            cm.record(s.label, predict(&model, &s.features)?.label);
        }
        folds.push(cm);
        fold_members.push(test_idx.iter().map(|&i| data.samples[i].id.clone()).collect());
    }
    let pooled = folds.iter().copied().fold(ConfusionMatrix::default(), |a, b| a + b);
    Ok(CvReport {
        k,
        seed,
        fold_members,
        folds,
        pooled,
        pooled_table: pooled.table(),
        metrics: metrics(&pooled)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Sample;

    fn noisy(n_a: usize, n_b: usize) -> Dataset {
        let mut s = Vec::new();
        for i in 0..n_a {
            s.push(Sample {
                id: format!("a{i}"),
                features: vec![i as f64 % 7.0, -(i as f64)],
                label: Label::SwimBladder,
            });
        }
        for i in 0..n_b {
            s.push(Sample {
                id: format!("b{i}"),
                features: vec![i as f64 % 5.0 + 3.0, i as f64 + 0.5],
                label: Label::NoSwimBladder,
            });
        }
        Dataset::new(s).unwrap()
    }

    #[test]
    fn fold_sizes_balanced_per_class() {
        let data = noisy(202, 59);
        let fold = stratified_folds(&data, 5, 1).unwrap();
        for label in Label::ALL {
            let mut sizes = [0usize; 5];
            for (i, s) in data.samples.iter().enumerate() {
                if s.label == label {
                    sizes[fold[i]] += 1;
                }
            }
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{label}: {sizes:?}");
        }
    }

    #[test]
    fn too_few_samples() {
        let data = noisy(10, 4);
        assert!(matches!(
            cross_validate(&data, 5, &ForestParams::default(), 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn leave_one_out_on_separable_data() {
        let data = noisy(12, 12);
        let params = ForestParams {
            n_estimators: 15,
            ..ForestParams::default()
        };
        let r = cross_validate(&data, 12, &params, 4).unwrap();
        assert_eq!(r.metrics.accuracy, 1.0);
        assert_eq!(r.pooled.total(), 24);
    }

    #[test]
    fn deterministic_and_pooled() {
        let data = noisy(40, 15);
        let params = ForestParams {
            n_estimators: 10,
            ..ForestParams::default()
        };
        let a = cross_validate(&data, 5, &params, 8).unwrap();
        let b = cross_validate(&data, 5, &params, 8).unwrap();
        assert_eq!(a, b);
        let sum = a.folds.iter().copied().fold(ConfusionMatrix::default(), |x, y| x + y);
        assert_eq!(sum, a.pooled);
        assert_eq!((a.pooled.with_bladder(), a.pooled.without_bladder()), (40, 15));
    }
}
