use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, GrowParams};
use super::{Dataset, Label};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    /// Features drawn per split; `None` means `⌈√d⌉`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    /// 50 trees, depth ≤ 30, split needs ≥ 5 samples, leaves hold ≥ 2,
    /// entropy criterion.
    fn default() -> Self {
        Self {
            n_estimators: 50,
            max_depth: 30,
            min_samples_split: 5,
            min_samples_leaf: 2,
            criterion: Criterion::Entropy,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::InvalidConfig("n_estimators must be ≥ 1".into()));
        }
        if self.min_samples_leaf == 0 || self.min_samples_split <= self.min_samples_leaf {
            return Err(Error::InvalidConfig(
                "need min_samples_split > min_samples_leaf ≥ 1".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidConfig("features_per_split must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn features_for(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    pub format_version: u32,
}

impl ForestModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ForestModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format {}", m.format_version)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Share of trees voting for `label`.
    pub votes_fraction: f64,
}

/// Trains `n_estimators` trees, each on a bootstrap resample of the data.
pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    let counts = data.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass);
    }
    let n = data.len();
    let d = data.n_features();
    let grow = GrowParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        features_per_split: params.features_for(d),
    };
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_seeds: Vec<u64> = (0..params.n_estimators).map(|_| master.random()).collect();
    let trees = tree_seeds
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree::grow(data, rows, &grow, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        params: params.clone(),
        n_features: d,
        trees,
        format_version: MODEL_FORMAT_VERSION,
    })
}

/// Majority vote; an even split goes to `NoSwimBladder`.
pub fn predict(model: &ForestModel, features: &[f64]) -> Result<Prediction> {
    if features.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: (model.n_features, 1),
            found: (features.len(), 1),
        });
    }
    let votes = model
        .trees
        .iter()
        .fold([0usize; 2], |mut acc, t| {
            acc[t.predict(features).index()] += 1;
            acc
        });
    Ok(vote(votes))
}

pub(crate) fn vote(votes: [usize; 2]) -> Prediction {
    let total = (votes[0] + votes[1]).max(1) as f64;
    let label = if votes[0] > votes[1] {
        Label::SwimBladder
    } else {
        Label::NoSwimBladder
    };
    Prediction {
        label,
        votes_fraction: votes[label.index()] as f64 / total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Sample;

    fn separable(n_per_class: usize) -> Dataset {
        let mut samples = Vec::new();
        for i in 0..n_per_class {
            let x = 0.1 + i as f64 * 0.37;
            samples.push(Sample {
                id: format!("a{i}"),
                features: vec![-x],
                label: Label::SwimBladder,
            });
            samples.push(Sample {
                id: format!("b{i}"),
                features: vec![x],
                label: Label::NoSwimBladder,
            });
        }
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn separable_data_fits_perfectly() {
        let data = separable(100);
        let model = train_forest(&data, &ForestParams::default()).unwrap();
        assert_eq!(model.trees.len(), 50);
        for s in &data.samples {
            let p = predict(&model, &s.features).unwrap();
            assert_eq!(p.label, s.label);
            assert!(p.votes_fraction > 0.5);
        }
    }

    #[test]
    fn single_class_rejected() {
        let mut data = separable(10);
        data.samples.retain(|s| s.label == Label::SwimBladder);
        assert!(matches!(train_forest(&data, &ForestParams::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn same_seed_same_model() {
        let data = separable(40);
        let p = ForestParams {
            seed: 9,
            ..ForestParams::default()
        };
        let a = train_forest(&data, &p).unwrap().to_json().unwrap();
        let b = train_forest(&data, &p).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let back = ForestModel::from_json(&a).unwrap();
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn tie_goes_to_abnormal() {
        let p = vote([25, 25]);
        assert_eq!(p.label, Label::NoSwimBladder);
        assert_eq!(p.votes_fraction, 0.5);
        assert_eq!(vote([50, 0]).votes_fraction, 1.0);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let model = train_forest(&separable(10), &ForestParams::default()).unwrap();
        assert!(matches!(predict(&model, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = ForestParams {
            min_samples_split: 2,
            min_samples_leaf: 2,
            ..ForestParams::default()
        };
        assert!(train_forest(&separable(5), &bad).is_err());
        assert_eq!(ForestParams::default().features_for(24), 5);
    }
}
