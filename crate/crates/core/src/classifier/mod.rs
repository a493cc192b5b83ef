//! Random-forest screening of embryos with and without a swim bladder.

mod cv;
mod forest;
mod metrics;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, stratified_folds, CvReport};
pub use forest::{predict, train_forest, Criterion, ForestModel, ForestParams, Prediction};
pub use metrics::{metrics, ConfusionMatrix, Metrics};
pub use tree::{DecisionTree, TreeNode};

/// Ground-truth / predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    SwimBladder,
    NoSwimBladder,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::SwimBladder, Label::NoSwimBladder];

    pub fn index(self) -> usize {
        match self {
            Label::SwimBladder => 0,
            Label::NoSwimBladder => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::SwimBladder
        } else {
            Label::NoSwimBladder
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::SwimBladder => "swim_bladder",
            Label::NoSwimBladder => "no_swim_bladder",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swim_bladder" => Ok(Label::SwimBladder),
            "no_swim_bladder" => Ok(Label::NoSwimBladder),
            other => Err(Error::Format(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
}

/// Labelled feature vectors of a common dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.features.len();
            if let Some(bad) = samples.iter().find(|s| s.features.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: (d, 1),
                    found: (bad.features.len(), 1),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}
