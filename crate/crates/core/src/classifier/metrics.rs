use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};

/// Rows are ground truth, columns predictions, in the order
/// (swim bladder, no swim bladder).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// truth swim bladder, predicted swim bladder
    pub tp_sb: u64,
    /// truth swim bladder, predicted none
    pub fn_sb: u64,
    /// truth none, predicted swim bladder
    pub fp_sb: u64,
    /// truth none, predicted none
    pub tn_sb: u64,
}

impl ConfusionMatrix {
    pub const fn new(tp_sb: u64, fn_sb: u64, fp_sb: u64, tn_sb: u64) -> Self {
        Self {
            tp_sb,
            fn_sb,
            fp_sb,
            tn_sb,
        }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::SwimBladder, Label::SwimBladder) => self.tp_sb += 1,
            (Label::SwimBladder, Label::NoSwimBladder) => self.fn_sb += 1,
            (Label::NoSwimBladder, Label::SwimBladder) => self.fp_sb += 1,
            (Label::NoSwimBladder, Label::NoSwimBladder) => self.tn_sb += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp_sb + self.fn_sb + self.fp_sb + self.tn_sb
    }

    /// Ground-truth embryos with a swim bladder.
    pub fn with_bladder(&self) -> u64 {
        self.tp_sb + self.fn_sb
    }

    /// Ground-truth embryos without a swim bladder (the screened-for class).
    pub fn without_bladder(&self) -> u64 {
        self.fp_sb + self.tn_sb
    }

    /// `[[tp_sb, fn_sb], [fp_sb, tn_sb]]`.
    pub fn table(&self) -> [[u64; 2]; 2] {
        [[self.tp_sb, self.fn_sb], [self.fp_sb, self.tn_sb]]
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(
            self.tp_sb + o.tp_sb,
            self.fn_sb + o.fn_sb,
            self.fp_sb + o.fp_sb,
            self.tn_sb + o.tn_sb,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Detection rate of embryos lacking a swim bladder.
    pub sensitivity: f64,
    /// Pass rate of embryos with a swim bladder.
    pub specificity: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Screening metrics with "no swim bladder" as the positive class.
/// A rate whose class is absent from the ground truth is reported as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(Metrics {
        accuracy: ratio(cm.tp_sb + cm.tn_sb, cm.total()),
        sensitivity: ratio(cm.tn_sb, cm.without_bladder()),
        specificity: ratio(cm.tp_sb, cm.with_bladder()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_table() {
        let cm = ConfusionMatrix::new(195, 7, 6, 53);
        let m = metrics(&cm).unwrap();
        assert!((m.accuracy - 248.0 / 261.0).abs() < 1e-12);
        assert!((m.sensitivity - 53.0 / 59.0).abs() < 1e-12);
        assert!((m.specificity - 195.0 / 202.0).abs() < 1e-12);
        assert_eq!((cm.with_bladder(), cm.without_bladder()), (202, 59));
    }

    #[test]
    fn degenerate_matrices() {
        assert!(matches!(metrics(&ConfusionMatrix::default()), Err(Error::EmptyMatrix)));
        let perfect = metrics(&ConfusionMatrix::new(10, 0, 0, 4)).unwrap();
        assert_eq!((perfect.accuracy, perfect.sensitivity, perfect.specificity), (1.0, 1.0, 1.0));
        let all_sb = metrics(&ConfusionMatrix::new(202, 0, 59, 0)).unwrap();
        assert_eq!((all_sb.sensitivity, all_sb.specificity), (0.0, 1.0));
    }

    proptest! {
        #[test]
        fn accuracy_is_weighted_rates(a in 1u64..500, b in 0u64..500, c in 0u64..500, d in 1u64..500) {
            let cm = ConfusionMatrix::new(a, b, c, d);
            let m = metrics(&cm).unwrap();
            let p = cm.without_bladder() as f64;
            let n = cm.with_bladder() as f64;
            prop_assert!((m.accuracy - (m.sensitivity * p + m.specificity * n) / (p + n)).abs() < 1e-12);
        }
    }
}
