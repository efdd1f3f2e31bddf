//! Confusion matrices and precision / recall / F-measure / accuracy.
//!
//! Per-class values are one-vs-rest: for class `c`, TP is the diagonal entry,
//! FP the rest of column `c`, FN the rest of row `c`, TN everything else.
//! Aggregates are unweighted macro means; accuracy is trace over total.

mod report;

pub use report::{confusion_csv, metrics_csv, round3, METRICS_HEADER};

use crate::error::{Error, Result};

/// Counts of true class (rows) against predicted class (columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    classes: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, classes: Vec<String>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|row| row.len() != k) {
            return Err(Error::Input(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        if classes.len() != k {
            return Err(Error::Input(format!(
                "{} class names for a {k}x{k} matrix",
                classes.len()
            )));
        }
        Ok(Self {
            k,
            counts: counts.into_iter().flatten().collect(),
            classes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn with_class_names(mut self, classes: Vec<String>) -> Result<Self> {
        if classes.len() != self.k {
            return Err(Error::Input(format!(
                "{} class names for {} classes",
                classes.len(),
                self.k
            )));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.k..(truth + 1) * self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    /// (TP, FP, FN, TN) of class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(c, c);
        let fp = (0..self.k).map(|r| self.get(r, c)).sum::<u64>() - tp;
        let fn_ = self.row(c).iter().sum::<u64>() - tp;
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Input(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Input("no labels to count".into()));
    }
    let mut counts = vec![0u64; k * k];
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if t >= k || p >= k {
            return Err(Error::Input(format!(
                "label pair ({t}, {p}) at position {i} outside 0..{k}"
            )));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix {
        k,
        counts,
        classes: (0..k).map(|c| format!("class_{c}")).collect(),
    })
}

/// `TP / (TP + FP)`, 0 when nothing was predicted as the class.
pub fn precision(tp: u64, fp: u64) -> f64 {
    ratio(tp, tp + fp)
}

/// `TP / (TP + FN)`, 0 when the class has no samples.
pub fn recall(tp: u64, fn_: u64) -> f64 {
    ratio(tp, tp + fn_)
}

/// Harmonic mean `2PR / (P + R)`, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// One-vs-rest `(TP + TN) / total`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// trace / total.
    pub accuracy: f64,
    pub total: u64,
}

impl MetricsReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Input("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.k())
        .map(|c| {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(c);
            let p = precision(tp, fp);
            let r = recall(tp, fn_);
            ClassMetrics {
                class: cm.classes()[c].clone(),
                tp,
                fp,
                fn_,
                tn,
                precision: p,
                recall: r,
                f_measure: f_measure(p, r),
                accuracy: ratio(tp + tn, total),
            }
        })
        .collect();
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    Ok(MetricsReport {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f_measure: mean(|c| c.f_measure),
        accuracy: ratio(cm.trace(), total),
        total,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn diagonal_from_identical_labels() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(t, p), u64::from(t == p));
            }
        }
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(
            (r.precision, r.recall, r.f_measure, r.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn all_wrong_binary() {
        let cm = confusion_matrix(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(cm.row(0), &[0, 2]);
        assert_eq!(cm.row(1), &[0, 0]);
    }

    #[test]
    fn errors() {
        assert!(confusion_matrix(&[0, 1], &[0], 2).is_err());
        assert!(confusion_matrix(&[0, 2], &[0, 1], 2).is_err());
        assert!(confusion_matrix(&[], &[], 2).is_err());
        let empty = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![0, 0]], names(2)).unwrap();
        assert!(classification_metrics(&empty).is_err());
    }

    #[test]
    fn hand_counted_binary() {
        let cm = ConfusionMatrix::from_counts(vec![vec![8, 2], vec![1, 9]], names(2)).unwrap();
        let r = classification_metrics(&cm).unwrap();
        let pos = &r.per_class[0];
        assert_eq!((pos.tp, pos.fp, pos.fn_, pos.tn), (8, 1, 2, 9));
        assert!((pos.precision - 8.0 / 9.0).abs() < 1e-15);
        assert!((pos.recall - 0.8).abs() < 1e-15);
        let f = 2.0 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8);
        assert!((pos.f_measure - f).abs() < 1e-15);
        assert_eq!(round3(pos.f_measure), 0.842);
        assert_eq!(r.accuracy, 0.85);
        assert_eq!(pos.accuracy, 0.85);
    }

    #[test]
    fn f_measure_of_088_and_090() {
        let f = f_measure(0.88, 0.90);
        assert!((f - 0.88988764).abs() < 1e-8);
        assert_eq!(format!("{:.3}", round3(f)), "0.890");
    }

    #[test]
    fn zero_denominator_is_zero() {
        // class 1 is never predicted and class 2 never occurs
        let cm = confusion_matrix(&[0, 1, 0], &[0, 0, 2], 3).unwrap();
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert!(r.per_class.iter().all(|c| c.f_measure.is_finite()));
    }

    #[test]
    fn positive_class_recall_from_counts() {
        // 56 positives, 51 recovered
        let mut truth = vec![0; 56];
        truth.extend(vec![1; 100]);
        let mut pred = vec![0; 51];
        pred.extend(vec![1; 5]);
        pred.extend(vec![1; 100]);
        let cm = confusion_matrix(&truth, &pred, 2).unwrap();
        let r = classification_metrics(&cm).unwrap();
        assert!((r.per_class[0].recall - 51.0 / 56.0).abs() < 1e-15);
        assert_eq!(round3(r.per_class[0].recall), 0.911);
    }

    proptest! {
        #[test]
        fn invariants(
            k in 2usize..5,
            pairs in proptest::collection::vec((0usize..64, 0usize..64), 1..300),
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
            let cm = confusion_matrix(&truth, &pred, k).unwrap();
            prop_assert_eq!(cm.total(), truth.len() as u64);
            let r = classification_metrics(&cm).unwrap();
            prop_assert_eq!(r.accuracy, cm.trace() as f64 / cm.total() as f64);
            for c in &r.per_class {
                for v in [c.precision, c.recall, c.f_measure, c.accuracy] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                let (lo, hi) = (c.precision.min(c.recall), c.precision.max(c.recall));
                if lo > 0.0 {
                    prop_assert!(c.f_measure >= lo - 1e-12 && c.f_measure <= hi + 1e-12);
                }
                if c.precision == c.recall {
                    prop_assert!((c.f_measure - c.precision).abs() < 1e-12);
                }
            }

            // relabel classes by a rotation; aggregates are permutation invariant
            let perm = |c: usize| (c + 1) % k;
            let t2: Vec<usize> = truth.iter().map(|&c| perm(c)).collect();
            let p2: Vec<usize> = pred.iter().map(|&c| perm(c)).collect();
            let r2 = classification_metrics(&confusion_matrix(&t2, &p2, k).unwrap()).unwrap();
            prop_assert_eq!(r2.accuracy, r.accuracy);
            prop_assert!((r2.precision - r.precision).abs() < 1e-12);
            prop_assert!((r2.recall - r.recall).abs() < 1e-12);
            prop_assert!((r2.f_measure - r.f_measure).abs() < 1e-12);
            for c in 0..k {
                prop_assert_eq!(r2.per_class[perm(c)].precision, r.per_class[c].precision);
                prop_assert_eq!(r2.per_class[perm(c)].recall, r.per_class[c].recall);
            }
        }
    }
}
