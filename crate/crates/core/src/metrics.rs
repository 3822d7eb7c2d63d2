//! Confusion matrices, macro-F1 and the matched-pair significance test.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::mwe_tagger::TaggedSentence;

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each non-empty row normalized to sum to 100.
    pub fn percent(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if sum == 0 {
                            0.0
                        } else {
                            100.0 * c as f64 / sum as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        let k = self.n_classes();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let row: u64 = self.counts[c].iter().sum();
                let col: u64 = self.counts.iter().map(|r| r[c]).sum();
                let precision = if col == 0 { 0.0 } else { tp / col as f64 };
                let recall = if row == 0 { 0.0 } else { tp / row as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} gold labels, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if t >= k || p >= k {
            return Err(Error::invalid(format!(
                "example {i}: label out of range (true {t}, predicted {p}, {k} classes)"
            )));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Unweighted mean of per-class F1; a zero denominator makes that term 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let f1 = cm.per_class_f1();
    if f1.is_empty() {
        return 0.0;
    }
    f1.iter().sum::<f64>() / f1.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairResult {
    /// A wrong, B right.
    pub n01: u64,
    /// A right, B wrong.
    pub n10: u64,
    pub p_value: f64,
    pub significant: bool,
}

/// Two-sided exact binomial test on the discordant pairs, p = 1/2.
pub fn exact_binomial_two_sided(n01: u64, n10: u64) -> f64 {
    let n = n01 + n10;
    if n == 0 {
        return 1.0;
    }
    let k = n01.max(n10);
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let tail: f64 = (k..=n)
        .map(|i| (ln_binomial(n, i) - ln_half_n).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

/// Matched-pair comparison of two classifiers on the same examples.
pub fn matched_pair_test(correct_a: &[bool], correct_b: &[bool], alpha: f64) -> Result<MatchedPairResult> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let n01 = correct_a
        .iter()
        .zip(correct_b)
        .filter(|(&a, &b)| !a && b)
        .count() as u64;
    let n10 = correct_a
        .iter()
        .zip(correct_b)
        .filter(|(&a, &b)| a && !b)
        .count() as u64;
    let p_value = exact_binomial_two_sided(n01, n10);
    Ok(MatchedPairResult {
        n01,
        n10,
        p_value,
        significant: p_value < alpha,
    })
}

/// Indices of sentences with at least one selected MWE.
pub fn mwe_subset(tagged: &[TaggedSentence]) -> Vec<usize> {
    tagged
        .iter()
        .enumerate()
        .filter(|(_, t)| t.has_mwe())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion_counts: Vec<Vec<u64>>,
    pub confusion_percent: Vec<Vec<f64>>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub n: u64,
    /// `"full"` or `"mwe_subset"`.
    pub subset_variant: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix, subset_variant: &str) -> Self {
        EvalReport {
            confusion_counts: cm.counts().to_vec(),
            confusion_percent: cm.percent(),
            per_class_f1: cm.per_class_f1(),
            macro_f1: macro_f1(cm),
            n: cm.total(),
            subset_variant: subset_variant.to_string(),
            class_names: Vec::new(),
        }
    }

    pub fn evaluate(y_true: &[usize], y_pred: &[usize], k: usize, subset_variant: &str) -> Result<Self> {
        Ok(Self::from_confusion(
            &confusion_matrix(y_true, y_pred, k)?,
            subset_variant,
        ))
    }

    pub fn with_class_names(mut self, names: &[&str]) -> Self {
        self.class_names = names.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion_matrix(&[0, 1], &[0, 1], 2).unwrap().counts(),
            [vec![1, 0], vec![0, 1]]
        );
        assert_eq!(
            confusion_matrix(&[0, 0, 1], &[1, 0, 1], 2).unwrap().counts(),
            [vec![1, 1], vec![0, 1]]
        );
        assert_eq!(confusion_matrix(&[], &[], 2).unwrap().total(), 0);
        assert!(confusion_matrix(&[0], &[2], 2).is_err());
        assert!(confusion_matrix(&[0], &[], 2).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        let identity = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 4]]).unwrap();
        assert_eq!(macro_f1(&identity), 1.0);
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 1]]).unwrap();
        assert!((macro_f1(&cm) - 2.0 / 3.0).abs() < 1e-12);
        let all_zero = confusion_matrix(&[0, 1], &[0, 0], 2).unwrap();
        assert_eq!(all_zero.per_class_f1()[1], 0.0);
    }

    #[test]
    fn matched_pair_examples() {
        // 2 * sum_{k=15}^{20} C(20, k) / 2^20 = 2 * 21700 / 1048576
        let p = exact_binomial_two_sided(15, 5);
        assert!((p - 43400.0 / 1_048_576.0).abs() < 1e-9, "{p}");
        assert_eq!(exact_binomial_two_sided(0, 0), 1.0);
        assert!((exact_binomial_two_sided(7, 7) - 1.0).abs() < 1e-12);
        let a = [true, false, true];
        let r = matched_pair_test(&a, &a, 0.05).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn percent_rows() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 2], vec![0, 0]]).unwrap();
        let p = cm.percent();
        assert!((p[0].iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(p[1], [0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn macro_f1_relabel_invariant(pairs in proptest::collection::vec((0usize..3, 0usize..3), 0..50)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let perm = [2usize, 0, 1];
            let t2: Vec<usize> = t.iter().map(|&x| perm[x]).collect();
            let p2: Vec<usize> = p.iter().map(|&x| perm[x]).collect();
            let a = macro_f1(&confusion_matrix(&t, &p, 3).unwrap());
            let b = macro_f1(&confusion_matrix(&t2, &p2, 3).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn percent_rows_sum_to_100(counts in proptest::collection::vec(proptest::collection::vec(0u64..1000, 3), 3)) {
            let cm = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            for (row, pct) in counts.iter().zip(cm.percent()) {
                if row.iter().sum::<u64>() > 0 {
                    prop_assert!((pct.iter().sum::<f64>() - 100.0).abs() < 0.1);
                }
            }
        }
    }
}
