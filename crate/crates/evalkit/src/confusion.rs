//! K x K confusion counts (rows = true class, columns = predicted).

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(EvalError::LengthMismatch {
                lhs: classes * classes,
                rhs: counts.len(),
            });
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                lhs: predictions.len(),
                rhs: labels.len(),
            });
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&pred, &label) in predictions.iter().zip(labels.iter()) {
            if pred >= classes {
                return Err(EvalError::LabelOutOfRange { label: pred, classes });
            }
            if label >= classes {
                return Err(EvalError::LabelOutOfRange { label, classes });
            }
            cm.counts[label * classes + pred] += 1;
        }
        Ok(cm)
    }

    #[inline]
    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    /// One-vs-rest counts `(tp, fp, fn, tn)` for a class.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(class, class);
        let fp: u64 = (0..self.classes)
            .filter(|&t| t != class)
            .map(|t| self.get(t, class))
            .sum();
        let fn_: u64 = (0..self.classes)
            .filter(|&p| p != class)
            .map(|p| self.get(class, p))
            .sum();
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }

    /// Relabel classes by a permutation (entry `i` maps old class `i` to a
    /// new id). Macro metrics are invariant under this operation.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.classes {
            return Err(EvalError::LengthMismatch {
                lhs: self.classes,
                rhs: perm.len(),
            });
        }
        let mut out = ConfusionMatrix::new(self.classes);
        for t in 0..self.classes {
            for p in 0..self.classes {
                out.counts[perm[t] * self.classes + perm[p]] = self.get(t, p);
            }
        }
        Ok(out)
    }
}
