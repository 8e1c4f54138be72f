use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with respect to one class taken as "positive".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn tally(predictions: &[u8], labels: &[u8], positive: u8) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == positive, y == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Accuracy, positive-class F1 and macro-averaged F1 over both classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub n: usize,
}

pub fn metrics(predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no examples to score".into()));
    }
    let pos = ConfusionCounts::tally(predictions, labels, 1);
    let neg = ConfusionCounts::tally(predictions, labels, 0);
    Ok(Metrics {
        accuracy: ratio(pos.tp + pos.tn, pos.total()),
        f1: pos.f1(),
        macro_f1: (pos.f1() + neg.f1()) / 2.0,
        n: labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [1, 0, 1, 1, 0];
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.f1, m.macro_f1, m.n), (1.0, 1.0, 1.0, 5));
    }

    #[test]
    fn half_right() {
        let m = metrics(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        let c = ConfusionCounts::tally(&[1, 1, 0, 0], &[1, 0, 1, 0], 1);
        assert_eq!((c.precision(), c.recall()), (0.5, 0.5));
        assert_eq!((m.accuracy, m.f1, m.macro_f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_cases() {
        let m = metrics(&[1, 1, 1], &[0, 0, 0]).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 0.0);
        assert!(metrics(&[1], &[1, 0]).is_err());
        assert!(matches!(metrics(&[], &[]), Err(Error::Empty(_))));
        // Constant classifier on a balanced split.
        let m = metrics(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert!(m.macro_f1 < 0.5);
    }
}
