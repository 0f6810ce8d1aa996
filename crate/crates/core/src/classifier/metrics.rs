use serde::{Deserialize, Serialize};

use crate::signal::StateLabel;

/// Confusion counts, `counts[truth][predicted]`. Counts are real-valued so an
/// expected (randomized) predictor can be scored without sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<StateLabel>,
    pub counts: Vec<Vec<f64>>,
    /// Per-truth-class samples that received no prediction at all.
    pub unpredicted: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<StateLabel>) -> ConfusionMatrix {
        let k = labels.len();
        ConfusionMatrix { labels, counts: vec![vec![0.0; k]; k], unpredicted: vec![0.0; k] }
    }

    pub fn from_predictions(labels: Vec<StateLabel>, truth: &[usize], predicted: &[usize]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(labels);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.counts[t][p] += 1.0;
        }
        m
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn row_total(&self, class: usize) -> f64 {
        self.counts[class].iter().sum::<f64>() + self.unpredicted[class]
    }

    pub fn total(&self) -> f64 {
        (0..self.n_classes()).map(|c| self.row_total(c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0.0 {
            return 0.0;
        }
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum::<f64>() / total
    }

    pub fn recall(&self, class: usize) -> f64 {
        let row = self.row_total(class);
        if row == 0.0 {
            0.0
        } else {
            self.counts[class][class] / row
        }
    }

    pub fn precision(&self, class: usize) -> f64 {
        let col: f64 = (0..self.n_classes()).map(|t| self.counts[t][class]).sum();
        if col == 0.0 {
            0.0
        } else {
            self.counts[class][class] / col
        }
    }

    /// Macro-averaged F1 over every label; a class with no predictions
    /// contributes 0.
    pub fn macro_f1(&self) -> f64 {
        let k = self.n_classes();
        if k == 0 {
            return 0.0;
        }
        let f1 = |c: usize| {
            let (p, r) = (self.precision(c), self.recall(c));
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        };
        (0..k).map(f1).sum::<f64>() / k as f64
    }

    /// Rows scaled to percentages of each truth class. Empty rows stay zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        (0..self.n_classes())
            .map(|c| {
                let row = self.row_total(c);
                self.counts[c].iter().map(|&v| if row == 0.0 { 0.0 } else { 100.0 * v / row }).collect()
            })
            .collect()
    }
}
