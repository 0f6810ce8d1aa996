use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Per-feature z-score statistics, fitted on training rows only. Standard
/// deviations use the population convention (divide by `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero-variance features; they normalize to 0.
    pub fn is_degenerate(&self, feature: usize) -> bool {
        self.std[feature] == 0.0
    }

    pub fn degenerate_features(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.is_degenerate(j)).collect()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub(crate) fn round_to_f32(&mut self) {
        for v in self.mean.iter_mut().chain(self.std.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

pub fn fit_norm<R: AsRef<[f64]>>(rows: &[R]) -> Result<NormStats, ClassifierError> {
    if rows.len() < 2 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let dim = rows[0].as_ref().len();
    let n = rows.len() as f64;
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    for j in 0..dim {
        // shifted by the first sample so constant columns get exactly zero spread
        let origin = rows[0].as_ref()[j];
        let m = origin + rows.iter().map(|r| r.as_ref()[j] - origin).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.as_ref()[j] - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(NormStats { mean, std })
}
