//! Evaluation reports: held-out metrics, cross-validation, ablation
//! importance and per-window latency.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    cross_validate, evaluate, train, ClassifierConfig, ClassifierError, ClassifierModel, Dataset, FoldResult,
};
use crate::features::{WindowSummary, FEATURE_CHANNELS};
use crate::filter::{FilterError, Pipeline};
use crate::signal::StateLabel;

/// One frame at the gaze sampling rate.
pub const FRAME_BUDGET_US: f64 = 1e6 / 90.0;
/// One frame at the expression sampling rate.
pub const EXPRESSION_BUDGET_US: f64 = 1e6 / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Accuracy lost, in percentage points, when the feature is pinned to its
    /// training mean.
    pub delta_points: f64,
}

/// Accuracy drop for each input column replaced by the model's training mean,
/// most important first.
pub fn ablation_importance(
    model: &ClassifierModel,
    data: &Dataset,
    names: &[String],
) -> Result<Vec<FeatureImportance>, ClassifierError> {
    let base = evaluate(model, data)?.accuracy();
    let mut out = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mut ablated = data.clone();
        for row in &mut ablated.features {
            row[j] = model.norm.mean[j];
        }
        let acc = evaluate(model, &ablated)?.accuracy();
        out.push(FeatureImportance { feature: name.clone(), delta_points: 100.0 * (base - acc) });
    }
    out.sort_by(|a, b| b.delta_points.total_cmp(&a.delta_points));
    Ok(out)
}

/// Importance, in percentage points, of a column of uniform noise appended to
/// both sets. A sound ablation scores it near zero.
pub fn noise_control_importance(
    config: &ClassifierConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seed: u64,
) -> Result<f64, ClassifierError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut with_noise = |d: &Dataset| {
        let mut d = d.clone();
        for row in &mut d.features {
            row.push(rng.random_range(0.0..1.0));
        }
        d
    };
    let (tr, te) = (with_noise(train_set), with_noise(test_set));
    let config = ClassifierConfig { input_dim: config.input_dim + 1, ..config.clone() };
    let model = train(&config, &tr)?.model;
    let names: Vec<String> = (0..config.input_dim).map(|i| i.to_string()).collect();
    let noise = config.input_dim - 1;
    let imp = ablation_importance(&model, &te, &names)?;
    Ok(imp.iter().find(|f| f.feature == names[noise]).expect("every column is ranked").delta_points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation of fold accuracies.
    pub std_accuracy: f64,
}

impl CvSummary {
    pub fn new(folds: Vec<FoldResult>) -> CvSummary {
        let n = folds.len() as f64;
        let mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
        let var = if folds.len() > 1 {
            folds.iter().map(|f| (f.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        CvSummary { folds, mean_accuracy: mean, std_accuracy: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<StateLabel>,
    pub samples: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Row-normalized confusion percentages, `[truth][predicted]`.
    pub confusion_pct: Vec<Vec<f64>>,
    pub cross_validation: Option<CvSummary>,
    pub importance: Vec<FeatureImportance>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency: Option<LatencyStats>,
}

/// Scores `model` on `test`; when `cv` is given, also cross-validates the
/// model's own recipe on `(corpus, folds, seed)`.
pub fn eval_report(
    model: &ClassifierModel,
    test: &Dataset,
    cv: Option<(&Dataset, usize, u64)>,
) -> Result<EvalReport, ClassifierError> {
    let cm = evaluate(model, test)?;
    let names: Vec<String> = FEATURE_CHANNELS.iter().map(|s| s.to_string()).collect();
    let importance = ablation_importance(model, test, &names)?;
    let cross_validation = match cv {
        Some((corpus, k, seed)) => Some(CvSummary::new(cross_validate(&model.config, corpus, k, seed)?)),
        None => None,
    };
    Ok(EvalReport {
        labels: model.labels().to_vec(),
        samples: test.len(),
        accuracy: cm.accuracy(),
        macro_f1: cm.macro_f1(),
        confusion_pct: cm.row_percentages(),
        cross_validation,
        importance,
        latency: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub windows: usize,
    pub mean_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
    pub throughput_per_s: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over per-window samples in microseconds.
    pub fn from_samples(samples_us: &[f64], total_s: f64) -> LatencyStats {
        let n = samples_us.len();
        let mut sorted = samples_us.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            windows: n,
            mean_us: sorted.iter().sum::<f64>() / n as f64,
            p99_us: rank(0.99),
            max_us: sorted[n - 1],
            throughput_per_s: n as f64 / total_s,
        }
    }

    pub fn within_frame_budget(&self) -> bool {
        self.p99_us < FRAME_BUDGET_US
    }

    pub fn within_expression_budget(&self) -> bool {
        self.p99_us < EXPRESSION_BUDGET_US
    }
}

/// Times classify plus filter for `n_windows` windows, cycling through
/// `windows`. Nothing touches the filesystem inside the timed region.
pub fn bench_pipeline(
    pipeline: &Pipeline,
    windows: &[(String, WindowSummary)],
    n_windows: usize,
) -> Result<LatencyStats, FilterError> {
    assert!(!windows.is_empty() && n_windows > 0, "nothing to benchmark");
    let mut samples = Vec::with_capacity(n_windows);
    let mut exported = 0usize;
    let start = Instant::now();
    for (session_id, summary) in windows.iter().cycle().take(n_windows) {
        let t = Instant::now();
        let out = pipeline.process(summary, session_id)?;
        samples.push(t.elapsed().as_secs_f64() * 1e6);
        exported += out.record().is_some() as usize;
    }
    let total = start.elapsed().as_secs_f64();
    std::hint::black_box(exported);
    Ok(LatencyStats::from_samples(&samples, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_points() -> Dataset {
        let labels = StateLabel::default_set();
        let mut features = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..4 {
            for (i, l) in labels.iter().enumerate() {
                let mut row = vec![0.0; 14];
                row[i] = 1.0;
                features.push(row);
                ys.push(l.clone());
            }
        }
        Dataset::new(features, ys)
    }

    #[test]
    fn memorized_points_give_identity() {
        let data = one_hot_points();
        let config = ClassifierConfig { epochs: 300, batch_size: 4, learning_rate: 0.01, ..ClassifierConfig::default() };
        let model = train(&config, &data).unwrap().model;
        let r = eval_report(&model, &data, None).unwrap();
        for (i, row) in r.confusion_pct.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 100.0 } else { 0.0 });
            }
        }
        assert_eq!(r.importance.len(), 14);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn nearest_rank_percentile() {
        let samples: Vec<f64> = (1..=200).map(f64::from).collect();
        let s = LatencyStats::from_samples(&samples, 2.0);
        assert_eq!(s.p99_us, 198.0);
        assert_eq!(s.max_us, 200.0);
        assert_eq!(s.mean_us, 100.5);
        assert_eq!(s.windows, 200);
        assert_eq!(s.throughput_per_s, 100.0);
        assert_eq!(LatencyStats::from_samples(&[7.0], 1.0).p99_us, 7.0);
    }

    #[test]
    fn sample_std_over_folds() {
        let fold = |accuracy| FoldResult { fold: 0, train_size: 1, test_size: 1, accuracy, macro_f1: accuracy };
        let s = CvSummary::new(vec![fold(0.9), fold(1.0)]);
        assert!((s.mean_accuracy - 0.95).abs() < 1e-12);
        assert!((s.std_accuracy - 0.05f64.hypot(0.05)).abs() < 1e-12);
    }

    #[test]
    fn noise_column_unimportant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = StateLabel::default_set();
        let mut features = Vec::new();
        let mut ys = Vec::new();
        for i in 0..200 {
            let c = i % 4;
            let mut row: Vec<f64> = (0..4).map(|j| if j == c { 1.0 } else { 0.0 } + rng.random_range(-0.2..0.2)).collect();
            row.push(rng.random_range(-1.0..1.0));
            features.push(row);
            ys.push(labels[c].clone());
        }
        let data = Dataset::new(features, ys);
        let config = ClassifierConfig { input_dim: 5, epochs: 60, ..ClassifierConfig::default() };
        let model = train(&config, &data).unwrap().model;
        let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
        let imp = ablation_importance(&model, &data, &names).unwrap();
        let noise = imp.iter().find(|f| f.feature == "f4").unwrap();
        assert!(noise.delta_points.abs() < 1.0, "{noise:?}");
        assert!(imp[0].delta_points > 10.0);
    }
}
