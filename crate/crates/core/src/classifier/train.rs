use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::log_softmax_at;
use super::{
    argmax, fit_norm, stratified_folds, ClassifierConfig, ClassifierError, ClassifierModel, ConfusionMatrix, Dataset,
    Dropout, Mlp,
};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ClassifierModel,
    /// Mean cross-entropy over the whole training set at the end of each
    /// epoch, measured without dropout.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        }
    }
}

/// Trains on `corpus` with Adam on mean cross-entropy. Initialization, the
/// per-epoch shuffles and dropout masks all come from one stream seeded by
/// `config.seed`, so equal inputs give bit-identical models. Parameters and
/// normalization statistics are rounded to `f32` so the saved file is exact.
pub fn train(config: &ClassifierConfig, corpus: &Dataset) -> Result<TrainedModel, ClassifierError> {
    config.validate()?;
    if let Some(row) = corpus.features.iter().find(|r| r.len() != config.input_dim) {
        return Err(ClassifierError::ShapeMismatch { expected: config.input_dim, got: row.len() });
    }
    let ys = corpus.label_indices(&config.label_set)?;
    let mut counts = vec![0usize; config.label_set.len()];
    for &y in &ys {
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c < 2) {
        return Err(ClassifierError::DegenerateCorpus(format!(
            "label {} has {} samples, need 2",
            config.label_set[k], counts[k]
        )));
    }

    let mut norm = fit_norm(&corpus.features)?;
    norm.round_to_f32();
    let xs: Vec<Vec<f64>> = corpus.features.iter().map(|r| norm.normalize(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::init(config.input_dim, config.hidden_units, config.label_set.len(), &mut rng);
    let mut adam = Adam::new(net.params().len(), config.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let mut dropout = Dropout { p: config.dropout_p, rng: &mut rng };
            let (loss, grad) = net.loss_and_gradient(&bx, &by, (config.dropout_p > 0.0).then_some(&mut dropout));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            adam.step(net.params_mut(), &grad);
        }
        let loss = mean_loss(&net, &xs, &ys);
        if !loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        loss_trace.push(loss);
    }

    net.round_to_f32();
    let model = ClassifierModel::new(config.clone(), norm, net)?;
    Ok(TrainedModel { model, loss_trace })
}

fn mean_loss(net: &Mlp, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let total: f64 = xs.iter().zip(ys).map(|(x, &y)| -log_softmax_at(&net.logits(x), y)).sum();
    total / xs.len() as f64
}

/// Confusion matrix of `model` on `data` over the model's label set.
pub fn evaluate(model: &ClassifierModel, data: &Dataset) -> Result<ConfusionMatrix, ClassifierError> {
    let ys = data.label_indices(model.labels())?;
    let mut preds = Vec::with_capacity(data.len());
    for row in &data.features {
        preds.push(argmax(&model.predict_proba(row)?));
    }
    Ok(ConfusionMatrix::from_predictions(model.labels().to_vec(), &ys, &preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Stratified k-fold cross-validation; each fold trains from scratch,
/// including its own normalization fit.
pub fn cross_validate(
    config: &ClassifierConfig,
    corpus: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldResult>, ClassifierError> {
    let folds = stratified_folds(&corpus.labels, k, seed)?;
    let mut results = Vec::with_capacity(k);
    for (fold, test_idx) in folds.iter().enumerate() {
        let mut in_test = vec![false; corpus.len()];
        for &i in test_idx {
            in_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..corpus.len()).filter(|&i| !in_test[i]).collect();
        let trained = train(config, &corpus.subset(&train_idx))?;
        let cm = evaluate(&trained.model, &corpus.subset(test_idx))?;
        results.push(FoldResult {
            fold,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            accuracy: cm.accuracy(),
            macro_f1: cm.macro_f1(),
        });
    }
    Ok(results)
}
