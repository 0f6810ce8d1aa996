//! Inference attacks against exported logs.
//!
//! The attacker sees only what crossed the export boundary. Each record
//! becomes one input row of channel values (0 where absent) followed by a
//! presence mask, so the suppression pattern itself is available to it. Ground
//! truth is joined on (session, window) from outside the log.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::classifier::{
    argmax, stratified_split, train, ClassifierConfig, ClassifierError, ConfusionMatrix, Dataset,
};
use crate::features::{window_summaries, FeatureError, WindowSummary, WindowTruth};
use crate::filter::{ExportRecord, FilterError, Pipeline, RedactedLog};
use crate::signal::{ChannelId, SessionLog, StateLabel};
use crate::synth::SyntheticCorpus;

/// Attacker input width: one value and one presence flag per channel.
pub const ATTACK_INPUT_DIM: usize = 2 * ChannelId::COUNT;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("incomparable reports: {0}")]
    IncomparableReports(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    StateInference,
    SubjectReidentification,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::StateInference => "state",
            Objective::SubjectReidentification => "subject",
        }
    }

    pub fn label_of(self, truth: &WindowTruth) -> Option<StateLabel> {
        match self {
            Objective::StateInference => Some(truth.state.clone()),
            Objective::SubjectReidentification => truth.subject.as_deref().map(StateLabel::new),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(Objective::StateInference),
            "subject" => Ok(Objective::SubjectReidentification),
            _ => Err(format!("unknown objective `{s}` (expected state or subject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub objective: Objective,
    /// Attacker network recipe. Input width and label set are filled in from
    /// the log and the objective.
    pub attacker: ClassifierConfig,
    pub train_fraction: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(objective: Objective, seed: u64) -> AttackSpec {
        AttackSpec { objective, attacker: ClassifierConfig::default(), train_fraction: 0.7, seed }
    }
}

/// How the attacker ended up predicting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    Trained,
    /// A single class had enough training rows; it is always predicted.
    Constant,
    /// No usable signal: every class gets equal probability.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub objective: Objective,
    pub accuracy: f64,
    pub chance: f64,
    pub margin: f64,
    pub confusion: ConfusionMatrix,
    pub channels_available: Vec<ChannelId>,
    pub attacker: AttackerKind,
    /// Held-out windows with no record in the log, scored as misses.
    pub missing_test_windows: usize,
}

impl LeakageReport {
    pub fn recall_of(&self, label: &StateLabel) -> Option<f64> {
        self.confusion.labels.iter().position(|l| l == label).map(|i| self.confusion.recall(i))
    }
}

/// Attacker input row for one record.
pub fn attack_inputs(record: &ExportRecord) -> Vec<f64> {
    let mut row = vec![0.0; ATTACK_INPUT_DIM];
    for (c, v) in record.channels() {
        row[c.index()] = *v;
        row[ChannelId::COUNT + c.index()] = 1.0;
    }
    row
}

/// Trains the spec's attacker on the training share of the log and scores it
/// on the held-out share. The split is stratified over ground truth, so
/// windows withheld from the log still count in the denominator.
pub fn run_attack(spec: &AttackSpec, log: &RedactedLog, truth: &[WindowTruth]) -> Result<LeakageReport, AuditError> {
    let labels: Vec<StateLabel> = truth
        .iter()
        .map(|t| {
            spec.objective.label_of(t).ok_or_else(|| {
                AuditError::InsufficientData(format!("window {}#{} has no subject", t.session_id, t.window_index))
            })
        })
        .collect::<Result<_, _>>()?;
    let classes: Vec<StateLabel> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(AuditError::InsufficientData(format!("{} class(es) in ground truth", classes.len())));
    }
    let class_index: BTreeMap<&StateLabel, usize> = classes.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let (train_idx, test_idx) = stratified_split(&labels, spec.train_fraction, spec.seed)
        .map_err(|e| AuditError::InsufficientData(e.to_string()))?;

    let by_key: HashMap<(&str, usize), &ExportRecord> =
        log.records.iter().map(|r| ((r.session_id(), r.window_index()), r)).collect();
    let record_of = |i: usize| by_key.get(&(truth[i].session_id.as_str(), truth[i].window_index)).copied();

    let mut rows = Vec::new();
    let mut row_labels = Vec::new();
    for &i in &train_idx {
        if let Some(r) = record_of(i) {
            rows.push(attack_inputs(r));
            row_labels.push(labels[i].clone());
        }
    }
    let train_set = Dataset::new(rows, row_labels);
    let predictor = fit_attacker(spec, &train_set)?;

    let k = classes.len();
    let mut confusion = ConfusionMatrix::new(classes.clone());
    let mut missing = 0;
    for &i in &test_idx {
        let t = class_index[&labels[i]];
        let Some(r) = record_of(i) else {
            confusion.unpredicted[t] += 1.0;
            missing += 1;
            continue;
        };
        match &predictor {
            Predictor::Uniform => {
                for j in 0..k {
                    confusion.counts[t][j] += 1.0 / k as f64;
                }
            }
            Predictor::Constant(label) => confusion.counts[t][class_index[label]] += 1.0,
            Predictor::Trained(model) => {
                let p = argmax(&model.predict_proba(&attack_inputs(r))?);
                confusion.counts[t][class_index[&model.labels()[p]]] += 1.0;
            }
        }
    }

    let channels_available: Vec<ChannelId> =
        log.records.iter().flat_map(|r| r.channels().keys().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let accuracy = confusion.accuracy();
    let chance = 1.0 / k as f64;
    Ok(LeakageReport {
        objective: spec.objective,
        accuracy,
        chance,
        margin: accuracy - chance,
        confusion,
        channels_available,
        attacker: predictor.kind(),
        missing_test_windows: missing,
    })
}

enum Predictor {
    Uniform,
    Constant(StateLabel),
    Trained(Box<crate::classifier::ClassifierModel>),
}

impl Predictor {
    fn kind(&self) -> AttackerKind {
        match self {
            Predictor::Uniform => AttackerKind::Uniform,
            Predictor::Constant(_) => AttackerKind::Constant,
            Predictor::Trained(_) => AttackerKind::Trained,
        }
    }
}

fn fit_attacker(spec: &AttackSpec, data: &Dataset) -> Result<Predictor, AuditError> {
    let constant_inputs = data.features.windows(2).all(|w| w[0] == w[1]);
    if data.is_empty() || constant_inputs {
        return Ok(Predictor::Uniform);
    }
    let counts = data.class_counts();
    let trainable: Vec<StateLabel> = counts.iter().filter(|(_, n)| **n >= 2).map(|(l, _)| l.clone()).collect();
    match trainable.len() {
        0 => Ok(Predictor::Uniform),
        1 => Ok(Predictor::Constant(trainable[0].clone())),
        _ => {
            let keep: Vec<usize> = (0..data.len()).filter(|&i| trainable.contains(&data.labels[i])).collect();
            let config = ClassifierConfig {
                input_dim: ATTACK_INPUT_DIM,
                label_set: trainable,
                seed: spec.seed,
                ..spec.attacker.clone()
            };
            let trained = train(&config, &data.subset(&keep))?;
            Ok(Predictor::Trained(Box::new(trained.model)))
        }
    }
}

/// Reduction in leakage margin from `raw` to `filtered`.
pub fn leakage_delta(raw: &LeakageReport, filtered: &LeakageReport) -> Result<f64, AuditError> {
    if raw.objective != filtered.objective {
        return Err(AuditError::IncomparableReports(format!(
            "objectives differ: {} vs {}",
            raw.objective.as_str(),
            filtered.objective.as_str()
        )));
    }
    if raw.confusion.labels != filtered.confusion.labels {
        return Err(AuditError::IncomparableReports("class sets differ".into()));
    }
    Ok(raw.margin - filtered.margin)
}

/// Window summaries of labeled windows with their ground truth, ready to be
/// exported under any number of policies.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditWindows {
    pub windows: Vec<(String, WindowSummary)>,
    pub truth: Vec<WindowTruth>,
}

impl AuditWindows {
    pub fn from_sessions<'a>(sessions: impl IntoIterator<Item = &'a SessionLog>) -> Result<AuditWindows, AuditError> {
        let mut out = AuditWindows { windows: Vec::new(), truth: Vec::new() };
        for s in sessions {
            out.extend_from(s)?;
        }
        Ok(out)
    }

    pub fn from_corpus(corpus: &SyntheticCorpus) -> Result<AuditWindows, AuditError> {
        let mut out = AuditWindows { windows: Vec::new(), truth: Vec::new() };
        for s in corpus.sessions() {
            out.extend_from(&s)?;
        }
        Ok(out)
    }

    fn extend_from(&mut self, s: &SessionLog) -> Result<(), AuditError> {
        let summaries = window_summaries(s, s.window_seconds)?;
        for summary in summaries {
            if let Some(state) = s.label_for(summary.window_index) {
                self.truth.push(WindowTruth {
                    session_id: s.session_id.clone(),
                    subject: s.subject.clone(),
                    window_index: summary.window_index,
                    state: state.clone(),
                });
                self.windows.push((s.session_id.clone(), summary));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Runs every window through `pipeline`.
    pub fn export(&self, pipeline: &Pipeline) -> Result<RedactedLog, AuditError> {
        let mut log = RedactedLog::new(pipeline.policy_hash());
        for (session_id, summary) in &self.windows {
            log.push(pipeline.process(summary, session_id)?);
        }
        Ok(log)
    }
}
