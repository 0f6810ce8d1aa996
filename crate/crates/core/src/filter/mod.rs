//! Export-boundary enforcement: per-channel and per-state suppression driven
//! by a policy and the subject's consent.

mod consent;
mod export;
mod policy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use consent::{
    consent_prompt, parse_consent_journal, AnswerSource, ConsentRecord, ConsentStore, Decision, Grant, NoPrompt,
    ScriptedAnswers,
};
pub use export::{ExportRecord, RedactedLog, LOG_FORMAT_VERSION};
pub use policy::{coarsen, ChannelAction, DefaultAction, FilterPolicy, StateAction};

use crate::classifier::{ClassifierError, ClassifierModel};
use crate::features::{summarize, window_frames, FeatureError, WindowSummary};
use crate::signal::{ChannelGroup, ChannelId, SessionLog, StateLabel};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy has a rule for {0}, which the model cannot predict")]
    PolicyModelMismatch(StateLabel),
    #[error("no way to ask about consent for group {0}")]
    PromptUnavailable(ChannelGroup),
    #[error("invalid consent: {0}")]
    InvalidConsent(String),
    #[error("destination unavailable: {0}")]
    DestinationUnavailable(String),
    #[error("redacted log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuppressReason {
    Policy,
    ConsentDenied,
    ConsentPending,
}

/// Final decision for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Resolution {
    PassThrough,
    Coarsen(f64),
    Suppressed(SuppressReason),
}

impl Resolution {
    pub fn is_suppressed(self) -> bool {
        matches!(self, Resolution::Suppressed(_))
    }

    /// Manifest code.
    pub fn code(self) -> char {
        match self {
            Resolution::PassThrough => 'P',
            Resolution::Coarsen(_) => 'C',
            Resolution::Suppressed(SuppressReason::Policy) => 'S',
            Resolution::Suppressed(SuppressReason::ConsentDenied) => 'D',
            Resolution::Suppressed(SuppressReason::ConsentPending) => 'A',
        }
    }

    pub fn apply(self, value: f64) -> Option<f64> {
        match self {
            Resolution::PassThrough => Some(value),
            Resolution::Coarsen(g) => Some(coarsen(value, g)),
            Resolution::Suppressed(_) => None,
        }
    }
}

/// Consent first: a missing or denied grant suppresses, a pending one
/// suppresses until answered. Only an Allow lets the policy decide.
pub fn resolve_action(policy: &FilterPolicy, consent: &ConsentRecord, channel: ChannelId) -> Resolution {
    match consent.decision(channel.group()) {
        None | Some(Decision::Deny) => Resolution::Suppressed(SuppressReason::ConsentDenied),
        Some(Decision::Ask) => Resolution::Suppressed(SuppressReason::ConsentPending),
        Some(Decision::Allow) => match policy.rule_for(channel) {
            ChannelAction::Suppress => Resolution::Suppressed(SuppressReason::Policy),
            ChannelAction::PassThrough => Resolution::PassThrough,
            ChannelAction::Coarsen(g) => Resolution::Coarsen(g),
        },
    }
}

/// Resolutions of every registry channel for one policy and consent snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPolicy {
    pub policy: FilterPolicy,
    resolutions: Vec<Resolution>,
}

impl ResolvedPolicy {
    pub fn new(policy: &FilterPolicy, consent: &ConsentRecord) -> ResolvedPolicy {
        ResolvedPolicy {
            policy: policy.clone(),
            resolutions: ChannelId::all().map(|c| resolve_action(policy, consent, c)).collect(),
        }
    }

    pub fn resolution(&self, channel: ChannelId) -> Resolution {
        self.resolutions[channel.index()]
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.resolutions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    Exported(ExportRecord),
    Withheld { window_index: usize, state: StateLabel },
}

impl FilterOutcome {
    pub fn record(&self) -> Option<&ExportRecord> {
        match self {
            FilterOutcome::Exported(r) => Some(r),
            FilterOutcome::Withheld { .. } => None,
        }
    }
}

/// Filters an aggregated window whose state is already known.
pub fn filter_summary(
    summary: &WindowSummary,
    session_id: &str,
    predicted: &StateLabel,
    resolved: &ResolvedPolicy,
) -> FilterOutcome {
    if resolved.policy.state_action(predicted) == StateAction::WithholdWindow {
        return FilterOutcome::Withheld { window_index: summary.window_index, state: predicted.clone() };
    }
    let channels: BTreeMap<ChannelId, f64> = ChannelId::all()
        .filter_map(|c| resolved.resolution(c).apply(summary.get(c)).map(|v| (c, v)))
        .collect();
    FilterOutcome::Exported(ExportRecord {
        session_id: session_id.to_string(),
        window_index: summary.window_index,
        channels,
        manifest: resolved.resolutions().to_vec(),
        predicted_state: resolved.policy.export_state.then(|| predicted.clone()),
    })
}

fn check_policy_labels(model: &ClassifierModel, policy: &FilterPolicy) -> Result<(), FilterError> {
    match policy.state_rules.keys().find(|s| model.config.label_index(s).is_none()) {
        Some(s) => Err(FilterError::PolicyModelMismatch(s.clone())),
        None => Ok(()),
    }
}

/// Classifies the window with `model`, then filters it.
pub fn filter_window(
    summary: &WindowSummary,
    session_id: &str,
    model: &ClassifierModel,
    resolved: &ResolvedPolicy,
) -> Result<FilterOutcome, FilterError> {
    check_policy_labels(model, &resolved.policy)?;
    let predicted = model.predict(&summary.feature_vector().values)?;
    Ok(filter_summary(summary, session_id, predicted, resolved))
}

/// Classifier, policy and consent snapshot bundled for streaming use.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub model: ClassifierModel,
    pub resolved: ResolvedPolicy,
}

impl Pipeline {
    pub fn new(model: ClassifierModel, policy: &FilterPolicy, consent: &ConsentRecord) -> Result<Pipeline, FilterError> {
        policy.validate()?;
        check_policy_labels(&model, policy)?;
        Ok(Pipeline { model, resolved: ResolvedPolicy::new(policy, consent) })
    }

    pub fn policy_hash(&self) -> String {
        self.resolved.policy.hash()
    }

    pub fn process(&self, summary: &WindowSummary, session_id: &str) -> Result<FilterOutcome, FilterError> {
        let predicted = self.model.predict(&summary.feature_vector().values)?;
        Ok(filter_summary(summary, session_id, predicted, &self.resolved))
    }

    /// Aggregates, classifies and filters every complete window of `session`.
    pub fn process_session(&self, session: &SessionLog, log: &mut RedactedLog) -> Result<(), FilterError> {
        let ws = session.window_seconds;
        for i in 0..session.window_count(ws) {
            let frames = window_frames(session, i, ws)?;
            log.push(self.process(&summarize(&frames), &session.session_id)?);
        }
        Ok(())
    }
}
