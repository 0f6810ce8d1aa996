use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::signal::ChannelGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Allow,
    Deny,
    Ask,
}

impl std::str::FromStr for Decision {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allow" => Ok(Decision::Allow),
            "deny" => Ok(Decision::Deny),
            "ask" => Ok(Decision::Ask),
            _ => Err(FilterError::InvalidConsent(format!("unknown decision `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grant {
    pub decision: Decision,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub revocable: bool,
}

/// Per-group consent of one subject. A group without a grant is treated as
/// denied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub subject_id: String,
    pub grants: BTreeMap<ChannelGroup, Grant>,
}

impl ConsentRecord {
    pub fn new(subject_id: impl Into<String>) -> ConsentRecord {
        ConsentRecord { subject_id: subject_id.into(), grants: BTreeMap::new() }
    }

    /// The same decision for every group.
    pub fn uniform(subject_id: impl Into<String>, decision: Decision, timestamp: f64) -> ConsentRecord {
        let mut r = ConsentRecord::new(subject_id);
        for g in ChannelGroup::ALL {
            r.set(g, decision, timestamp);
        }
        r
    }

    pub fn set(&mut self, group: ChannelGroup, decision: Decision, timestamp: f64) {
        self.grants.insert(group, Grant { decision, timestamp, revocable: true });
    }

    pub fn decision(&self, group: ChannelGroup) -> Option<Decision> {
        self.grants.get(&group).map(|g| g.decision)
    }

    pub fn pending(&self) -> Vec<ChannelGroup> {
        ChannelGroup::ALL.into_iter().filter(|g| self.decision(*g) == Some(Decision::Ask)).collect()
    }

    fn apply(&mut self, entry: &JournalEntry) {
        self.grants.insert(
            entry.group,
            Grant { decision: entry.decision, timestamp: entry.t, revocable: entry.revocable },
        );
    }
}

/// Where consent answers come from. `None` means no answer can be obtained
/// right now, which leaves the group suppressed.
pub trait AnswerSource {
    fn answer(&mut self, subject_id: &str, group: ChannelGroup) -> Option<Decision>;
}

/// Batch mode: nobody to ask.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPrompt;

impl AnswerSource for NoPrompt {
    fn answer(&mut self, _: &str, _: ChannelGroup) -> Option<Decision> {
        None
    }
}

/// Pre-recorded answers, one per group.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAnswers(pub BTreeMap<ChannelGroup, Decision>);

impl AnswerSource for ScriptedAnswers {
    fn answer(&mut self, _: &str, group: ChannelGroup) -> Option<Decision> {
        self.0.get(&group).copied()
    }
}

impl<F: FnMut(&str, ChannelGroup) -> Option<Decision>> AnswerSource for F {
    fn answer(&mut self, subject_id: &str, group: ChannelGroup) -> Option<Decision> {
        self(subject_id, group)
    }
}

/// Asks `source` about a pending group. Only a definite Allow or Deny is
/// recorded; anything else reports `PromptUnavailable` and leaves the record
/// untouched.
pub fn consent_prompt(
    record: &mut ConsentRecord,
    group: ChannelGroup,
    source: &mut dyn AnswerSource,
    timestamp: f64,
) -> Result<Grant, FilterError> {
    if record.decision(group) != Some(Decision::Ask) {
        return Err(FilterError::InvalidConsent(format!("group {group} is not awaiting an answer")));
    }
    match source.answer(&record.subject_id, group) {
        Some(decision @ (Decision::Allow | Decision::Deny)) => {
            record.set(group, decision, timestamp);
            Ok(record.grants[&group])
        }
        _ => Err(FilterError::PromptUnavailable(group)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalEntry {
    subject: String,
    group: ChannelGroup,
    decision: Decision,
    t: f64,
    #[serde(default = "yes")]
    revocable: bool,
}

fn yes() -> bool {
    true
}

/// Rebuilds one subject's record from an append-only journal; the last entry
/// for a group wins.
pub fn parse_consent_journal(text: &str, subject_id: &str) -> Result<ConsentRecord, FilterError> {
    let mut record = ConsentRecord::new(subject_id);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: JournalEntry = serde_json::from_str(line)
            .map_err(|e| FilterError::InvalidConsent(format!("journal line {}: {e}", i + 1)))?;
        if entry.subject == subject_id {
            record.apply(&entry);
        }
    }
    Ok(record)
}

/// A consent record backed by an optional journal file. Every change is
/// appended before it takes effect.
#[derive(Debug, Clone)]
pub struct ConsentStore {
    path: Option<PathBuf>,
    record: ConsentRecord,
}

impl ConsentStore {
    pub fn in_memory(record: ConsentRecord) -> ConsentStore {
        ConsentStore { path: None, record }
    }

    /// Opens `path`, or starts from `initial` when the journal does not exist
    /// yet. Entries of `initial` are written to a new journal.
    pub fn open(path: &Path, initial: ConsentRecord) -> Result<ConsentStore, FilterError> {
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| FilterError::DestinationUnavailable(format!("{}: {e}", path.display())))?;
            let record = parse_consent_journal(&text, &initial.subject_id)?;
            let mut store = ConsentStore { path: Some(path.to_path_buf()), record };
            // groups never journaled start from the initial record
            for (group, grant) in &initial.grants {
                if !store.record.grants.contains_key(group) {
                    store.record_grant(*group, *grant)?;
                }
            }
            return Ok(store);
        }
        let mut store = ConsentStore { path: Some(path.to_path_buf()), record: ConsentRecord::new(&initial.subject_id) };
        for (group, grant) in &initial.grants {
            store.record_grant(*group, *grant)?;
        }
        Ok(store)
    }

    pub fn record(&self) -> &ConsentRecord {
        &self.record
    }

    fn record_grant(&mut self, group: ChannelGroup, grant: Grant) -> Result<(), FilterError> {
        let entry = JournalEntry {
            subject: self.record.subject_id.clone(),
            group,
            decision: grant.decision,
            t: grant.timestamp,
            revocable: grant.revocable,
        };
        if let Some(path) = &self.path {
            let unavailable = |e: std::io::Error| FilterError::DestinationUnavailable(format!("{}: {e}", path.display()));
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(unavailable)?;
            let mut line = serde_json::to_string(&entry).expect("journal entries serialize");
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(unavailable)?;
        }
        self.record.apply(&entry);
        Ok(())
    }

    pub fn set(&mut self, group: ChannelGroup, decision: Decision, timestamp: f64) -> Result<(), FilterError> {
        self.record_grant(group, Grant { decision, timestamp, revocable: true })
    }

    /// Prompts for one pending group and persists the answer.
    pub fn prompt(
        &mut self,
        group: ChannelGroup,
        source: &mut dyn AnswerSource,
        timestamp: f64,
    ) -> Result<Grant, FilterError> {
        let mut scratch = self.record.clone();
        let grant = consent_prompt(&mut scratch, group, source, timestamp)?;
        self.record_grant(group, grant)?;
        Ok(grant)
    }

    /// Prompts for every pending group; returns the groups left unanswered.
    pub fn prompt_pending(
        &mut self,
        source: &mut dyn AnswerSource,
        timestamp: f64,
    ) -> Result<Vec<ChannelGroup>, FilterError> {
        let mut unanswered = Vec::new();
        for group in self.record.pending() {
            match self.prompt(group, source, timestamp) {
                Ok(_) => {}
                Err(FilterError::PromptUnavailable(g)) => unanswered.push(g),
                Err(e) => return Err(e),
            }
        }
        Ok(unanswered)
    }
}
