//! Export records and the redacted log.
//!
//! A record names only the channels it carries. Which action every registry
//! channel received is given by the manifest, a string with one action code
//! per channel in registry order, so suppressed channel names never appear in
//! the output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Number, Value};

use super::{FilterError, Resolution, SuppressReason};
use crate::signal::{ChannelId, StateLabel};

pub const LOG_FORMAT_VERSION: u64 = 1;

/// One window that crossed the export boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRecord {
    pub(super) session_id: String,
    pub(super) window_index: usize,
    pub(super) channels: BTreeMap<ChannelId, f64>,
    pub(super) manifest: Vec<Resolution>,
    pub(super) predicted_state: Option<StateLabel>,
}

impl ExportRecord {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn window_index(&self) -> usize {
        self.window_index
    }

    /// Surviving channel values.
    pub fn channels(&self) -> &BTreeMap<ChannelId, f64> {
        &self.channels
    }

    pub fn value(&self, channel: ChannelId) -> Option<f64> {
        self.channels.get(&channel).copied()
    }

    /// Resolution of every registry channel, in registry order.
    pub fn manifest(&self) -> &[Resolution] {
        &self.manifest
    }

    pub fn predicted_state(&self) -> Option<&StateLabel> {
        self.predicted_state.as_ref()
    }

    pub fn manifest_codes(&self) -> String {
        self.manifest.iter().map(|r| r.code()).collect()
    }

    pub fn to_json(&self) -> String {
        let num = |v: f64| Value::Number(Number::from_f64(v).expect("exported values are finite"));
        let mut obj = Map::new();
        obj.insert(
            "channels".into(),
            Value::Object(self.channels.iter().map(|(c, v)| (c.name().to_string(), num(*v))).collect()),
        );
        let grain: Map<String, Value> = ChannelId::all()
            .zip(&self.manifest)
            .filter_map(|(c, r)| match r {
                Resolution::Coarsen(g) => Some((c.name().to_string(), num(*g))),
                _ => None,
            })
            .collect();
        if !grain.is_empty() {
            obj.insert("grain".into(), Value::Object(grain));
        }
        obj.insert("manifest".into(), Value::String(self.manifest_codes()));
        obj.insert("session".into(), Value::String(self.session_id.clone()));
        if let Some(s) = &self.predicted_state {
            obj.insert("state".into(), Value::String(s.to_string()));
        }
        obj.insert("window".into(), Value::Number(self.window_index.into()));
        Value::Object(obj).to_string()
    }

    fn from_json(line: usize, text: &str) -> Result<ExportRecord, FilterError> {
        let bad = |reason: String| FilterError::MalformedLog { line, reason };
        let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| bad("record is not an object".into()))?;
        if let Some(k) = obj.keys().find(|k| !["channels", "grain", "manifest", "session", "state", "window"].contains(&k.as_str())) {
            return Err(bad(format!("unexpected key `{k}`")));
        }
        let codes = obj.get("manifest").and_then(Value::as_str).ok_or_else(|| bad("missing manifest".into()))?;
        if codes.chars().count() != ChannelId::COUNT {
            return Err(bad(format!("manifest has {} entries, registry has {}", codes.chars().count(), ChannelId::COUNT)));
        }
        let float = |v: &Value, what: &str| v.as_f64().ok_or_else(|| bad(format!("{what} is not a number")));
        let named_map = |key: &str| -> Result<BTreeMap<ChannelId, f64>, FilterError> {
            let mut out = BTreeMap::new();
            if let Some(v) = obj.get(key) {
                let m = v.as_object().ok_or_else(|| bad(format!("{key} is not an object")))?;
                for (name, x) in m {
                    let c = ChannelId::lookup(name).ok_or_else(|| bad(format!("unknown channel `{name}`")))?;
                    out.insert(c, float(x, name)?);
                }
            }
            Ok(out)
        };
        let channels = named_map("channels")?;
        let grain = named_map("grain")?;
        let mut manifest = Vec::with_capacity(ChannelId::COUNT);
        for (c, code) in ChannelId::all().zip(codes.chars()) {
            let r = match code {
                'P' => Resolution::PassThrough,
                'C' => Resolution::Coarsen(*grain.get(&c).ok_or_else(|| bad(format!("no grain for {c}")))?),
                'S' => Resolution::Suppressed(SuppressReason::Policy),
                'D' => Resolution::Suppressed(SuppressReason::ConsentDenied),
                'A' => Resolution::Suppressed(SuppressReason::ConsentPending),
                other => return Err(bad(format!("unknown manifest code `{other}`"))),
            };
            if channels.contains_key(&c) == r.is_suppressed() {
                return Err(bad(format!("channel {c} presence disagrees with manifest")));
            }
            manifest.push(r);
        }
        let session_id =
            obj.get("session").and_then(Value::as_str).ok_or_else(|| bad("missing session".into()))?.to_string();
        let window_index =
            obj.get("window").and_then(Value::as_u64).ok_or_else(|| bad("missing window".into()))? as usize;
        let predicted_state = match obj.get("state") {
            None => None,
            Some(Value::String(s)) => Some(StateLabel::new(s.as_str())),
            Some(_) => return Err(bad("state is not a string".into())),
        };
        Ok(ExportRecord { session_id, window_index, channels, manifest, predicted_state })
    }
}

/// Export records of a run plus the count of withheld windows.
#[derive(Debug, Clone, PartialEq)]
pub struct RedactedLog {
    pub policy_hash: String,
    pub withheld: usize,
    pub records: Vec<ExportRecord>,
}

impl RedactedLog {
    pub fn new(policy_hash: impl Into<String>) -> RedactedLog {
        RedactedLog { policy_hash: policy_hash.into(), withheld: 0, records: Vec::new() }
    }

    pub fn push(&mut self, outcome: super::FilterOutcome) {
        match outcome {
            super::FilterOutcome::Exported(r) => self.records.push(r),
            super::FilterOutcome::Withheld { .. } => self.withheld += 1,
        }
    }

    pub fn header_json(&self) -> String {
        let mut obj = Map::new();
        obj.insert("policy_hash".into(), Value::String(self.policy_hash.clone()));
        obj.insert("v".into(), Value::Number(LOG_FORMAT_VERSION.into()));
        obj.insert("withheld".into(), Value::Number(self.withheld.into()));
        Value::Object(obj).to_string()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header_json())?;
        for r in &self.records {
            writeln!(out, "{}", r.to_json())?;
        }
        out.flush()
    }

    /// Writes the log to `path`, replacing any previous file.
    pub fn write_to(&self, path: &Path) -> Result<(), FilterError> {
        let unavailable = |e: std::io::Error| FilterError::DestinationUnavailable(format!("{}: {e}", path.display()));
        let f = std::fs::File::create(path).map_err(unavailable)?;
        self.write(std::io::BufWriter::new(f)).map_err(unavailable)
    }

    pub fn parse(bytes: &[u8]) -> Result<RedactedLog, FilterError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| FilterError::MalformedLog { line: 1, reason: "not UTF-8".into() })?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(FilterError::MalformedLog { line: 1, reason: "empty log".into() })?;
        let bad = |reason: &str| FilterError::MalformedLog { line: 1, reason: reason.into() };
        let h: Value = serde_json::from_str(header).map_err(|e| bad(&e.to_string()))?;
        if h.get("v").and_then(Value::as_u64) != Some(LOG_FORMAT_VERSION) {
            return Err(bad("unsupported log version"));
        }
        let policy_hash = h.get("policy_hash").and_then(Value::as_str).ok_or_else(|| bad("missing policy_hash"))?;
        let withheld = h.get("withheld").and_then(Value::as_u64).ok_or_else(|| bad("missing withheld"))? as usize;
        let records = lines.map(|(i, l)| ExportRecord::from_json(i + 1, l)).collect::<Result<_, _>>()?;
        Ok(RedactedLog { policy_hash: policy_hash.to_string(), withheld, records })
    }
}
