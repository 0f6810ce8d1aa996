//! Sensor data model: channels, per-tick frames, and sessions.

mod jsonl;
mod registry;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use jsonl::{canonical_time, canonical_value, parse_session, serialize_session};
pub use registry::{ChannelGroup, ChannelId, ChannelKind, UnknownName, REGISTRY_VERSION};
pub use replay::{replay, Pacing, Replay, TaggedFrame};

/// Nominal eye-tracker rate of the reference headset.
pub const DEFAULT_GAZE_HZ: u32 = 90;
/// Nominal face-tracker rate of the reference headset.
pub const DEFAULT_EXPR_HZ: u32 = 30;
/// Aggregation window used for labels and feature vectors.
pub const DEFAULT_WINDOW_SECONDS: f64 = 10.0;
/// Longest accepted session.
pub const MAX_SESSION_SECONDS: f64 = 1.0e6;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: unknown channel `{name}`")]
    UnknownChannel { line: usize, name: String },
    #[error("line {line}: timestamp {timestamp} does not increase")]
    NonMonotoneTimestamp { line: usize, timestamp: f64 },
    #[error("line {line}: {channel} = {value} is outside [0, 1]")]
    OutOfRangeWeight { line: usize, channel: String, value: f64 },
}

impl SignalError {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        SignalError::MalformedRecord { line, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Interactive,
    Emotional,
    Ambient,
}

impl Environment {
    pub const ALL: [Environment; 3] =
        [Environment::Interactive, Environment::Emotional, Environment::Ambient];

    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Interactive => "interactive",
            Environment::Emotional => "emotional",
            Environment::Ambient => "ambient",
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Environment {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Environment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

/// Categorical user-state label such as `Neutral` or `Stressed`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateLabel(String);

impl StateLabel {
    pub fn new(name: impl Into<String>) -> StateLabel {
        StateLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The four-state label set used by default.
    pub fn default_set() -> Vec<StateLabel> {
        ["Neutral", "Engaged", "Stressed", "Relaxed"].into_iter().map(StateLabel::new).collect()
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateLabel {
    fn from(s: &str) -> Self {
        StateLabel::new(s)
    }
}

/// Blendshape weights captured at one face-tracker tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpressionFrame {
    pub timestamp: f64,
    pub weights: BTreeMap<ChannelId, f64>,
}

/// One eye-tracker tick.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeFrame {
    pub timestamp: f64,
    /// Unit look direction: +x right, +y up, +z forward.
    pub gaze_dir: [f64; 3],
    pub eye_openness_l: f64,
    pub eye_openness_r: f64,
    pub blink: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session_id: String,
    pub environment: Environment,
    /// Synthetic subject identity; absent for real captures.
    pub subject: Option<String>,
    pub gaze_hz: u32,
    pub expr_hz: u32,
    /// Window length that `labels` indices refer to.
    pub window_seconds: f64,
    pub expression_stream: Vec<ExpressionFrame>,
    pub gaze_stream: Vec<GazeFrame>,
    /// `(window_index, label)` pairs, sorted by window index.
    pub labels: Vec<(usize, StateLabel)>,
}

impl SessionLog {
    pub fn empty(session_id: impl Into<String>, environment: Environment) -> SessionLog {
        SessionLog {
            session_id: session_id.into(),
            environment,
            subject: None,
            gaze_hz: DEFAULT_GAZE_HZ,
            expr_hz: DEFAULT_EXPR_HZ,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            expression_stream: Vec::new(),
            gaze_stream: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Time covered by the session: the latest sample plus one sample period
    /// of its stream.
    pub fn duration(&self) -> f64 {
        let expr_end = self
            .expression_stream
            .last()
            .map_or(0.0, |f| f.timestamp + 1.0 / self.expr_hz as f64);
        let gaze_end = self
            .gaze_stream
            .last()
            .map_or(0.0, |f| f.timestamp + 1.0 / self.gaze_hz as f64);
        expr_end.max(gaze_end)
    }

    /// Number of complete windows of `window_seconds`; trailing partial windows
    /// are not counted.
    pub fn window_count(&self, window_seconds: f64) -> usize {
        if window_seconds <= 0.0 {
            return 0;
        }
        // The tolerance absorbs microsecond timestamp rounding.
        (self.duration() / window_seconds + 1e-6).floor() as usize
    }

    pub fn label_for(&self, window_index: usize) -> Option<&StateLabel> {
        self.labels
            .binary_search_by_key(&window_index, |(w, _)| *w)
            .ok()
            .map(|i| &self.labels[i].1)
    }

    pub fn frame_count(&self) -> usize {
        self.expression_stream.len() + self.gaze_stream.len()
    }

    /// Checks every data-model invariant. Line numbers in errors are 0 since
    /// the log did not come from a file.
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.gaze_hz == 0 || self.expr_hz == 0 {
            return Err(SignalError::malformed(0, "sampling rates must be positive"));
        }
        if !(self.window_seconds > 0.0) {
            return Err(SignalError::malformed(0, "window length must be positive"));
        }
        let mut last = f64::NEG_INFINITY;
        for frame in &self.expression_stream {
            check_timestamp(0, frame.timestamp, &mut last)?;
            check_weights(0, &frame.weights)?;
        }
        let mut last = f64::NEG_INFINITY;
        for frame in &self.gaze_stream {
            check_timestamp(0, frame.timestamp, &mut last)?;
            check_gaze(0, frame)?;
        }
        self.check_labels(0)
    }

    pub(crate) fn check_labels(&self, line: usize) -> Result<(), SignalError> {
        let windows = self.window_count(self.window_seconds);
        let mut prev: Option<usize> = None;
        for (w, label) in &self.labels {
            if label.as_str().is_empty() {
                return Err(SignalError::malformed(line, "empty state label"));
            }
            if *w >= windows {
                return Err(SignalError::malformed(
                    line,
                    format!("label references window {w} but the session has {windows}"),
                ));
            }
            if prev.is_some_and(|p| p >= *w) {
                return Err(SignalError::malformed(line, "label windows must be unique and sorted"));
            }
            prev = Some(*w);
        }
        Ok(())
    }
}

pub(crate) fn check_timestamp(line: usize, t: f64, last: &mut f64) -> Result<(), SignalError> {
    if !t.is_finite() || t < 0.0 {
        return Err(SignalError::malformed(line, format!("invalid timestamp {t}")));
    }
    if t > MAX_SESSION_SECONDS {
        return Err(SignalError::malformed(line, format!("timestamp {t} exceeds session limit")));
    }
    if t <= *last {
        return Err(SignalError::NonMonotoneTimestamp { line, timestamp: t });
    }
    *last = t;
    Ok(())
}

pub(crate) fn check_unit(line: usize, channel: &str, value: f64) -> Result<(), SignalError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(SignalError::OutOfRangeWeight { line, channel: channel.to_string(), value });
    }
    Ok(())
}

pub(crate) fn check_weights(
    line: usize,
    weights: &BTreeMap<ChannelId, f64>,
) -> Result<(), SignalError> {
    for (&ch, &v) in weights {
        if ch.kind() != ChannelKind::Expression {
            return Err(SignalError::malformed(line, format!("{ch} is not an expression channel")));
        }
        check_unit(line, ch.name(), v)?;
    }
    Ok(())
}

pub(crate) fn check_gaze(line: usize, frame: &GazeFrame) -> Result<(), SignalError> {
    let norm = frame.gaze_dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(SignalError::malformed(line, format!("gaze direction norm {norm} is not 1")));
    }
    check_unit(line, "EyeOpennessL", frame.eye_openness_l)?;
    check_unit(line, "EyeOpennessR", frame.eye_openness_r)
}
