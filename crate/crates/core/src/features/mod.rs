//! Windowed feature extraction.
//!
//! Every window of a session is reduced to a [`WindowSummary`] holding one
//! value per registry channel; the classifier input is the fixed 14-channel
//! projection [`FeatureVector`] of that summary.

mod cues;
mod csv_io;
mod derived;

use std::collections::BTreeMap;

use crate::signal::{ChannelId, ChannelKind, ExpressionFrame, GazeFrame, SessionLog, StateLabel};

pub use cues::{annotate_channels, annotate_cues, CompositePattern, CueAnnotation, CueFamily, DEFAULT_CUE_THRESHOLD};
pub use csv_io::{read_feature_csv, write_feature_csv, LabeledFeatures};
pub use derived::{derived_metrics, fixation_entropy, gaze_sector, DerivedMetrics, GAZE_SECTORS};

/// Classifier input channels, in model input order.
pub const FEATURE_CHANNELS: [&str; 14] = [
    "BrowLowererL",
    "BrowLowererR",
    "CheekRaiserL",
    "CheekRaiserR",
    "EyesClosedL",
    "EyesClosedR",
    "EyesLookDownR",
    "EyesLookRightL",
    "InnerBrowRaiserL",
    "JawDrop",
    "UpperLipRaiserR",
    "LipCornerDepressorL",
    "LipSuckLB",
    "TongueTipAlveolar",
];

pub const FEATURE_DIM: usize = FEATURE_CHANNELS.len();

pub fn feature_channel_ids() -> [ChannelId; FEATURE_DIM] {
    FEATURE_CHANNELS.map(ChannelId::named)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("session covers {duration:.3} s, shorter than one {window_seconds} s window")]
    SessionTooShort { duration: f64, window_seconds: f64 },
    #[error("window {index} out of range ({count} windows)")]
    WindowOutOfRange { index: usize, count: usize },
    #[error("window length must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("feature file: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub window_index: usize,
    pub values: [f64; FEATURE_DIM],
    pub normalized: bool,
}

impl FeatureVector {
    pub fn raw(window_index: usize, values: [f64; FEATURE_DIM]) -> FeatureVector {
        FeatureVector { window_index, values, normalized: false }
    }

    pub fn get(&self, channel: ChannelId) -> Option<f64> {
        let names = FEATURE_CHANNELS;
        names.iter().position(|n| *n == channel.name()).map(|i| self.values[i])
    }

    pub fn to_channel_map(&self) -> BTreeMap<ChannelId, f64> {
        feature_channel_ids().into_iter().zip(self.values).collect()
    }
}

/// Frames of one window `[start, start + seconds)`.
#[derive(Debug, Clone, Copy)]
pub struct WindowFrames<'a> {
    pub index: usize,
    pub start: f64,
    pub seconds: f64,
    pub expression: &'a [ExpressionFrame],
    pub gaze: &'a [GazeFrame],
}

/// Slices out window `index`. Fails when the window is not complete.
pub fn window_frames(
    session: &SessionLog,
    index: usize,
    window_seconds: f64,
) -> Result<WindowFrames<'_>, FeatureError> {
    if !(window_seconds > 0.0) {
        return Err(FeatureError::InvalidWindow(window_seconds));
    }
    let count = session.window_count(window_seconds);
    if index >= count {
        return Err(FeatureError::WindowOutOfRange { index, count });
    }
    let start = index as f64 * window_seconds;
    let end = start + window_seconds;
    let span = |ts: &dyn Fn(usize) -> f64, len: usize| {
        let lo = partition(len, |i| ts(i) < start);
        let hi = partition(len, |i| ts(i) < end);
        lo..hi
    };
    let e = &session.expression_stream;
    let g = &session.gaze_stream;
    let er = span(&|i| e[i].timestamp, e.len());
    let gr = span(&|i| g[i].timestamp, g.len());
    Ok(WindowFrames { index, start, seconds: window_seconds, expression: &e[er], gaze: &g[gr] })
}

fn partition(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One aggregated value per registry channel for a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSummary {
    pub window_index: usize,
    pub values: BTreeMap<ChannelId, f64>,
}

impl WindowSummary {
    pub fn get(&self, channel: ChannelId) -> f64 {
        self.values.get(&channel).copied().unwrap_or(0.0)
    }

    pub fn feature_vector(&self) -> FeatureVector {
        FeatureVector::raw(self.window_index, feature_channel_ids().map(|c| self.get(c)))
    }
}

/// Blendshapes the eye tracker can stand in for when the face tracker does not
/// report them: look directions come from the signed gaze component mapped
/// through `(c + 1) / 2`, closure from `1 - openness`.
fn gaze_fallback(channel: ChannelId, gaze: &GazeAverages) -> Option<f64> {
    let [x, y, _] = gaze.dir;
    let unit = |c: f64| ((c + 1.0) / 2.0).clamp(0.0, 1.0);
    let name = channel.name();
    let v = match name.strip_suffix(['L', 'R']).unwrap_or(name) {
        "EyesLookRight" => unit(x),
        "EyesLookLeft" => unit(-x),
        "EyesLookUp" => unit(y),
        "EyesLookDown" => unit(-y),
        "EyesClosed" => {
            let open = if name.ends_with('L') { gaze.open_l } else { gaze.open_r };
            (1.0 - open).clamp(0.0, 1.0)
        }
        _ => return None,
    };
    Some(v)
}

struct GazeAverages {
    dir: [f64; 3],
    open_l: f64,
    open_r: f64,
    blinks: usize,
}

impl GazeAverages {
    fn of(frames: &[GazeFrame]) -> Option<GazeAverages> {
        if frames.is_empty() {
            return None;
        }
        Some(GazeAverages {
            dir: [0, 1, 2].map(|k| mean_of(frames.iter().map(|f| f.gaze_dir[k]))),
            open_l: mean_of(frames.iter().map(|f| f.eye_openness_l)),
            open_r: mean_of(frames.iter().map(|f| f.eye_openness_r)),
            blinks: frames.iter().filter(|f| f.blink).count(),
        })
    }
}

/// Mean accumulated as deviations from the first sample, so a constant
/// signal averages to exactly its value.
#[derive(Debug, Clone, Copy)]
struct ShiftedMean {
    origin: f64,
    deviation: f64,
    n: usize,
}

impl ShiftedMean {
    fn new(origin: f64) -> ShiftedMean {
        ShiftedMean { origin, deviation: 0.0, n: 0 }
    }

    fn push(&mut self, x: f64) {
        self.deviation += x - self.origin;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        self.origin + self.deviation / self.n as f64
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc: Option<ShiftedMean> = None;
    for v in values {
        acc.get_or_insert_with(|| ShiftedMean::new(v)).push(v);
    }
    acc.map_or(0.0, |m| m.mean())
}

/// Mean of each expression channel over the frames that report it.
pub fn expression_means(frames: &[ExpressionFrame]) -> BTreeMap<ChannelId, f64> {
    let mut acc: BTreeMap<ChannelId, ShiftedMean> = BTreeMap::new();
    for frame in frames {
        for (&ch, &w) in &frame.weights {
            acc.entry(ch).or_insert_with(|| ShiftedMean::new(w)).push(w);
        }
    }
    acc.into_iter().map(|(ch, m)| (ch, m.mean())).collect()
}

/// Aggregates a window into a value for every registry channel.
///
/// Expression channels take the time mean over frames that carry them, fall
/// back to the gaze-derived value for look and closure channels, and are 0
/// otherwise.
pub fn summarize(window: &WindowFrames<'_>) -> WindowSummary {
    let means = expression_means(window.expression);
    let gaze = GazeAverages::of(window.gaze);
    let mut values = BTreeMap::new();
    for ch in ChannelId::of_kind(ChannelKind::Expression) {
        let v = means
            .get(&ch)
            .copied()
            .or_else(|| gaze.as_ref().and_then(|g| gaze_fallback(ch, g)))
            .unwrap_or(0.0)
            .clamp(0.0, 1.0);
        values.insert(ch, v);
    }
    let (dir, open, blinks) = match &gaze {
        Some(g) => (g.dir, [g.open_l, g.open_r], g.blinks),
        None => ([0.0, 0.0, 1.0], [1.0, 1.0], 0),
    };
    for (name, v) in [
        ("GazeDirX", dir[0]),
        ("GazeDirY", dir[1]),
        ("GazeDirZ", dir[2]),
        ("EyeOpennessL", open[0]),
        ("EyeOpennessR", open[1]),
        ("BlinkEvent", blinks as f64),
    ] {
        values.insert(ChannelId::named(name), v);
    }
    let metrics = derived::compute(window, &values);
    for (name, v) in [
        ("BlinkRate", metrics.blink_rate),
        ("FixationEntropy", metrics.fixation_entropy),
        ("ExpressionIntensity", metrics.expression_intensity),
        ("Symmetry", metrics.symmetry),
    ] {
        values.insert(ChannelId::named(name), v);
    }
    WindowSummary { window_index: window.index, values }
}

pub fn window_summaries(
    session: &SessionLog,
    window_seconds: f64,
) -> Result<Vec<WindowSummary>, FeatureError> {
    if !(window_seconds > 0.0) {
        return Err(FeatureError::InvalidWindow(window_seconds));
    }
    let count = session.window_count(window_seconds);
    if count == 0 {
        return Err(FeatureError::SessionTooShort { duration: session.duration(), window_seconds });
    }
    (0..count)
        .map(|i| window_frames(session, i, window_seconds).map(|w| summarize(&w)))
        .collect()
}

/// One feature vector per complete window; the trailing partial window is
/// dropped.
pub fn window_features(
    session: &SessionLog,
    window_seconds: f64,
) -> Result<Vec<FeatureVector>, FeatureError> {
    Ok(window_summaries(session, window_seconds)?.iter().map(WindowSummary::feature_vector).collect())
}

/// Feature vectors of every labeled window across `sessions`.
pub fn labeled_features(sessions: &[SessionLog]) -> Result<LabeledFeatures, FeatureError> {
    let mut out = LabeledFeatures::default();
    for session in sessions {
        for (window, label) in &session.labels {
            let frames = window_frames(session, *window, session.window_seconds)?;
            out.vectors.push(summarize(&frames).feature_vector());
            out.labels.push(label.clone());
        }
    }
    Ok(out)
}

/// Ground truth for one labeled window, keyed the same way export records are.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTruth {
    pub session_id: String,
    pub subject: Option<String>,
    pub window_index: usize,
    pub state: StateLabel,
}

pub fn window_truth(sessions: &[SessionLog]) -> Vec<WindowTruth> {
    sessions
        .iter()
        .flat_map(|s| {
            s.labels.iter().map(move |(w, label)| WindowTruth {
                session_id: s.session_id.clone(),
                subject: s.subject.clone(),
                window_index: *w,
                state: label.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Environment;
    use proptest::prelude::*;

    const TABLE4: [f64; 14] =
        [0.26, 0.26, 0.08, 0.06, 0.01, 0.08, 0.31, 0.97, 0.40, 0.02, 0.09, 0.02, 0.01, 0.02];

    fn constant_session(values: &[f64; 14], seconds: f64) -> SessionLog {
        let mut s = SessionLog::empty("c", Environment::Emotional);
        let weights: BTreeMap<_, _> = feature_channel_ids().into_iter().zip(values.iter().copied()).collect();
        let frames = (seconds * 30.0).round() as usize;
        s.expression_stream = (0..frames)
            .map(|i| ExpressionFrame { timestamp: i as f64 / 30.0, weights: weights.clone() })
            .collect();
        s
    }

    #[test]
    fn constant_table_vector_reproduced() {
        let s = constant_session(&TABLE4, 10.0);
        let fvs = window_features(&s, 10.0).unwrap();
        assert_eq!(fvs.len(), 1);
        assert_eq!(fvs[0].values, TABLE4);
        assert!(!fvs[0].normalized);
    }

    #[test]
    fn all_zero_stream() {
        let s = constant_session(&[0.0; 14], 20.0);
        let fvs = window_features(&s, 10.0).unwrap();
        assert_eq!(fvs.len(), 2);
        assert!(fvs.iter().all(|f| f.values == [0.0; 14]));
    }

    #[test]
    fn partial_window_dropped() {
        let s = constant_session(&TABLE4, 25.0);
        assert_eq!(window_features(&s, 10.0).unwrap().len(), 2);
    }

    #[test]
    fn too_short() {
        let s = constant_session(&TABLE4, 5.0);
        assert!(matches!(window_features(&s, 10.0), Err(FeatureError::SessionTooShort { .. })));
        assert!(matches!(window_features(&s, 0.0), Err(FeatureError::InvalidWindow(_))));
    }

    #[test]
    fn gaze_fallback_maps_signed_components() {
        let mut s = SessionLog::empty("g", Environment::Interactive);
        let (x, y) = (0.6f64, -0.28f64);
        let z = (1.0 - x * x - y * y).sqrt();
        s.gaze_stream = (0..900)
            .map(|i| GazeFrame {
                timestamp: i as f64 / 90.0,
                gaze_dir: [x, y, z],
                eye_openness_l: 0.75,
                eye_openness_r: 0.5,
                blink: false,
            })
            .collect();
        let fv = &window_features(&s, 10.0).unwrap()[0];
        let get = |n| fv.get(ChannelId::named(n)).unwrap();
        assert!((get("EyesLookRightL") - 0.8).abs() < 1e-12);
        assert!((get("EyesLookDownR") - 0.64).abs() < 1e-12);
        assert!((get("EyesClosedL") - 0.25).abs() < 1e-12);
        assert!((get("EyesClosedR") - 0.5).abs() < 1e-12);
        assert_eq!(get("JawDrop"), 0.0);
    }

    #[test]
    fn expression_stream_wins_over_gaze() {
        let mut s = constant_session(&TABLE4, 10.0);
        s.gaze_stream = (0..900)
            .map(|i| GazeFrame {
                timestamp: i as f64 / 90.0,
                gaze_dir: [0.0, 0.0, 1.0],
                eye_openness_l: 1.0,
                eye_openness_r: 1.0,
                blink: false,
            })
            .collect();
        let fv = &window_features(&s, 10.0).unwrap()[0];
        assert_eq!(fv.values, TABLE4);
    }

    #[test]
    fn summary_covers_registry() {
        let s = constant_session(&TABLE4, 10.0);
        let sums = window_summaries(&s, 10.0).unwrap();
        assert_eq!(sums[0].values.len(), ChannelId::COUNT);
    }

    proptest! {
        #[test]
        fn mean_within_channel_range(ws in prop::collection::vec(prop::array::uniform14(0.0f64..=1.0), 1..40)) {
            let frames: Vec<ExpressionFrame> = ws.iter().enumerate().map(|(i, v)| ExpressionFrame {
                timestamp: i as f64,
                weights: feature_channel_ids().into_iter().zip(v.iter().copied()).collect(),
            }).collect();
            let means = expression_means(&frames);
            for (k, ch) in feature_channel_ids().into_iter().enumerate() {
                let lo = ws.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                let hi = ws.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                let m = means[&ch];
                prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
            }
        }

        #[test]
        fn order_invariant(ws in prop::collection::vec(prop::array::uniform14(0.0f64..=1.0), 1..40), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let frames: Vec<ExpressionFrame> = ws.iter().enumerate().map(|(i, v)| ExpressionFrame {
                timestamp: i as f64,
                weights: feature_channel_ids().into_iter().zip(v.iter().copied()).collect(),
            }).collect();
            let mut shuffled = frames.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = expression_means(&frames);
            let b = expression_means(&shuffled);
            for (ch, v) in a {
                prop_assert!((v - b[&ch]).abs() < 1e-12);
            }
        }
    }
}
