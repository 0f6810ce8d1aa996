//! JSONL session container.
//!
//! ```text
//! {"environment":"ambient","expr_hz":30,"gaze_hz":90,"session_id":"s0","v":1,"window_s":10.0}
//! {"kind":"gaze","t":0.0,"dir":[0.0,0.0,1.0],"open":[0.9,0.9],"blink":false}
//! {"kind":"expr","t":0.0,"w":{"JawDrop":0.02}}
//! {"kind":"label","window":0,"state":"Relaxed"}
//! ```
//!
//! Canonical output sorts object keys, emits frames in replay order followed by
//! labels, rounds values to 6 significant digits and timestamps to whole
//! microseconds.

use std::collections::BTreeMap;

use serde_json::{Map, Number, Value};

use super::{
    check_gaze, check_timestamp, check_weights, replay, ChannelId, Environment, ExpressionFrame,
    GazeFrame, Pacing, SessionLog, SignalError, StateLabel, TaggedFrame, DEFAULT_EXPR_HZ,
    DEFAULT_GAZE_HZ, DEFAULT_WINDOW_SECONDS,
};

const FORMAT_VERSION: u64 = 1;

/// Rounds to the 6 significant digits kept by the session format.
pub fn canonical_value(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        // folds -0.0 into 0.0
        return if x == 0.0 { 0.0 } else { x };
    }
    fast_canonical(x).unwrap_or_else(|| slow_canonical(x))
}

fn slow_canonical(x: f64) -> f64 {
    format!("{x:.5e}").parse().expect("formatted float parses")
}

const POW10: [f64; 23] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19,
    1e20, 1e21, 1e22,
];

/// Scales into `[1e5, 1e6)` with an exact power of ten and rounds there.
/// Gives up (`None`) whenever the product is too close to a rounding tie or
/// a decade boundary for its one-ulp error to be ruled out.
fn fast_canonical(x: f64) -> Option<f64> {
    let a = x.abs();
    let k = 5 - a.log10().floor() as i32;
    let p = *POW10.get(usize::try_from(k).ok()?)?;
    let y = a * p;
    if !(100_000.0 + 1e-6..1_000_000.0 - 1e-6).contains(&y) {
        return None;
    }
    let frac = y - y.floor();
    if (frac - 0.5).abs() < 1e-6 {
        return None;
    }
    Some((y.round() / p).copysign(x))
}

/// Rounds a timestamp to whole microseconds.
pub fn canonical_time(t: f64) -> f64 {
    let r = (t * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn num(x: f64) -> Value {
    Value::Number(Number::from_f64(x).expect("session values are finite"))
}

fn object(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

pub fn serialize_session(session: &SessionLog) -> Vec<u8> {
    let mut out = String::new();
    let mut header = vec![
        ("v", Value::from(FORMAT_VERSION)),
        ("session_id", Value::from(session.session_id.clone())),
        ("environment", Value::from(session.environment.as_str())),
        ("gaze_hz", Value::from(session.gaze_hz)),
        ("expr_hz", Value::from(session.expr_hz)),
        ("window_s", num(canonical_value(session.window_seconds))),
    ];
    if let Some(subject) = &session.subject {
        header.push(("subject", Value::from(subject.clone())));
    }
    push_line(&mut out, &object(header));

    for frame in replay(session, Pacing::AsFastAsPossible) {
        let line = match frame {
            TaggedFrame::Gaze(g) => object([
                ("kind", Value::from("gaze")),
                ("t", num(canonical_time(g.timestamp))),
                ("dir", Value::Array(g.gaze_dir.iter().map(|&c| num(canonical_value(c))).collect())),
                (
                    "open",
                    Value::Array(vec![
                        num(canonical_value(g.eye_openness_l)),
                        num(canonical_value(g.eye_openness_r)),
                    ]),
                ),
                ("blink", Value::Bool(g.blink)),
            ]),
            TaggedFrame::Expression(e) => {
                let weights: Map<String, Value> = e
                    .weights
                    .iter()
                    .map(|(ch, &w)| (ch.name().to_string(), num(canonical_value(w))))
                    .collect();
                object([
                    ("kind", Value::from("expr")),
                    ("t", num(canonical_time(e.timestamp))),
                    ("w", Value::Object(weights)),
                ])
            }
        };
        push_line(&mut out, &line);
    }
    for (window, state) in &session.labels {
        push_line(
            &mut out,
            &object([
                ("kind", Value::from("label")),
                ("window", Value::from(*window as u64)),
                ("state", Value::from(state.as_str())),
            ]),
        );
    }
    out.into_bytes()
}

fn push_line(out: &mut String, value: &Value) {
    out.push_str(&value.to_string());
    out.push('\n');
}

struct Fields<'a> {
    line: usize,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a Value, SignalError> {
        self.map
            .get(key)
            .ok_or_else(|| SignalError::malformed(self.line, format!("missing `{key}`")))
    }

    fn f64(&self, key: &str) -> Result<f64, SignalError> {
        self.get(key)?
            .as_f64()
            .ok_or_else(|| SignalError::malformed(self.line, format!("`{key}` is not a number")))
    }

    fn u64(&self, key: &str) -> Result<u64, SignalError> {
        self.get(key)?.as_u64().ok_or_else(|| {
            SignalError::malformed(self.line, format!("`{key}` is not a non-negative integer"))
        })
    }

    fn str(&self, key: &str) -> Result<&'a str, SignalError> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| SignalError::malformed(self.line, format!("`{key}` is not a string")))
    }

    fn only(&self, allowed: &[&str]) -> Result<(), SignalError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(SignalError::malformed(self.line, format!("unexpected key `{k}`"))),
            None => Ok(()),
        }
    }

    fn numbers<const N: usize>(&self, key: &str) -> Result<[f64; N], SignalError> {
        let bad = || SignalError::malformed(self.line, format!("`{key}` must be {N} numbers"));
        let items = self.get(key)?.as_array().ok_or_else(bad)?;
        if items.len() != N {
            return Err(bad());
        }
        let mut out = [0.0; N];
        for (slot, item) in out.iter_mut().zip(items) {
            *slot = item.as_f64().ok_or_else(bad)?;
        }
        Ok(out)
    }
}

/// Parses and validates a JSONL session.
///
/// Frame lines may interleave in any order as long as each stream is strictly
/// increasing in time. A header with no further lines is a valid empty session.
pub fn parse_session(bytes: &[u8]) -> Result<SessionLog, SignalError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| SignalError::malformed(1, format!("not UTF-8: {e}")))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line, header) = lines.next().ok_or_else(|| SignalError::malformed(1, "missing header"))?;
    let header = parse_object(line, header)?;
    let h = Fields { line, map: &header };
    h.only(&["v", "session_id", "environment", "gaze_hz", "expr_hz", "window_s", "subject"])?;
    let version = h.u64("v")?;
    if version != FORMAT_VERSION {
        return Err(SignalError::malformed(line, format!("unsupported session version {version}")));
    }
    let environment: Environment = h
        .str("environment")?
        .parse()
        .map_err(|e| SignalError::malformed(line, format!("environment: {e}")))?;
    let rate = |key: &str, default: u32| -> Result<u32, SignalError> {
        if !header.contains_key(key) {
            return Ok(default);
        }
        match h.u64(key)? {
            0 => Err(SignalError::malformed(line, format!("`{key}` must be positive"))),
            r => u32::try_from(r).map_err(|_| SignalError::malformed(line, format!("`{key}` too large"))),
        }
    };
    let mut session = SessionLog::empty(h.str("session_id")?, environment);
    session.gaze_hz = rate("gaze_hz", DEFAULT_GAZE_HZ)?;
    session.expr_hz = rate("expr_hz", DEFAULT_EXPR_HZ)?;
    session.window_seconds =
        if header.contains_key("window_s") { h.f64("window_s")? } else { DEFAULT_WINDOW_SECONDS };
    if !(session.window_seconds > 0.0) {
        return Err(SignalError::malformed(line, "`window_s` must be positive"));
    }
    if header.contains_key("subject") {
        session.subject = Some(h.str("subject")?.to_string());
    }

    let mut last_expr = f64::NEG_INFINITY;
    let mut last_gaze = f64::NEG_INFINITY;
    let mut last_line = line;
    for (line, raw) in lines {
        last_line = line;
        let map = parse_object(line, raw)?;
        let f = Fields { line, map: &map };
        match f.str("kind")? {
            "expr" => {
                f.only(&["kind", "t", "w"])?;
                let t = f.f64("t")?;
                check_timestamp(line, t, &mut last_expr)?;
                let w = f
                    .get("w")?
                    .as_object()
                    .ok_or_else(|| SignalError::malformed(line, "`w` is not an object"))?;
                let mut weights = BTreeMap::new();
                for (name, value) in w {
                    let ch = ChannelId::lookup(name)
                        .ok_or_else(|| SignalError::UnknownChannel { line, name: name.clone() })?;
                    let value = value.as_f64().ok_or_else(|| {
                        SignalError::malformed(line, format!("weight `{name}` is not a number"))
                    })?;
                    weights.insert(ch, value);
                }
                check_weights(line, &weights)?;
                session.expression_stream.push(ExpressionFrame { timestamp: t, weights });
            }
            "gaze" => {
                f.only(&["kind", "t", "dir", "open", "blink"])?;
                let t = f.f64("t")?;
                check_timestamp(line, t, &mut last_gaze)?;
                let [l, r] = f.numbers::<2>("open")?;
                let blink = f
                    .get("blink")?
                    .as_bool()
                    .ok_or_else(|| SignalError::malformed(line, "`blink` is not a boolean"))?;
                let frame = GazeFrame {
                    timestamp: t,
                    gaze_dir: f.numbers::<3>("dir")?,
                    eye_openness_l: l,
                    eye_openness_r: r,
                    blink,
                };
                check_gaze(line, &frame)?;
                session.gaze_stream.push(frame);
            }
            "label" => {
                f.only(&["kind", "window", "state"])?;
                let window = f.u64("window")? as usize;
                session.labels.push((window, StateLabel::new(f.str("state")?)));
            }
            other => return Err(SignalError::malformed(line, format!("unknown record kind `{other}`"))),
        }
    }
    session.labels.sort_by_key(|(w, _)| *w);
    session.check_labels(last_line)?;
    Ok(session)
}

fn parse_object(line: usize, raw: &str) -> Result<Map<String, Value>, SignalError> {
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(SignalError::malformed(line, "record is not a JSON object")),
        Err(e) => Err(SignalError::malformed(line, e.to_string())),
    }
}
