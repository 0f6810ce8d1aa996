use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::signal::{ChannelId, Environment, StateLabel};

/// Shared resting behavior. Every profile should use the same baseline so
/// that separation 0 makes environments and states indistinguishable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    /// Resting mean of every expression channel.
    pub rest_level: f64,
    pub eye_openness: f64,
    pub saccade_rate_hz: f64,
    pub blink_rate_per_min: f64,
    /// Standard deviation of fixation targets around the gaze center, per axis.
    pub fixation_spread_deg: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline {
            rest_level: 0.08,
            eye_openness: 0.85,
            saccade_rate_hz: 1.5,
            blink_rate_per_min: 15.0,
            fixation_spread_deg: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Mean-reversion rate of the per-channel process, 1/s.
    pub reversion_per_s: f64,
    /// Stationary standard deviation around the target mean.
    pub stationary_sd: f64,
    /// Per-window, per-channel wobble of the target mean.
    pub window_jitter_sd: f64,
    /// Standard deviation of per-subject channel offsets.
    pub subject_sd: f64,
    /// Fixation drift around the current target, degrees.
    pub drift_sd_deg: f64,
    pub saccade_duration_s: f64,
    pub blink_duration_s: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            reversion_per_s: 2.0,
            stationary_sd: 0.05,
            window_jitter_sd: 0.03,
            subject_sd: 0.03,
            drift_sd_deg: 0.3,
            saccade_duration_s: 0.04,
            blink_duration_s: 0.15,
        }
    }
}

/// Systematic deviation from the baseline caused by an environment, a state
/// or a subject. All of it is multiplied by the profile's separation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Effect {
    pub channel_offsets: BTreeMap<ChannelId, f64>,
    /// Added to every expression channel.
    pub global_offset: f64,
    pub gaze_azimuth_deg: f64,
    pub gaze_elevation_deg: f64,
    pub saccade_rate_delta_hz: f64,
    pub blink_rate_delta_per_min: f64,
    pub openness_delta: f64,
}

impl Effect {
    fn with(pairs: &[(&str, f64)]) -> Effect {
        Effect {
            channel_offsets: pairs.iter().map(|(n, v)| (ChannelId::named(n), *v)).collect(),
            ..Effect::default()
        }
    }

    pub fn channel(&self, c: ChannelId) -> f64 {
        self.global_offset + self.channel_offsets.get(&c).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub duration_s: f64,
    pub state: StateLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentProfile {
    pub environment: Environment,
    /// Scales every systematic effect; 0 makes all classes identically
    /// distributed.
    pub separation: f64,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub environment_effect: Effect,
    /// States this environment can produce and their signatures.
    pub states: BTreeMap<StateLabel, Effect>,
    pub schedule: Vec<ScheduleEntry>,
}

pub const DEFAULT_SEPARATION: f64 = 0.7;

const PROFILE_KIND: &str = "profile";

fn neutral() -> (StateLabel, Effect) {
    (StateLabel::new("Neutral"), Effect::default())
}

fn engaged() -> (StateLabel, Effect) {
    let mut e = Effect::with(&[
        ("UpperLipRaiserL", 0.09),
        ("UpperLipRaiserR", 0.1),
        ("JawDrop", 0.08),
        ("TongueTipAlveolar", 0.08),
        ("LipSuckLB", 0.03),
    ]);
    e.gaze_azimuth_deg = 9.0;
    e.gaze_elevation_deg = -6.0;
    e.saccade_rate_delta_hz = -0.6;
    (StateLabel::new("Engaged"), e)
}

fn stressed() -> (StateLabel, Effect) {
    let mut e = Effect::with(&[
        ("BrowLowererL", 0.12),
        ("BrowLowererR", 0.11),
        ("LidTightenerL", 0.1),
        ("LidTightenerR", 0.1),
        ("InnerBrowRaiserL", 0.1),
        ("InnerBrowRaiserR", 0.09),
        ("LipCornerDepressorL", 0.05),
        ("LipCornerDepressorR", 0.04),
    ]);
    e.blink_rate_delta_per_min = 10.0;
    e.openness_delta = -0.04;
    e.saccade_rate_delta_hz = 0.5;
    (StateLabel::new("Stressed"), e)
}

fn relaxed() -> (StateLabel, Effect) {
    let mut e = Effect { global_offset: -0.025, ..Effect::default() };
    e.openness_delta = -0.09;
    e.saccade_rate_delta_hz = -0.8;
    e.blink_rate_delta_per_min = -5.0;
    e.gaze_elevation_deg = -2.5;
    (StateLabel::new("Relaxed"), e)
}

fn schedule(entries: &[(f64, &str)]) -> Vec<ScheduleEntry> {
    entries.iter().map(|(d, s)| ScheduleEntry { duration_s: *d, state: StateLabel::new(*s) }).collect()
}

impl EnvironmentProfile {
    /// Fast object interaction: frequent saccades, some jaw activity.
    pub fn interactive() -> EnvironmentProfile {
        let mut effect = Effect::with(&[("JawDrop", 0.02), ("LidTightenerL", 0.01), ("LidTightenerR", 0.01)]);
        effect.saccade_rate_delta_hz = 1.6;
        EnvironmentProfile {
            environment: Environment::Interactive,
            separation: DEFAULT_SEPARATION,
            baseline: Baseline::default(),
            noise: NoiseModel::default(),
            environment_effect: effect,
            states: [neutral(), engaged(), stressed()].into_iter().collect(),
            schedule: schedule(&[(20.0, "Engaged"), (20.0, "Neutral"), (20.0, "Stressed")]),
        }
    }

    /// Emotionally curated clips: cheek and inner-brow responses.
    pub fn emotional() -> EnvironmentProfile {
        let effect = Effect::with(&[
            ("CheekRaiserL", 0.03),
            ("CheekRaiserR", 0.03),
            ("InnerBrowRaiserL", 0.02),
            ("InnerBrowRaiserR", 0.02),
            ("LipCornerPullerL", 0.03),
            ("LipCornerPullerR", 0.03),
        ]);
        EnvironmentProfile {
            environment: Environment::Emotional,
            separation: DEFAULT_SEPARATION,
            baseline: Baseline::default(),
            noise: NoiseModel::default(),
            environment_effect: effect,
            states: [neutral(), engaged(), stressed()].into_iter().collect(),
            schedule: schedule(&[(20.0, "Neutral"), (20.0, "Stressed"), (20.0, "Engaged")]),
        }
    }

    /// Calm, meditative scene: low activation, slow gaze.
    pub fn ambient() -> EnvironmentProfile {
        let effect = Effect { global_offset: -0.01, saccade_rate_delta_hz: -0.6, ..Effect::default() };
        EnvironmentProfile {
            environment: Environment::Ambient,
            separation: DEFAULT_SEPARATION,
            baseline: Baseline::default(),
            noise: NoiseModel::default(),
            environment_effect: effect,
            states: [neutral(), relaxed()].into_iter().collect(),
            schedule: schedule(&[(30.0, "Relaxed"), (30.0, "Neutral")]),
        }
    }

    pub fn builtin(environment: Environment) -> EnvironmentProfile {
        match environment {
            Environment::Interactive => EnvironmentProfile::interactive(),
            Environment::Emotional => EnvironmentProfile::emotional(),
            Environment::Ambient => EnvironmentProfile::ambient(),
        }
    }

    pub fn builtins() -> Vec<EnvironmentProfile> {
        Environment::ALL.into_iter().map(EnvironmentProfile::builtin).collect()
    }

    pub fn with_separation(mut self, separation: f64) -> EnvironmentProfile {
        self.separation = separation;
        self
    }

    pub fn hosts(&self, state: &StateLabel) -> bool {
        self.states.contains_key(state)
    }

    pub fn schedule_duration(&self) -> f64 {
        self.schedule.iter().map(|e| e.duration_s).sum()
    }

    /// Repeats the schedule cyclically, truncating the last entry, so it
    /// covers exactly `duration` seconds.
    pub fn with_duration(mut self, duration: f64) -> EnvironmentProfile {
        let cycle = std::mem::take(&mut self.schedule);
        let mut left = duration;
        for e in cycle.iter().cycle() {
            if left <= 0.0 || e.duration_s <= 0.0 {
                break;
            }
            let d = e.duration_s.min(left);
            self.schedule.push(ScheduleEntry { duration_s: d, state: e.state.clone() });
            left -= d;
        }
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidProfile(m));
        if !(0.0..=1.0).contains(&self.separation) {
            return bad(format!("separation {} not in [0, 1]", self.separation));
        }
        let n = &self.noise;
        let positive = [
            ("reversion_per_s", n.reversion_per_s),
            ("saccade_duration_s", n.saccade_duration_s),
            ("blink_duration_s", n.blink_duration_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        let non_negative = [
            ("stationary_sd", n.stationary_sd),
            ("window_jitter_sd", n.window_jitter_sd),
            ("subject_sd", n.subject_sd),
            ("drift_sd_deg", n.drift_sd_deg),
            ("fixation_spread_deg", self.baseline.fixation_spread_deg),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        let effects = std::iter::once(&self.environment_effect).chain(self.states.values());
        for e in effects {
            if let Some(c) = e.channel_offsets.keys().find(|c| c.kind() != crate::signal::ChannelKind::Expression) {
                return bad(format!("offset on non-expression channel {}", c.name()));
            }
        }
        if self.schedule.iter().any(|e| !(e.duration_s.is_finite() && e.duration_s > 0.0)) {
            return bad("schedule durations must be positive".into());
        }
        if let Some(e) = self.schedule.iter().find(|e| !self.hosts(&e.state)) {
            return bad(format!("schedule state {} has no signature", e.state));
        }
        Ok(())
    }

    /// Parses a `{"kind":"profile",...}` JSON line.
    pub fn from_json(line: &str) -> Result<EnvironmentProfile, SynthError> {
        let invalid = |m: String| SynthError::InvalidProfile(m);
        let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        let obj = value.as_object_mut().ok_or_else(|| invalid("profile line is not an object".into()))?;
        match obj.remove("kind") {
            Some(serde_json::Value::String(k)) if k == PROFILE_KIND => {}
            other => return Err(invalid(format!("expected \"kind\":\"{PROFILE_KIND}\", got {other:?}"))),
        }
        let p: EnvironmentProfile = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("profiles serialize");
        value
            .as_object_mut()
            .expect("profiles serialize to objects")
            .insert("kind".into(), serde_json::Value::String(PROFILE_KIND.into()));
        value.to_string()
    }
}

/// Reads every non-blank line of a profile file.
pub fn parse_profiles(text: &str) -> Result<Vec<EnvironmentProfile>, SynthError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(EnvironmentProfile::from_json).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for p in EnvironmentProfile::builtins() {
            p.validate().unwrap();
            assert_eq!(p.schedule_duration(), 60.0);
        }
    }

    #[test]
    fn json_round_trip() {
        for p in EnvironmentProfile::builtins() {
            let line = p.to_json();
            assert!(line.contains(r#""kind":"profile""#), "{line}");
            assert_eq!(EnvironmentProfile::from_json(&line).unwrap(), p);
        }
    }

    #[test]
    fn minimal_profile_uses_defaults() {
        let line = r#"{"kind":"profile","environment":"ambient","separation":0.5,"states":{"Neutral":{}},"schedule":[{"duration_s":10,"state":"Neutral"}]}"#;
        let p = EnvironmentProfile::from_json(line).unwrap();
        assert_eq!(p.baseline, Baseline::default());
        assert_eq!(p.noise, NoiseModel::default());
    }

    #[test]
    fn unhosted_schedule_state_rejected() {
        let line = r#"{"kind":"profile","environment":"ambient","separation":0.5,"states":{"Neutral":{}},"schedule":[{"duration_s":10,"state":"Stressed"}]}"#;
        assert!(matches!(EnvironmentProfile::from_json(line), Err(SynthError::InvalidProfile(_))));
    }

    #[test]
    fn wrong_kind_rejected() {
        let line = EnvironmentProfile::ambient().to_json().replace(r#""kind":"profile""#, r#""kind":"session""#);
        assert!(EnvironmentProfile::from_json(&line).is_err());
        let extra = EnvironmentProfile::ambient().to_json().replace(r#""kind""#, r#""colour":1,"kind""#);
        assert!(EnvironmentProfile::from_json(&extra).is_err());
    }

    #[test]
    fn unknown_channel_rejected() {
        let line = r#"{"kind":"profile","environment":"ambient","separation":0.5,"states":{"Neutral":{"channel_offsets":{"Frown":0.2}}},"schedule":[]}"#;
        assert!(EnvironmentProfile::from_json(line).is_err());
    }

    #[test]
    fn with_duration_cycles() {
        let p = EnvironmentProfile::ambient().with_duration(75.0);
        let d: Vec<f64> = p.schedule.iter().map(|e| e.duration_s).collect();
        assert_eq!(d, vec![30.0, 30.0, 15.0]);
        assert_eq!(p.schedule[2].state, StateLabel::new("Relaxed"));
    }
}
