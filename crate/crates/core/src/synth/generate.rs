use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EnvironmentProfile, SynthError};
use crate::signal::{
    canonical_time, canonical_value, ChannelId, ChannelKind, ExpressionFrame, GazeFrame, SessionLog, StateLabel,
    DEFAULT_EXPR_HZ, DEFAULT_GAZE_HZ, DEFAULT_WINDOW_SECONDS, MAX_SESSION_SECONDS,
};

/// Stable individual traits of a synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTraits {
    pub id: String,
    /// Offsets in units of the profile's subject standard deviation.
    pub channel_offsets: BTreeMap<ChannelId, f64>,
    pub gaze_azimuth_deg: f64,
    pub gaze_elevation_deg: f64,
}

impl SubjectTraits {
    pub fn draw<R: Rng>(id: impl Into<String>, rng: &mut R) -> SubjectTraits {
        let channel_offsets = ChannelId::of_kind(ChannelKind::Expression)
            .map(|c| (c, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        SubjectTraits {
            id: id.into(),
            channel_offsets,
            gaze_azimuth_deg: 4.0 * rng.sample::<f64, _>(StandardNormal),
            gaze_elevation_deg: 3.0 * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn direction(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let v = [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()];
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.map(|c| canonical_value(c / n))
}

/// Channels written to the expression stream. Look directions are left to
/// the gaze stream; eye closure is written from the eye-openness process.
fn emitted_channels() -> Vec<ChannelId> {
    ChannelId::of_kind(ChannelKind::Expression).filter(|c| !c.name().starts_with("EyesLook")).collect()
}

struct StateTimeline<'a> {
    /// `(end_time, state)` in schedule order.
    ends: Vec<(f64, &'a StateLabel)>,
}

impl<'a> StateTimeline<'a> {
    fn new(profile: &'a EnvironmentProfile) -> StateTimeline<'a> {
        let mut t = 0.0;
        let ends = profile
            .schedule
            .iter()
            .map(|e| {
                t += e.duration_s;
                (t, &e.state)
            })
            .collect();
        StateTimeline { ends }
    }

    fn at(&self, t: f64) -> &'a StateLabel {
        let i = self.ends.partition_point(|(end, _)| *end <= t);
        self.ends[i.min(self.ends.len() - 1)].1
    }
}

/// Generates a session following `profile`'s schedule, which must cover
/// exactly `duration` seconds.
pub fn generate_session(profile: &EnvironmentProfile, duration: f64, seed: u64) -> Result<SessionLog, SynthError> {
    generate_session_for(profile, duration, seed, None)
}

pub fn generate_session_for(
    profile: &EnvironmentProfile,
    duration: f64,
    seed: u64,
    subject: Option<&SubjectTraits>,
) -> Result<SessionLog, SynthError> {
    profile.validate()?;
    if !(duration.is_finite() && duration > 0.0 && duration <= MAX_SESSION_SECONDS) {
        return Err(SynthError::InvalidProfile(format!("duration {duration} must be in (0, {MAX_SESSION_SECONDS}]")));
    }
    let scheduled = profile.schedule_duration();
    if (scheduled - duration).abs() > 1e-6 {
        return Err(SynthError::InvalidProfile(format!(
            "schedule covers {scheduled} s but the session lasts {duration} s"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timeline = StateTimeline::new(profile);
    let ws = DEFAULT_WINDOW_SECONDS;
    let sep = profile.separation;
    let base = &profile.baseline;
    let noise = &profile.noise;
    let env = &profile.environment_effect;
    let effect = |state: &StateLabel| &profile.states[state];
    let (subj_az, subj_el) = subject.map_or((0.0, 0.0), |s| (s.gaze_azimuth_deg, s.gaze_elevation_deg));

    // eye tracker first, so its openness trace can drive eye closure
    let gaze_dt = 1.0 / DEFAULT_GAZE_HZ as f64;
    let n_gaze = (duration * DEFAULT_GAZE_HZ as f64).round() as usize;
    let mut gaze_stream = Vec::with_capacity(n_gaze);
    let mut openness_trace = Vec::with_capacity(n_gaze);
    let mut pos = (sep * subj_az, sep * subj_el);
    let mut target = pos;
    let mut saccade: Option<((f64, f64), f64)> = None; // (start position, elapsed)
    let mut blink_start: Option<f64> = None;
    let openness_decay = (-noise.reversion_per_s * gaze_dt).exp();
    let openness_kick = 0.03 * (1.0 - openness_decay * openness_decay).sqrt();
    let mut openness_noise = 0.0;
    for i in 0..n_gaze {
        let t = i as f64 * gaze_dt;
        let s = effect(timeline.at(t));
        let center = (
            sep * (env.gaze_azimuth_deg + s.gaze_azimuth_deg + subj_az),
            sep * (env.gaze_elevation_deg + s.gaze_elevation_deg + subj_el),
        );
        let rate = (base.saccade_rate_hz + sep * (env.saccade_rate_delta_hz + s.saccade_rate_delta_hz)).max(0.05);
        if saccade.is_none() && rng.random::<f64>() < rate * gaze_dt {
            let spread = base.fixation_spread_deg;
            target = (
                (center.0 + spread * normal(&mut rng)).clamp(-60.0, 60.0),
                (center.1 + spread * normal(&mut rng)).clamp(-45.0, 45.0),
            );
            saccade = Some((pos, 0.0));
        }
        match saccade {
            Some((from, elapsed)) => {
                let f = ((elapsed + gaze_dt) / noise.saccade_duration_s).min(1.0);
                pos = (from.0 + f * (target.0 - from.0), from.1 + f * (target.1 - from.1));
                saccade = (f < 1.0).then_some((from, elapsed + gaze_dt));
            }
            None => {
                pos = (
                    target.0 + noise.drift_sd_deg * normal(&mut rng),
                    target.1 + noise.drift_sd_deg * normal(&mut rng),
                );
            }
        }

        let blink_rate = (base.blink_rate_per_min + sep * (env.blink_rate_delta_per_min + s.blink_rate_delta_per_min))
            .max(0.0)
            / 60.0;
        let mut blink = false;
        if blink_start.is_some_and(|b| t - b >= noise.blink_duration_s) {
            blink_start = None;
        }
        if blink_start.is_none() && rng.random::<f64>() < blink_rate * gaze_dt {
            blink_start = Some(t);
            blink = true;
        }
        openness_noise = openness_decay * openness_noise + openness_kick * normal(&mut rng);
        let level = base.eye_openness + sep * (env.openness_delta + s.openness_delta) + openness_noise;
        let dip = blink_start.map_or(1.0, |b| {
            let phase = (t - b) / noise.blink_duration_s;
            1.0 - (std::f64::consts::PI * phase).sin().max(0.0)
        });
        let open = canonical_value((level * dip).clamp(0.0, 1.0));
        openness_trace.push(open);
        gaze_stream.push(GazeFrame {
            timestamp: canonical_time(t),
            gaze_dir: direction(pos.0, pos.1),
            eye_openness_l: open,
            eye_openness_r: open,
            blink,
        });
    }

    let channels = emitted_channels();
    let closed_l = ChannelId::named("EyesClosedL");
    let closed_r = ChannelId::named("EyesClosedR");
    let expr_dt = 1.0 / DEFAULT_EXPR_HZ as f64;
    let n_expr = (duration * DEFAULT_EXPR_HZ as f64).round() as usize;
    let decay = (-noise.reversion_per_s * expr_dt).exp();
    let kick = noise.stationary_sd * (1.0 - decay * decay).sqrt();
    let subject_offset =
        |c: ChannelId| subject.map_or(0.0, |s| noise.subject_sd * s.channel_offsets.get(&c).copied().unwrap_or(0.0));
    let n_windows = (duration / ws).ceil() as usize;
    let mut jitter = vec![vec![0.0; channels.len()]; n_windows.max(1)];
    for row in &mut jitter {
        for j in row.iter_mut() {
            *j = noise.window_jitter_sd * normal(&mut rng);
        }
    }
    let mut deviation = vec![0.0; channels.len()];
    for d in deviation.iter_mut() {
        *d = noise.stationary_sd * normal(&mut rng);
    }
    let mut expression_stream = Vec::with_capacity(n_expr);
    for i in 0..n_expr {
        let t = i as f64 * expr_dt;
        let s = effect(timeline.at(t));
        let w = ((t / ws) as usize).min(jitter.len() - 1);
        let mut weights = BTreeMap::new();
        for (k, &c) in channels.iter().enumerate() {
            let value = if c == closed_l || c == closed_r {
                let g = (i * DEFAULT_GAZE_HZ as usize / DEFAULT_EXPR_HZ as usize).min(openness_trace.len() - 1);
                1.0 - openness_trace[g]
            } else {
                deviation[k] = decay * deviation[k] + kick * normal(&mut rng);
                let target = base.rest_level + sep * (env.channel(c) + s.channel(c) + subject_offset(c)) + jitter[w][k];
                target + deviation[k]
            };
            weights.insert(c, canonical_value(value.clamp(0.0, 1.0)));
        }
        expression_stream.push(ExpressionFrame { timestamp: canonical_time(t), weights });
    }

    let full_windows = ((duration / ws) + 1e-6).floor() as usize;
    let labels = (0..full_windows).map(|k| (k, timeline.at((k as f64 + 0.5) * ws).clone())).collect();
    let session = SessionLog {
        session_id: format!("{}-{seed:016x}", profile.environment),
        environment: profile.environment,
        subject: subject.map(|s| s.id.clone()),
        gaze_hz: DEFAULT_GAZE_HZ,
        expr_hz: DEFAULT_EXPR_HZ,
        window_seconds: ws,
        expression_stream,
        gaze_stream,
        labels,
    };
    debug_assert!(session.validate().is_ok());
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::expression_means;
    use crate::signal::serialize_session;

    fn mean_angular_velocity(s: &SessionLog) -> f64 {
        let g = &s.gaze_stream;
        let total: f64 = g
            .windows(2)
            .map(|w| {
                let dot: f64 = w[0].gaze_dir.iter().zip(&w[1].gaze_dir).map(|(a, b)| a * b).sum();
                dot.clamp(-1.0, 1.0).acos().to_degrees() / (w[1].timestamp - w[0].timestamp)
            })
            .sum();
        total / (g.len() - 1) as f64
    }

    #[test]
    fn ambient_session_is_calm() {
        let s = generate_session(&EnvironmentProfile::ambient(), 60.0, 7).unwrap();
        let means = expression_means(&s.expression_stream);
        for name in ["CheekRaiserL", "CheekRaiserR", "BrowLowererL", "BrowLowererR"] {
            assert!(means[&ChannelId::named(name)] < 0.15, "{name} = {}", means[&ChannelId::named(name)]);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = EnvironmentProfile::interactive();
        let a = serialize_session(&generate_session(&p, 60.0, 3).unwrap());
        let b = serialize_session(&generate_session(&p, 60.0, 3).unwrap());
        assert_eq!(a, b);
        let c = serialize_session(&generate_session(&p, 60.0, 4).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn interactive_gaze_moves_faster() {
        for seed in 0..20 {
            let fast = generate_session(&EnvironmentProfile::interactive(), 60.0, seed).unwrap();
            let slow = generate_session(&EnvironmentProfile::ambient(), 60.0, seed).unwrap();
            assert!(mean_angular_velocity(&fast) > mean_angular_velocity(&slow), "seed {seed}");
        }
    }

    #[test]
    fn frames_satisfy_stream_invariants() {
        for p in EnvironmentProfile::builtins() {
            let s = generate_session(&p, 60.0, 11).unwrap();
            s.validate().unwrap();
            assert_eq!(s.gaze_stream.len(), 5400);
            assert_eq!(s.expression_stream.len(), 1800);
            assert_eq!(s.labels.len(), 6);
            assert!((s.duration() - 60.0).abs() < 1e-6);
        }
    }

    #[test]
    fn labels_follow_schedule() {
        let s = generate_session(&EnvironmentProfile::ambient(), 60.0, 1).unwrap();
        let names: Vec<&str> = s.labels.iter().map(|(_, l)| l.as_str()).collect();
        assert_eq!(names, ["Relaxed", "Relaxed", "Relaxed", "Neutral", "Neutral", "Neutral"]);
    }

    #[test]
    fn schedule_mismatch_rejected() {
        assert!(matches!(
            generate_session(&EnvironmentProfile::ambient(), 50.0, 1),
            Err(SynthError::InvalidProfile(_))
        ));
        assert!(matches!(generate_session(&EnvironmentProfile::ambient(), 0.0, 1), Err(SynthError::InvalidProfile(_))));
    }

    #[test]
    fn stressed_blinks_more_than_relaxed() {
        let mut p = EnvironmentProfile::interactive();
        p.schedule = vec![super::super::ScheduleEntry { duration_s: 600.0, state: StateLabel::new("Stressed") }];
        let stressed = generate_session(&p, 600.0, 2).unwrap();
        let mut q = EnvironmentProfile::ambient();
        q.schedule = vec![super::super::ScheduleEntry { duration_s: 600.0, state: StateLabel::new("Relaxed") }];
        let relaxed = generate_session(&q, 600.0, 2).unwrap();
        let blinks = |s: &SessionLog| s.gaze_stream.iter().filter(|g| g.blink).count();
        assert!(blinks(&stressed) > blinks(&relaxed));
    }
}
