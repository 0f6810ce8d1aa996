//! Labeled synthetic sessions for the three experiment environments.
//!
//! Expression channels follow mean-reverting noise around targets built from
//! a shared baseline plus environment, state and subject effects, all scaled
//! by the profile's separation. Gaze alternates fixations and saccades, and
//! blinks arrive as a Poisson process that dips eye openness.

mod generate;
mod profile;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use generate::{generate_session, generate_session_for, SubjectTraits};
pub use profile::{
    parse_profiles, Baseline, Effect, EnvironmentProfile, NoiseModel, ScheduleEntry, DEFAULT_SEPARATION,
};

use crate::features::{labeled_features, window_truth, FeatureError, LabeledFeatures, WindowTruth};
use crate::signal::{SessionLog, StateLabel, DEFAULT_WINDOW_SECONDS};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("infeasible dataset spec: {0}")]
    InfeasibleSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_samples: usize,
    pub window_seconds: f64,
    pub label_set: Vec<StateLabel>,
    pub seed: u64,
    /// Per-label window counts; balanced when absent.
    pub class_counts: Option<BTreeMap<StateLabel, usize>>,
    pub n_subjects: usize,
    /// Longest session, in windows.
    pub max_session_windows: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_samples: 930,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            label_set: StateLabel::default_set(),
            seed: 0,
            class_counts: None,
            n_subjects: 12,
            max_session_windows: 30,
        }
    }
}

impl DatasetSpec {
    pub fn with_seed(seed: u64) -> DatasetSpec {
        DatasetSpec { seed, ..DatasetSpec::default() }
    }

    /// Window count per label, in label-set order. Balanced counts hand the
    /// remainder to the first labels.
    pub fn counts(&self) -> Result<Vec<usize>, SynthError> {
        let bad = |m: String| Err(SynthError::InfeasibleSpec(m));
        let k = self.label_set.len();
        if k == 0 {
            return bad("empty label set".into());
        }
        if self.n_samples < k {
            return bad(format!("{} samples cannot cover {k} labels", self.n_samples));
        }
        match &self.class_counts {
            None => Ok((0..k).map(|i| self.n_samples / k + usize::from(i < self.n_samples % k)).collect()),
            Some(map) => {
                if let Some(extra) = map.keys().find(|l| !self.label_set.contains(l)) {
                    return bad(format!("count given for unknown label {extra}"));
                }
                let counts: Vec<usize> = self.label_set.iter().map(|l| map.get(l).copied().unwrap_or(0)).collect();
                if counts.contains(&0) {
                    return bad("every label needs at least one window".into());
                }
                if counts.iter().sum::<usize>() != self.n_samples {
                    return bad("class counts do not sum to n_samples".into());
                }
                Ok(counts)
            }
        }
    }
}

/// How one corpus session will be generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub profile: usize,
    pub subject: usize,
    pub seed: u64,
    pub schedule: Vec<ScheduleEntry>,
}

/// A planned corpus. Sessions are generated on demand, since a full corpus of
/// raw frames is far larger than its features.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: DatasetSpec,
    pub profiles: Vec<EnvironmentProfile>,
    pub subjects: Vec<SubjectTraits>,
    pub plans: Vec<SessionPlan>,
}

impl SyntheticCorpus {
    pub fn session_count(&self) -> usize {
        self.plans.len()
    }

    pub fn labeled_window_count(&self) -> usize {
        self.plans.iter().map(|p| p.schedule.iter().map(|e| e.duration_s).sum::<f64>()).sum::<f64>().round() as usize
            / self.spec.window_seconds as usize
    }

    pub fn session(&self, index: usize) -> SessionLog {
        let plan = &self.plans[index];
        let mut profile = self.profiles[plan.profile].clone();
        profile.schedule = plan.schedule.clone();
        let duration = profile.schedule_duration();
        let mut s = generate_session_for(&profile, duration, plan.seed, Some(&self.subjects[plan.subject]))
            .expect("plans are validated when the corpus is built");
        s.session_id = plan.session_id.clone();
        s
    }

    pub fn sessions(&self) -> impl Iterator<Item = SessionLog> + '_ {
        (0..self.plans.len()).map(|i| self.session(i))
    }

    /// Feature vectors of every labeled window, session by session.
    pub fn labeled_features(&self) -> Result<LabeledFeatures, FeatureError> {
        let mut out = LabeledFeatures::default();
        for s in self.sessions() {
            let part = labeled_features(std::slice::from_ref(&s))?;
            out.vectors.extend(part.vectors);
            out.labels.extend(part.labels);
        }
        Ok(out)
    }

    pub fn window_truth(&self) -> Vec<WindowTruth> {
        self.sessions().flat_map(|s| window_truth(std::slice::from_ref(&s))).collect()
    }
}

/// Plans exactly `spec.n_samples` labeled windows over `profiles`. Each
/// label's windows are dealt round-robin to the profiles hosting it, shuffled
/// within each profile and cut into sessions of at most
/// `spec.max_session_windows` windows; subjects rotate across sessions.
pub fn generate_corpus(spec: &DatasetSpec, profiles: &[EnvironmentProfile]) -> Result<SyntheticCorpus, SynthError> {
    let counts = spec.counts()?;
    if spec.window_seconds != DEFAULT_WINDOW_SECONDS {
        return Err(SynthError::InfeasibleSpec(format!(
            "generator emits {DEFAULT_WINDOW_SECONDS} s windows, spec asks for {}",
            spec.window_seconds
        )));
    }
    if spec.n_subjects == 0 || spec.max_session_windows == 0 {
        return Err(SynthError::InfeasibleSpec("n_subjects and max_session_windows must be positive".into()));
    }
    for p in profiles {
        p.validate()?;
    }
    let mut per_profile: Vec<Vec<StateLabel>> = vec![Vec::new(); profiles.len()];
    for (label, &n) in spec.label_set.iter().zip(&counts) {
        let hosts: Vec<usize> = (0..profiles.len()).filter(|&i| profiles[i].hosts(label)).collect();
        if hosts.is_empty() {
            return Err(SynthError::InfeasibleSpec(format!("no profile produces {label}")));
        }
        for j in 0..n {
            per_profile[hosts[j % hosts.len()]].push(label.clone());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let subjects: Vec<SubjectTraits> =
        (0..spec.n_subjects).map(|i| SubjectTraits::draw(format!("S{:02}", i + 1), &mut rng)).collect();
    let ws = spec.window_seconds;
    let mut plans = Vec::new();
    for (p, labels) in per_profile.iter_mut().enumerate() {
        labels.shuffle(&mut rng);
        for chunk in labels.chunks(spec.max_session_windows) {
            let mut schedule: Vec<ScheduleEntry> = Vec::new();
            for label in chunk {
                match schedule.last_mut() {
                    Some(e) if &e.state == label => e.duration_s += ws,
                    _ => schedule.push(ScheduleEntry { duration_s: ws, state: label.clone() }),
                }
            }
            let index = plans.len();
            plans.push(SessionPlan {
                session_id: format!("{}-{:03}", profiles[p].environment, index),
                profile: p,
                subject: index % spec.n_subjects,
                seed: rng.random(),
                schedule,
            });
        }
    }
    Ok(SyntheticCorpus { spec: spec.clone(), profiles: profiles.to_vec(), subjects, plans })
}
