//! Psychological-cue annotation of feature windows.
//!
//! A cue family is active when any of its channels exceeds the activation
//! threshold. Composite patterns are conjunctions of constituent channel sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::signal::ChannelId;

pub const DEFAULT_CUE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CueFamily {
    BrowLowerer,
    InnerBrowRaiser,
    CheekRaiser,
    EyesClosed,
    EyesLookDirection,
    JawDrop,
    LipCornerPuller,
    LipPucker,
    LidTightener,
    UpperLipRaiser,
    TongueTipMotion,
}

impl CueFamily {
    pub const ALL: [CueFamily; 11] = [
        CueFamily::BrowLowerer,
        CueFamily::InnerBrowRaiser,
        CueFamily::CheekRaiser,
        CueFamily::EyesClosed,
        CueFamily::EyesLookDirection,
        CueFamily::JawDrop,
        CueFamily::LipCornerPuller,
        CueFamily::LipPucker,
        CueFamily::LidTightener,
        CueFamily::UpperLipRaiser,
        CueFamily::TongueTipMotion,
    ];

    pub fn channels(self) -> Vec<ChannelId> {
        let names: &[&str] = match self {
            CueFamily::BrowLowerer => &["BrowLowererL", "BrowLowererR"],
            CueFamily::InnerBrowRaiser => &["InnerBrowRaiserL", "InnerBrowRaiserR"],
            CueFamily::CheekRaiser => &["CheekRaiserL", "CheekRaiserR"],
            CueFamily::EyesClosed => &["EyesClosedL", "EyesClosedR"],
            CueFamily::EyesLookDirection => &[
                "EyesLookDownL",
                "EyesLookDownR",
                "EyesLookLeftL",
                "EyesLookLeftR",
                "EyesLookRightL",
                "EyesLookRightR",
                "EyesLookUpL",
                "EyesLookUpR",
            ],
            CueFamily::JawDrop => &["JawDrop"],
            CueFamily::LipCornerPuller => &["LipCornerPullerL", "LipCornerPullerR"],
            CueFamily::LipPucker => &["LipPuckerL", "LipPuckerR"],
            CueFamily::LidTightener => &["LidTightenerL", "LidTightenerR"],
            CueFamily::UpperLipRaiser => &["UpperLipRaiserL", "UpperLipRaiserR"],
            CueFamily::TongueTipMotion => &["TongueTipAlveolar", "TongueTipInterdental"],
        };
        names.iter().map(|n| ChannelId::named(n)).collect()
    }

    pub fn physiological_meaning(self) -> &'static str {
        match self {
            CueFamily::BrowLowerer => "Brow tension",
            CueFamily::InnerBrowRaiser => "Inner brow lift",
            CueFamily::CheekRaiser => "Cheek elevation",
            CueFamily::EyesClosed => "Blinking",
            CueFamily::EyesLookDirection => "Gaze movement",
            CueFamily::JawDrop => "Mouth open",
            CueFamily::LipCornerPuller => "Smile tension",
            CueFamily::LipPucker => "Lips pushed forward",
            CueFamily::LidTightener => "Squint",
            CueFamily::UpperLipRaiser => "Upper lip pull",
            CueFamily::TongueTipMotion => "Tongue articulation",
        }
    }

    pub fn psychological_cue(self) -> &'static str {
        match self {
            CueFamily::BrowLowerer => "Confusion, focus",
            CueFamily::InnerBrowRaiser => "Sadness, surprise",
            CueFamily::CheekRaiser => "Genuine smile, joy",
            CueFamily::EyesClosed => "Fatigue, disengagement",
            CueFamily::EyesLookDirection => "Attention, curiosity",
            CueFamily::JawDrop => "Shock, speech readiness",
            CueFamily::LipCornerPuller => "Positivity, friendliness",
            CueFamily::LipPucker => "Doubt, contemplation",
            CueFamily::LidTightener => "Irritation, tension",
            CueFamily::UpperLipRaiser => "Disgust, disapproval",
            CueFamily::TongueTipMotion => "Speaking intent, discomfort",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompositePattern {
    /// Inner brow raiser, cheek raiser and eyes closed together.
    EmotionalReaction,
    /// Lip pucker, jaw drop and lid tightener together.
    HesitationPressure,
    /// Eyes looking right, jaw drop and alveolar tongue tip together.
    CognitiveEngagement,
}

impl CompositePattern {
    pub const ALL: [CompositePattern; 3] = [
        CompositePattern::EmotionalReaction,
        CompositePattern::HesitationPressure,
        CompositePattern::CognitiveEngagement,
    ];

    /// Constituents; each must have at least one channel above threshold.
    pub fn constituents(self) -> Vec<Vec<ChannelId>> {
        let sets: &[&[&str]] = match self {
            CompositePattern::EmotionalReaction => &[
                &["InnerBrowRaiserL", "InnerBrowRaiserR"],
                &["CheekRaiserL", "CheekRaiserR"],
                &["EyesClosedL", "EyesClosedR"],
            ],
            CompositePattern::HesitationPressure => &[
                &["LipPuckerL", "LipPuckerR"],
                &["JawDrop"],
                &["LidTightenerL", "LidTightenerR"],
            ],
            CompositePattern::CognitiveEngagement => &[
                &["EyesLookRightL", "EyesLookRightR"],
                &["JawDrop"],
                &["TongueTipAlveolar"],
            ],
        };
        sets.iter().map(|s| s.iter().map(|n| ChannelId::named(n)).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CueAnnotation {
    pub window_index: usize,
    /// Active families and their psychological cue.
    pub cues: BTreeMap<CueFamily, String>,
    pub composite_patterns: BTreeSet<CompositePattern>,
}

impl CueAnnotation {
    pub fn is_empty(&self) -> bool {
        self.cues.is_empty() && self.composite_patterns.is_empty()
    }
}

/// Annotates any subset of channel values. Channels absent from `values`
/// never count as active.
pub fn annotate_channels(
    window_index: usize,
    values: &BTreeMap<ChannelId, f64>,
    threshold: f64,
) -> CueAnnotation {
    let active = |channels: &[ChannelId]| channels.iter().any(|c| values.get(c).is_some_and(|&v| v > threshold));
    let cues = CueFamily::ALL
        .into_iter()
        .filter(|f| active(&f.channels()))
        .map(|f| (f, f.psychological_cue().to_string()))
        .collect();
    let composite_patterns = CompositePattern::ALL
        .into_iter()
        .filter(|p| p.constituents().iter().all(|set| active(set)))
        .collect();
    CueAnnotation { window_index, cues, composite_patterns }
}

/// Annotates an unnormalized feature vector.
pub fn annotate_cues(fv: &FeatureVector, threshold: f64) -> CueAnnotation {
    debug_assert!(!fv.normalized, "cue thresholds apply to raw intensities");
    annotate_channels(fv.window_index, &fv.to_channel_map(), threshold)
}
