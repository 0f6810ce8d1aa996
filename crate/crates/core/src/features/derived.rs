use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{window_frames, FeatureError, WindowFrames};
use crate::signal::{ChannelId, ChannelKind, SessionLog};

/// 2 elevation bands × 4 azimuth quadrants.
pub const GAZE_SECTORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    /// Blinks per minute.
    pub blink_rate: f64,
    /// Shannon entropy of gaze-sector occupancy, in bits.
    pub fixation_entropy: f64,
    /// Mean activation over all expression channels.
    pub expression_intensity: f64,
    /// Mean |left - right| over bilateral channel pairs.
    pub symmetry: f64,
}

/// Sector index of a look direction: elevation band (down/up) times four
/// azimuth quadrants measured from straight ahead.
pub fn gaze_sector(dir: [f64; 3]) -> usize {
    let [x, y, z] = dir;
    let azimuth = x.atan2(z); // (-pi, pi]
    let quadrant = ((azimuth + std::f64::consts::PI) / std::f64::consts::FRAC_PI_2).floor() as usize;
    let band = usize::from(y >= 0.0);
    band * 4 + quadrant.min(3)
}

/// Entropy in bits of a histogram; empty histograms have zero entropy.
pub fn fixation_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single occupied sector gives -0.0
    h.max(0.0)
}

pub(super) fn compute(window: &WindowFrames<'_>, values: &BTreeMap<ChannelId, f64>) -> DerivedMetrics {
    let blinks = window.gaze.iter().filter(|g| g.blink).count();
    let mut sectors = [0usize; GAZE_SECTORS];
    for g in window.gaze {
        sectors[gaze_sector(g.gaze_dir)] += 1;
    }
    let get = |c: &ChannelId| values.get(c).copied().unwrap_or(0.0);
    let expr: Vec<f64> = ChannelId::of_kind(ChannelKind::Expression).map(|c| get(&c)).collect();
    let pairs = ChannelId::bilateral_pairs();
    let symmetry = pairs.iter().map(|(l, r)| (get(l) - get(r)).abs()).sum::<f64>() / pairs.len() as f64;
    DerivedMetrics {
        blink_rate: 60.0 * blinks as f64 / window.seconds,
        fixation_entropy: fixation_entropy(&sectors),
        expression_intensity: expr.iter().sum::<f64>() / expr.len() as f64,
        symmetry,
    }
}

pub fn derived_metrics(session: &SessionLog, window_index: usize) -> Result<DerivedMetrics, FeatureError> {
    let window = window_frames(session, window_index, session.window_seconds)?;
    let summary = super::summarize(&window);
    Ok(compute(&window, &summary.values))
}
