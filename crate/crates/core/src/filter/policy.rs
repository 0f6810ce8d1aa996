use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FilterError;
use crate::signal::{ChannelGroup, ChannelId, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelAction {
    Suppress,
    PassThrough,
    /// Quantize to the nearest multiple of the granularity.
    Coarsen(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateAction {
    WithholdWindow,
    PassThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultAction {
    Suppress,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPolicy {
    #[serde(default)]
    pub channel_rules: BTreeMap<ChannelId, ChannelAction>,
    #[serde(default)]
    pub state_rules: BTreeMap<StateLabel, StateAction>,
    pub default_action: DefaultAction,
    /// Whether exported records carry the predicted state.
    #[serde(default)]
    pub export_state: bool,
}

pub fn coarsen(value: f64, granularity: f64) -> f64 {
    (value / granularity).round() * granularity
}

impl FilterPolicy {
    pub fn suppress_all() -> FilterPolicy {
        FilterPolicy {
            channel_rules: BTreeMap::new(),
            state_rules: BTreeMap::new(),
            default_action: DefaultAction::Suppress,
            export_state: false,
        }
    }

    pub fn pass_all() -> FilterPolicy {
        FilterPolicy { default_action: DefaultAction::PassThrough, ..FilterPolicy::suppress_all() }
    }

    /// Only eye-tracker channels leave the device.
    pub fn gaze_only() -> FilterPolicy {
        let channel_rules = ChannelGroup::Gaze.channels().map(|c| (c, ChannelAction::PassThrough)).collect();
        FilterPolicy { channel_rules, ..FilterPolicy::suppress_all() }
    }

    /// Everything passes except windows classified as `Stressed`.
    pub fn withhold_stressed() -> FilterPolicy {
        let state_rules = [(StateLabel::new("Stressed"), StateAction::WithholdWindow)].into_iter().collect();
        FilterPolicy { state_rules, ..FilterPolicy::pass_all() }
    }

    pub const BUILTIN_NAMES: [&'static str; 4] = ["suppress-all", "pass-all", "gaze-only", "withhold-stressed"];

    pub fn builtin(name: &str) -> Option<FilterPolicy> {
        match name {
            "suppress-all" => Some(FilterPolicy::suppress_all()),
            "pass-all" => Some(FilterPolicy::pass_all()),
            "gaze-only" => Some(FilterPolicy::gaze_only()),
            "withhold-stressed" => Some(FilterPolicy::withhold_stressed()),
            _ => None,
        }
    }

    /// Action from the rules alone, before consent.
    pub fn rule_for(&self, channel: ChannelId) -> ChannelAction {
        self.channel_rules.get(&channel).copied().unwrap_or(match self.default_action {
            DefaultAction::Suppress => ChannelAction::Suppress,
            DefaultAction::PassThrough => ChannelAction::PassThrough,
        })
    }

    pub fn state_action(&self, state: &StateLabel) -> StateAction {
        self.state_rules.get(state).copied().unwrap_or(StateAction::PassThrough)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        for (c, a) in &self.channel_rules {
            if let ChannelAction::Coarsen(g) = a {
                if !(g.is_finite() && *g > 0.0) {
                    return Err(FilterError::InvalidPolicy(format!("{}: granularity {g} must be positive", c.name())));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policies serialize")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

impl FromStr for FilterPolicy {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p: FilterPolicy = serde_json::from_str(s).map_err(|e| FilterError::InvalidPolicy(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}
