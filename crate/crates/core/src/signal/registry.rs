//! Closed, versioned registry of every channel the pipeline knows about.
//!
//! Expression channels follow the facial-action blendshape naming used by
//! headset face-tracking runtimes. Gaze channels carry the eye tracker's raw
//! outputs, and derived channels hold per-window interpretability metrics.
//! The registry order is the canonical channel order everywhere: export
//! manifests, attacker feature layout and `BTreeMap<ChannelId, _>` iteration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Bumped whenever a channel is added, removed or reordered.
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    Expression,
    Gaze,
    Derived,
}

/// Coarse grouping used for consent grants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelGroup {
    Brow,
    Eyes,
    Cheek,
    Nose,
    Mouth,
    Jaw,
    Tongue,
    Gaze,
    Derived,
}

impl ChannelGroup {
    pub const ALL: [ChannelGroup; 9] = [
        ChannelGroup::Brow,
        ChannelGroup::Eyes,
        ChannelGroup::Cheek,
        ChannelGroup::Nose,
        ChannelGroup::Mouth,
        ChannelGroup::Jaw,
        ChannelGroup::Tongue,
        ChannelGroup::Gaze,
        ChannelGroup::Derived,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelGroup::Brow => "brow",
            ChannelGroup::Eyes => "eyes",
            ChannelGroup::Cheek => "cheek",
            ChannelGroup::Nose => "nose",
            ChannelGroup::Mouth => "mouth",
            ChannelGroup::Jaw => "jaw",
            ChannelGroup::Tongue => "tongue",
            ChannelGroup::Gaze => "gaze",
            ChannelGroup::Derived => "derived",
        }
    }

    /// Channels belonging to this group, in registry order.
    pub fn channels(self) -> impl Iterator<Item = ChannelId> {
        ChannelId::all().filter(move |c| c.group() == self)
    }
}

impl fmt::Display for ChannelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelGroup {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown name `{0}`")]
pub struct UnknownName(pub String);

struct Entry {
    name: &'static str,
    kind: ChannelKind,
    group: ChannelGroup,
}

const fn expr(name: &'static str, group: ChannelGroup) -> Entry {
    Entry { name, kind: ChannelKind::Expression, group }
}

const fn gaze(name: &'static str) -> Entry {
    Entry { name, kind: ChannelKind::Gaze, group: ChannelGroup::Gaze }
}

const fn derived(name: &'static str) -> Entry {
    Entry { name, kind: ChannelKind::Derived, group: ChannelGroup::Derived }
}

use ChannelGroup as G;

static REGISTRY: [Entry; 62] = [
    // brow
    expr("BrowLowererL", G::Brow),
    expr("BrowLowererR", G::Brow),
    expr("InnerBrowRaiserL", G::Brow),
    expr("InnerBrowRaiserR", G::Brow),
    expr("OuterBrowRaiserL", G::Brow),
    expr("OuterBrowRaiserR", G::Brow),
    // eyes and lids
    expr("EyesClosedL", G::Eyes),
    expr("EyesClosedR", G::Eyes),
    expr("EyesLookDownL", G::Eyes),
    expr("EyesLookDownR", G::Eyes),
    expr("EyesLookLeftL", G::Eyes),
    expr("EyesLookLeftR", G::Eyes),
    expr("EyesLookRightL", G::Eyes),
    expr("EyesLookRightR", G::Eyes),
    expr("EyesLookUpL", G::Eyes),
    expr("EyesLookUpR", G::Eyes),
    expr("LidTightenerL", G::Eyes),
    expr("LidTightenerR", G::Eyes),
    expr("UpperLidRaiserL", G::Eyes),
    expr("UpperLidRaiserR", G::Eyes),
    // cheeks
    expr("CheekPuffL", G::Cheek),
    expr("CheekPuffR", G::Cheek),
    expr("CheekRaiserL", G::Cheek),
    expr("CheekRaiserR", G::Cheek),
    expr("CheekSuckL", G::Cheek),
    expr("CheekSuckR", G::Cheek),
    // nose
    expr("NoseWrinklerL", G::Nose),
    expr("NoseWrinklerR", G::Nose),
    // jaw
    expr("JawDrop", G::Jaw),
    expr("JawSidewaysLeft", G::Jaw),
    expr("JawSidewaysRight", G::Jaw),
    expr("JawThrust", G::Jaw),
    // lips
    expr("LipCornerDepressorL", G::Mouth),
    expr("LipCornerDepressorR", G::Mouth),
    expr("LipCornerPullerL", G::Mouth),
    expr("LipCornerPullerR", G::Mouth),
    expr("LipPressorL", G::Mouth),
    expr("LipPressorR", G::Mouth),
    expr("LipPuckerL", G::Mouth),
    expr("LipPuckerR", G::Mouth),
    expr("LipStretcherL", G::Mouth),
    expr("LipStretcherR", G::Mouth),
    expr("LipSuckLB", G::Mouth),
    expr("LipSuckRB", G::Mouth),
    expr("LipTightenerL", G::Mouth),
    expr("LipTightenerR", G::Mouth),
    expr("LowerLipDepressorL", G::Mouth),
    expr("LowerLipDepressorR", G::Mouth),
    expr("UpperLipRaiserL", G::Mouth),
    expr("UpperLipRaiserR", G::Mouth),
    // tongue
    expr("TongueTipAlveolar", G::Tongue),
    expr("TongueTipInterdental", G::Tongue),
    // eye tracker
    gaze("GazeDirX"),
    gaze("GazeDirY"),
    gaze("GazeDirZ"),
    gaze("EyeOpennessL"),
    gaze("EyeOpennessR"),
    gaze("BlinkEvent"),
    // per-window metrics
    derived("BlinkRate"),
    derived("FixationEntropy"),
    derived("ExpressionIntensity"),
    derived("Symmetry"),
];

/// Index into the channel registry.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(u16);

impl ChannelId {
    pub const COUNT: usize = REGISTRY.len();

    pub fn all() -> impl Iterator<Item = ChannelId> + Clone {
        (0..REGISTRY.len() as u16).map(ChannelId)
    }

    pub fn of_kind(kind: ChannelKind) -> impl Iterator<Item = ChannelId> + Clone {
        ChannelId::all().filter(move |c| c.kind() == kind)
    }

    pub fn from_index(index: usize) -> Option<ChannelId> {
        (index < REGISTRY.len()).then_some(ChannelId(index as u16))
    }

    pub fn lookup(name: &str) -> Option<ChannelId> {
        REGISTRY
            .iter()
            .position(|e| e.name == name)
            .map(|i| ChannelId(i as u16))
    }

    /// Lookup for compile-time-known names; panics on a name outside the registry.
    pub fn named(name: &str) -> ChannelId {
        ChannelId::lookup(name).unwrap_or_else(|| panic!("`{name}` is not a registry channel"))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        REGISTRY[self.index()].name
    }

    pub fn kind(self) -> ChannelKind {
        REGISTRY[self.index()].kind
    }

    pub fn group(self) -> ChannelGroup {
        REGISTRY[self.index()].group
    }

    /// The opposite-side channel for bilateral channels (`...L` / `...R`,
    /// `LipSuckLB` / `LipSuckRB`).
    pub fn mirror(self) -> Option<ChannelId> {
        if self.kind() != ChannelKind::Expression {
            return None;
        }
        let name = self.name();
        let swapped = if let Some(stem) = name.strip_suffix("LB") {
            format!("{stem}RB")
        } else if let Some(stem) = name.strip_suffix("RB") {
            format!("{stem}LB")
        } else if let Some(stem) = name.strip_suffix('L') {
            format!("{stem}R")
        } else if let Some(stem) = name.strip_suffix('R') {
            format!("{stem}L")
        } else {
            return None;
        };
        ChannelId::lookup(&swapped)
    }

    /// Bilateral pairs as `(left, right)`, each listed once.
    pub fn bilateral_pairs() -> Vec<(ChannelId, ChannelId)> {
        ChannelId::of_kind(ChannelKind::Expression)
            .filter_map(|c| {
                let m = c.mirror()?;
                (c < m).then_some((c, m))
            })
            .collect()
    }
}

impl fmt::Debug for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelId::lookup(s).ok_or_else(|| UnknownName(s.to_string()))
    }
}

impl Serialize for ChannelId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ChannelId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        ChannelId::lookup(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown channel `{name}`")))
    }
}
