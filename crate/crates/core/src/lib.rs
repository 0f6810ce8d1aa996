//! Consent-aware filtering of face and eye tracking streams.
//!
//! Sessions ([`signal`]) are cut into windows ([`features`]), classified
//! ([`classifier`]) and filtered per channel against policy and consent
//! ([`filter`]). [`audit`] measures what an attacker recovers from the
//! exported logs and [`eval`] scores models and latency.

pub mod audit;
pub mod classifier;
pub mod eval;
pub mod features;
pub mod filter;
pub mod signal;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/signals.md")]
    struct Signals;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/classifier.md")]
    struct Classifier;
    #[doc = include_str!("../../../book/src/filter.md")]
    struct Filter;
    #[doc = include_str!("../../../book/src/audit.md")]
    struct Audit;
}
