use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrguard::features::WindowSummary;
use xrguard::filter::{
    filter_summary, resolve_action, ChannelAction, ConsentRecord, ConsentStore, Decision, DefaultAction,
    FilterOutcome, FilterPolicy, NoPrompt, RedactedLog, Resolution, ResolvedPolicy, StateAction,
};
use xrguard::signal::{ChannelGroup, ChannelId, StateLabel};

fn random_summary(rng: &mut impl Rng, window_index: usize) -> WindowSummary {
    WindowSummary { window_index, values: ChannelId::all().map(|c| (c, rng.random::<f64>())).collect() }
}

fn random_policy(rng: &mut impl Rng) -> FilterPolicy {
    let mut p = if rng.random_bool(0.5) { FilterPolicy::suppress_all() } else { FilterPolicy::pass_all() };
    for c in ChannelId::all() {
        match rng.random_range(0..4) {
            0 => {}
            1 => {
                p.channel_rules.insert(c, ChannelAction::Suppress);
            }
            2 => {
                p.channel_rules.insert(c, ChannelAction::PassThrough);
            }
            _ => {
                let g = *[0.1, 0.25, 0.5].choose(rng).unwrap();
                p.channel_rules.insert(c, ChannelAction::Coarsen(g));
            }
        }
    }
    for s in StateLabel::default_set() {
        if rng.random_bool(0.2) {
            p.state_rules.insert(s, StateAction::WithholdWindow);
        }
    }
    p.export_state = rng.random_bool(0.5);
    p
}

fn random_consent(rng: &mut impl Rng) -> ConsentRecord {
    let mut r = ConsentRecord::new("S01");
    for g in ChannelGroup::ALL {
        match rng.random_range(0..4) {
            0 => {}
            1 => r.set(g, Decision::Allow, 0.0),
            2 => r.set(g, Decision::Deny, 0.0),
            _ => r.set(g, Decision::Ask, 0.0),
        }
    }
    r
}

fn json_number(v: f64) -> String {
    serde_json::to_string(&v).unwrap()
}

fn tokens(line: &str) -> BTreeSet<&str> {
    line.split(|c: char| matches!(c, ',' | ':' | '{' | '}')).collect()
}

/// Suppressed channels whose key or exact value appears in `line`.
fn leaks(line: &str, summary: &WindowSummary, resolved: &ResolvedPolicy) -> Vec<ChannelId> {
    let toks = tokens(line);
    ChannelId::all()
        .filter(|c| resolved.resolution(*c).is_suppressed())
        .filter(|c| line.contains(&format!("\"{}\"", c.name())) || toks.contains(json_number(summary.get(*c)).as_str()))
        .collect()
}

#[test]
fn scanner_finds_planted_leaks() {
    let summary = random_summary(&mut ChaCha8Rng::seed_from_u64(1), 0);
    let everyone = ConsentRecord::uniform("S01", Decision::Allow, 0.0);
    let open = filter_summary(&summary, "s", &StateLabel::new("Neutral"), &ResolvedPolicy::new(&FilterPolicy::pass_all(), &everyone));
    let strict = ResolvedPolicy::new(&FilterPolicy::gaze_only(), &everyone);
    let found = leaks(&open.record().unwrap().to_json(), &summary, &strict);
    assert_eq!(found.len(), ChannelId::COUNT - ChannelGroup::Gaze.channels().count());
    let closed = filter_summary(&summary, "s", &StateLabel::new("Neutral"), &strict);
    assert!(leaks(&closed.record().unwrap().to_json(), &summary, &strict).is_empty());
}

#[test]
fn fuzzed_exports_never_contain_suppressed_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF11);
    let states = StateLabel::default_set();
    let (mut scanned, mut suppressed_checks) = (0usize, 0usize);
    for i in 0..100_000 {
        let summary = random_summary(&mut rng, i % 500);
        let policy = random_policy(&mut rng);
        let consent = random_consent(&mut rng);
        let state = states.choose(&mut rng).unwrap();
        let resolved = ResolvedPolicy::new(&policy, &consent);
        let FilterOutcome::Exported(record) = filter_summary(&summary, &format!("fuzz-{i}"), state, &resolved) else {
            continue;
        };
        for c in leaks(&record.to_json(), &summary, &resolved) {
            panic!("window {i}: suppressed {} leaked", c.name());
        }
        suppressed_checks += resolved.resolutions().iter().filter(|r| r.is_suppressed()).count();
        assert_eq!(record.manifest().len(), ChannelId::COUNT);
        scanned += 1;
    }
    assert!(scanned > 50_000, "only {scanned} records scanned");
    assert!(suppressed_checks > 1_000_000);
}

fn arb_decision() -> impl Strategy<Value = Option<Decision>> {
    prop_oneof![Just(None), Just(Some(Decision::Allow)), Just(Some(Decision::Deny)), Just(Some(Decision::Ask))]
}

fn arb_consent() -> impl Strategy<Value = ConsentRecord> {
    prop::collection::vec(arb_decision(), ChannelGroup::ALL.len()).prop_map(|ds| {
        let mut r = ConsentRecord::new("S01");
        for (g, d) in ChannelGroup::ALL.into_iter().zip(ds) {
            if let Some(d) = d {
                r.set(g, d, 0.0);
            }
        }
        r
    })
}

fn arb_policy() -> impl Strategy<Value = FilterPolicy> {
    (any::<u64>(), any::<bool>()).prop_map(|(seed, pass)| {
        let mut p = random_policy(&mut ChaCha8Rng::seed_from_u64(seed));
        p.default_action = if pass { DefaultAction::PassThrough } else { DefaultAction::Suppress };
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pending_groups_fail_closed_without_a_prompt(policy in arb_policy(), consent in arb_consent(), seed in any::<u64>()) {
        let mut store = ConsentStore::in_memory(consent);
        let left = store.prompt_pending(&mut NoPrompt, 1.0).unwrap();
        let pending: BTreeSet<ChannelGroup> = store.record().pending().into_iter().collect();
        prop_assert_eq!(left.into_iter().collect::<BTreeSet<_>>(), pending.clone());
        let resolved = ResolvedPolicy::new(&policy, store.record());
        let summary = random_summary(&mut ChaCha8Rng::seed_from_u64(seed), 0);
        let out = filter_summary(&summary, "s", &StateLabel::new("Neutral"), &resolved);
        for c in ChannelId::all() {
            if pending.contains(&c.group()) {
                prop_assert_eq!(resolved.resolution(c), Resolution::Suppressed(xrguard::filter::SuppressReason::ConsentPending));
                if let Some(r) = out.record() {
                    prop_assert!(r.value(c).is_none());
                }
            }
        }
    }

    #[test]
    fn denying_a_group_never_adds_channels(policy in arb_policy(), consent in arb_consent(), g in 0..ChannelGroup::ALL.len()) {
        let group = ChannelGroup::ALL[g];
        let mut stricter = consent.clone();
        stricter.set(group, Decision::Deny, 1.0);
        let exported = |c: &ConsentRecord| -> BTreeSet<ChannelId> {
            ChannelId::all().filter(|ch| !resolve_action(&policy, c, *ch).is_suppressed()).collect()
        };
        prop_assert!(exported(&stricter).is_subset(&exported(&consent)));
    }

    #[test]
    fn pass_through_values_are_bit_identical(policy in arb_policy(), consent in arb_consent(), seed in any::<u64>()) {
        let summary = random_summary(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let everyone = ConsentRecord::uniform("S01", Decision::Allow, 0.0);
        let state = StateLabel::new("Engaged");
        let mut policy = policy;
        policy.state_rules.clear();
        let raw = filter_summary(&summary, "s", &state, &ResolvedPolicy::new(&FilterPolicy::pass_all(), &everyone));
        let resolved = ResolvedPolicy::new(&policy, &consent);
        let filtered = filter_summary(&summary, "s", &state, &resolved);
        let mut logs = Vec::new();
        for out in [raw, filtered] {
            let mut log = RedactedLog::new("h");
            log.push(out);
            logs.push(RedactedLog::parse(&log.to_bytes()).unwrap());
        }
        let (raw, filtered) = (&logs[0].records[0], &logs[1].records[0]);
        for c in ChannelId::all() {
            if resolved.resolution(c) == Resolution::PassThrough {
                prop_assert_eq!(filtered.value(c).unwrap().to_bits(), raw.value(c).unwrap().to_bits());
                prop_assert_eq!(raw.value(c).unwrap().to_bits(), summary.get(c).to_bits());
            }
        }
    }
}

#[test]
fn sink_conserves_a_hundred_thousand_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let policy = FilterPolicy::gaze_only();
    let resolved = ResolvedPolicy::new(&policy, &ConsentRecord::uniform("S01", Decision::Allow, 0.0));
    let mut log = RedactedLog::new(policy.hash());
    for i in 0..100_000 {
        let summary = random_summary(&mut rng, i);
        log.push(filter_summary(&summary, "bulk", &StateLabel::new("Neutral"), &resolved));
        if i % 1000 == 0 {
            log.push(FilterOutcome::Withheld { window_index: i, state: StateLabel::new("Stressed") });
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("redacted.jsonl");
    log.write_to(&path).unwrap();
    let back = RedactedLog::parse(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.records.len(), 100_000);
    assert_eq!(back.withheld, 100);
    assert_eq!(back, log);
    let indices: Vec<usize> = back.records.iter().map(|r| r.window_index()).collect();
    assert_eq!(indices, (0..100_000).collect::<Vec<_>>());
}
