//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its verdict even when all pass.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use xrguard::audit::{run_attack, AttackSpec, AuditWindows, Objective};
use xrguard::classifier::{
    cross_validate, evaluate, save_model, stratified_split, train, ClassifierConfig, ClassifierModel, Dataset, Mlp,
};
use xrguard::eval::bench_pipeline;
use xrguard::features::WindowSummary;
use xrguard::filter::{
    filter_summary, ChannelAction, ConsentRecord, ConsentStore, Decision, DefaultAction, FilterOutcome, FilterPolicy,
    NoPrompt, Pipeline, RedactedLog, Resolution, ResolvedPolicy, StateAction, SuppressReason,
};
use xrguard::signal::{ChannelGroup, ChannelId, StateLabel};
use xrguard::synth::{generate_corpus, DatasetSpec, EnvironmentProfile};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

struct Fixture {
    data: Dataset,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    model: ClassifierModel,
    windows: AuditWindows,
}

impl Fixture {
    fn build() -> Fixture {
        let corpus = generate_corpus(&DatasetSpec::with_seed(42), &EnvironmentProfile::builtins()).unwrap();
        let data = Dataset::from(&corpus.labeled_features().unwrap());
        let (train_idx, test_idx) = stratified_split(&data.labels, 0.7, 42).unwrap();
        let model = train(&ClassifierConfig::with_seed(42), &data.subset(&train_idx)).unwrap().model;
        let windows = AuditWindows::from_corpus(&corpus).unwrap();
        Fixture { data, train_idx, test_idx, model, windows }
    }

    fn export(&self, policy: &FilterPolicy) -> RedactedLog {
        let consent = ConsentRecord::uniform("S", Decision::Allow, 0.0);
        self.windows.export(&Pipeline::new(self.model.clone(), policy, &consent).unwrap()).unwrap()
    }
}

fn random_summary(rng: &mut impl Rng, window_index: usize) -> WindowSummary {
    WindowSummary { window_index, values: ChannelId::all().map(|c| (c, rng.random::<f64>())).collect() }
}

fn random_policy(rng: &mut impl Rng) -> FilterPolicy {
    let mut p = if rng.random_bool(0.5) { FilterPolicy::suppress_all() } else { FilterPolicy::pass_all() };
    for c in ChannelId::all() {
        let rule = match rng.random_range(0..4) {
            0 => continue,
            1 => ChannelAction::Suppress,
            2 => ChannelAction::PassThrough,
            _ => ChannelAction::Coarsen(*[0.1, 0.25, 0.5].choose(rng).unwrap()),
        };
        p.channel_rules.insert(c, rule);
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

/// Independent reader for the binary model layout.
struct ModelBytes<'a>(&'a [u8], usize);

impl ModelBytes<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let s = &self.0[self.1..self.1 + n];
        self.1 += n;
        s
    }
    fn u32(&mut self) -> usize {
        u32::from_le_bytes(self.take(4).try_into().unwrap()) as usize
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }
    fn f32s(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| f32::from_le_bytes(self.take(4).try_into().unwrap()) as f64).collect()
    }
}

fn architecture(fx: &Fixture) -> Verdict {
    let start = Instant::now();
    let bytes = save_model(&fx.model);
    let mut r = ModelBytes(&bytes, 0);
    ensure!(r.take(5) == b"MGMDL", "bad magic");
    let _version = r.u32();
    let (input, hidden, n_labels) = (r.u32(), r.u32(), r.u32());
    ensure!((input, hidden, n_labels) == (14, 64, 4), "shape {input}->{hidden}->{n_labels}");
    for _ in 0..n_labels {
        let len = r.u32();
        r.take(len);
    }
    let dropout = r.f64();
    ensure!(dropout == 0.3, "dropout {dropout}");
    let _lr = r.f64();
    let (_batch, _epochs) = (r.u32(), r.u32());
    r.take(8);
    let mean = r.f32s(input);
    let std = r.f32s(input);
    let params = r.f32s(hidden * input + hidden + n_labels * hidden + n_labels);
    ensure!(r.1 + 4 == bytes.len(), "{} trailing bytes", bytes.len() - r.1 - 4);
    ensure!(params.iter().all(|p| p.is_finite()), "non-finite weight");

    let rows: Vec<&Vec<f64>> = fx.train_idx.iter().map(|&i| &fx.data.features[i]).collect();
    let n = rows.len() as f64;
    for j in 0..input {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let s = (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        ensure!((mean[j] - m).abs() <= 1e-6 * m.abs().max(1.0), "feature {j} mean {} vs {m}", mean[j]);
        ensure!((std[j] - s).abs() <= 1e-6 * s.max(1.0), "feature {j} std {} vs {s}", std[j]);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("14->64->4, dropout 0.3, z-score stats match training rows ({} bytes)", bytes.len()))
}

fn batch_loss(net: &Mlp, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    xs.iter().zip(ys).map(|(x, &y)| -net.forward::<ChaCha8Rng>(x, None)[y].ln()).sum::<f64>() / xs.len() as f64
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut net = Mlp::init(14, 64, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..14).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (_, grad) = net.loss_and_gradient::<ChaCha8Rng>(&refs, &ys, None);
        let h = 1e-5;
        for i in 0..grad.len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = batch_loss(&net, &xs, &ys);
            net.params_mut()[i] = orig - h;
            let down = batch_loss(&net, &xs, &ys);
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    ensure!(worst < 1e-4, "worst relative error {worst:.2e}");
    ensure!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    Ok(format!("20 seeds, worst relative error {worst:.2e}"))
}

fn full_scale(fx: &Fixture, diagonals: &mut Vec<f64>) -> Verdict {
    let start = Instant::now();
    ensure!(fx.data.len() == 930, "{} windows", fx.data.len());
    ensure!(fx.data.class_counts().len() == 4, "{} classes", fx.data.class_counts().len());
    let cm = evaluate(&fx.model, &fx.data.subset(&fx.test_idx)).map_err(|e| e.to_string())?;
    *diagonals = (0..4).map(|k| cm.row_percentages()[k][k]).collect();
    let folds = cross_validate(&ClassifierConfig::with_seed(42), &fx.data, 5, 42).map_err(|e| e.to_string())?;
    let accs: Vec<f64> = folds.iter().map(|f| 100.0 * f.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / 5.0;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    let held_out = 100.0 * cm.accuracy();
    ensure!(held_out >= 85.0, "held-out accuracy {held_out:.2}%");
    ensure!(std < 5.0, "CV std {std:.2} points");
    ensure!(start.elapsed() < Duration::from_secs(120), "took {:?}", start.elapsed());
    Ok(format!("held-out {held_out:.2}%, 5-fold CV {mean:.2}% +/- {std:.2} points"))
}

fn diagonal_dominance(diagonals: &[f64]) -> Verdict {
    ensure!(diagonals.len() == 4, "no confusion matrix");
    let shown: Vec<String> = diagonals.iter().map(|d| format!("{d:.1}")).collect();
    ensure!(diagonals.iter().all(|d| *d >= 70.0), "diagonals {}", shown.join(", "));
    Ok(format!("diagonals {}%", shown.join(", ")))
}

fn leakage_freedom() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let states = StateLabel::default_set();
    let (mut exported, mut keys_checked) = (0usize, 0usize);
    for i in 0..100_000 {
        let summary = random_summary(&mut rng, i % 300);
        let policy = random_policy(&mut rng);
        let consent = random_consent(&mut rng);
        let resolved = ResolvedPolicy::new(&policy, &consent);
        let out = filter_summary(&summary, "fuzz", states.choose(&mut rng).unwrap(), &resolved);
        let FilterOutcome::Exported(record) = out else { continue };
        let mut log = RedactedLog::new(policy.hash());
        log.push(FilterOutcome::Exported(record));
        let bytes = log.to_bytes();
        let text = std::str::from_utf8(&bytes).map_err(|e| e.to_string())?;
        for c in ChannelId::all().filter(|c| resolved.resolution(*c).is_suppressed()) {
            ensure!(!text.contains(&format!("\"{}\"", c.name())), "triple {i}: {} in export", c.name());
            keys_checked += 1;
        }
        exported += 1;
    }
    ensure!(start.elapsed() < Duration::from_secs(120), "took {:?}", start.elapsed());
    Ok(format!("100000 triples, {exported} exports, {keys_checked} suppressed keys absent"))
}

fn fail_closed() -> Verdict {
    let mut runner = TestRunner::new(PropConfig { cases: 1024, failure_persistence: None, ..PropConfig::default() });
    let decision = prop_oneof![Just(None), Just(Some(Decision::Allow)), Just(Some(Decision::Deny)), Just(Some(Decision::Ask))];
    let strategy = (any::<u64>(), prop::collection::vec(decision, ChannelGroup::ALL.len()), any::<bool>());
    let pending_seen = Cell::new(0usize);
    let result = runner.run(&strategy, |(seed, decisions, pass)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = random_policy(&mut rng);
        policy.default_action = if pass { DefaultAction::PassThrough } else { DefaultAction::Suppress };
        let mut record = ConsentRecord::new("S01");
        for (g, d) in ChannelGroup::ALL.into_iter().zip(&decisions) {
            if let Some(d) = d {
                record.set(g, *d, 0.0);
            }
        }
        let mut store = ConsentStore::in_memory(record);
        store.prompt_pending(&mut NoPrompt, 1.0).unwrap();
        let resolved = ResolvedPolicy::new(&policy, store.record());
        let out = filter_summary(&random_summary(&mut rng, 0), "s", &StateLabel::new("Neutral"), &resolved);
        for (g, d) in ChannelGroup::ALL.into_iter().zip(&decisions) {
            if *d != Some(Decision::Ask) {
                continue;
            }
            pending_seen.set(pending_seen.get() + 1);
            for c in g.channels() {
                prop_assert_eq!(resolved.resolution(c), Resolution::Suppressed(SuppressReason::ConsentPending));
                if let Some(r) = out.record() {
                    prop_assert!(r.value(c).is_none());
                }
            }
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!("1024 random policies, {} pending groups, all suppressed", pending_seen.get()))
}

fn adversary_delta(fx: &Fixture) -> Verdict {
    let start = Instant::now();
    let raw = fx.export(&FilterPolicy::pass_all());
    let none = fx.export(&FilterPolicy::suppress_all());
    let withheld = fx.export(&FilterPolicy::withhold_stressed());
    let stressed = StateLabel::new("Stressed");
    let chance = 1.0 / 4.0;
    let (mut min_raw, mut max_none) = (1.0f64, 0.0f64);
    let mut recalls = Vec::new();
    for seed in 0..10 {
        let spec = AttackSpec::new(Objective::StateInference, seed);
        let r = run_attack(&spec, &raw, &fx.windows.truth).map_err(|e| e.to_string())?;
        let n = run_attack(&spec, &none, &fx.windows.truth).map_err(|e| e.to_string())?;
        let w = run_attack(&spec, &withheld, &fx.windows.truth).map_err(|e| e.to_string())?;
        let (rr, wr) = (r.recall_of(&stressed).unwrap(), w.recall_of(&stressed).unwrap());
        ensure!(r.accuracy >= 0.85, "seed {seed}: unfiltered accuracy {:.3}", r.accuracy);
        ensure!(n.accuracy <= chance + 0.02, "seed {seed}: suppressed accuracy {:.3}", n.accuracy);
        ensure!(wr < rr, "seed {seed}: Stressed recall {wr:.3} withheld vs {rr:.3} raw");
        min_raw = min_raw.min(r.accuracy);
        max_none = max_none.max(n.accuracy);
        recalls.push((rr, wr));
    }
    ensure!(start.elapsed() < Duration::from_secs(300), "took {:?}", start.elapsed());
    let mean = |f: fn(&(f64, f64)) -> f64| recalls.iter().map(f).sum::<f64>() / 10.0;
    Ok(format!(
        "10 seeds: raw >= {min_raw:.3}, suppressed <= {max_none:.3}, Stressed recall {:.3} -> {:.3}",
        mean(|r| r.0),
        mean(|r| r.1)
    ))
}

fn pre_post_consistency(fx: &Fixture) -> Verdict {
    let reparse = |log: &RedactedLog| RedactedLog::parse(&log.to_bytes()).unwrap();
    let raw = reparse(&fx.export(&FilterPolicy::pass_all()));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut policies = vec![FilterPolicy::gaze_only(), FilterPolicy::withhold_stressed()];
    policies.extend((0..8).map(|_| {
        let mut p = random_policy(&mut rng);
        p.state_rules.clear();
        p
    }));
    let mut compared = 0usize;
    for policy in &policies {
        let filtered = reparse(&fx.export(policy));
        let by_key: std::collections::BTreeMap<(&str, usize), _> =
            raw.records.iter().map(|r| ((r.session_id(), r.window_index()), r)).collect();
        for rec in &filtered.records {
            let base = by_key[&(rec.session_id(), rec.window_index())];
            for (c, res) in ChannelId::all().zip(rec.manifest()) {
                if *res != Resolution::PassThrough {
                    continue;
                }
                let (a, b) = (rec.value(c).unwrap(), base.value(c).unwrap());
                ensure!(a.to_bits() == b.to_bits(), "{} window {}: {a} vs {b}", c.name(), rec.window_index());
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} pass-through values bit-identical across {} policies", policies.len()))
}

fn realtime_budget(fx: &Fixture) -> Verdict {
    let start = Instant::now();
    let consent = ConsentRecord::uniform("S", Decision::Allow, 0.0);
    let pipeline = Pipeline::new(fx.model.clone(), &FilterPolicy::withhold_stressed(), &consent).unwrap();
    bench_pipeline(&pipeline, &fx.windows.windows, 200).map_err(|e| e.to_string())?;
    let stats = bench_pipeline(&pipeline, &fx.windows.windows, 20_000).map_err(|e| e.to_string())?;
    let budget = 1e6 / 90.0;
    ensure!(stats.p99_us < budget, "p99 {:.1} us over {budget:.1} us", stats.p99_us);
    ensure!(start.elapsed() < Duration::from_secs(60), "took {:?}", start.elapsed());
    Ok(format!("mean {:.1} us, p99 {:.1} us over {} windows (budget {budget:.1} us)", stats.mean_us, stats.p99_us, stats.windows))
}

fn xrguard(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_xrguard")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`xrguard {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn artifacts(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let run = |args: &[&str]| xrguard(dir, args);
    let mut stdout = Vec::new();
    run(&["synth", "--env", "emotional", "--seconds", "90", "--seed", "5", "--out", "session.jsonl"])?;
    run(&["synth", "--corpus", "--seed", "42", "--sessions-dir", "sessions", "--out", "corpus.csv"])?;
    run(&["train", "--corpus", "corpus.csv", "--seed", "42", "--out", "model.bin", "--loss-trace", "loss.csv"])?;
    for (policy, out) in [("pass-all", "raw.jsonl"), ("withhold-stressed", "filtered.jsonl")] {
        let summary = run(&["run", "--session", "sessions", "--model", "model.bin", "--policy", policy, "--consent", "allow", "--out", out, "--json"])?;
        stdout.push((format!("run {policy} summary"), summary));
    }
    run(&["run", "--session", "session.jsonl", "--model", "model.bin", "--policy", "gaze-only", "--consent", "allow", "--out", "session_redacted.jsonl"])?;
    stdout.push(("eval".into(), run(&["eval", "--model", "model.bin", "--corpus", "corpus.csv", "--json"])?));
    stdout.push((
        "audit".into(),
        run(&["audit", "--raw", "raw.jsonl", "--filtered", "filtered.jsonl", "--truth", "sessions", "--json"])?,
    ));

    let hash = |b: &[u8]| hex::encode(Sha256::digest(b));
    let mut out = Vec::new();
    for f in ["session.jsonl", "corpus.csv", "model.bin", "loss.csv", "raw.jsonl", "filtered.jsonl", "session_redacted.jsonl"] {
        out.push((f.to_string(), hash(&std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?)));
    }
    let mut sessions: Vec<_> = std::fs::read_dir(dir.join("sessions")).map_err(|e| e.to_string())?.flatten().map(|e| e.path()).collect();
    sessions.sort();
    let mut all = Sha256::new();
    for p in &sessions {
        all.update(std::fs::read(p).map_err(|e| e.to_string())?);
    }
    out.push((format!("sessions/ ({} files)", sessions.len()), hex::encode(all.finalize())));
    out.extend(stdout.into_iter().map(|(k, v)| (k, hash(&v))));
    Ok(out)
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = artifacts(a.path())?;
    let second = artifacts(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    Ok(format!("{} artifacts byte-identical across two runs", first.len()))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let fx = Fixture::build();
    let mut diagonals = Vec::new();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        ("architecture fidelity", Box::new(|| architecture(&fx))),
        ("gradient oracle", Box::new(gradient_oracle)),
        ("full-scale experiment", Box::new(|| full_scale(&fx, &mut diagonals))),
    ];
    let mut failed = 0;
    let mut report = |n: usize, name: &str, started: Instant, v: std::thread::Result<Verdict>| {
        let v = v.unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match v {
            Ok(d) => println!("PASS  {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {n:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    };
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        report(i + 1, name, t, catch_unwind(AssertUnwindSafe(f)));
    }
    let rest: Vec<(&str, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        ("confusion-matrix dominance", Box::new(|| diagonal_dominance(&diagonals))),
        ("leakage-freedom", Box::new(leakage_freedom)),
        ("fail-closed consent", Box::new(fail_closed)),
        ("adversary delta", Box::new(|| adversary_delta(&fx))),
        ("pre/post consistency", Box::new(|| pre_post_consistency(&fx))),
        ("real-time budget", Box::new(|| realtime_budget(&fx))),
        ("determinism", Box::new(determinism)),
    ];
    for (i, (name, f)) in rest.into_iter().enumerate() {
        let t = Instant::now();
        report(i + 4, name, t, catch_unwind(AssertUnwindSafe(f)));
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
