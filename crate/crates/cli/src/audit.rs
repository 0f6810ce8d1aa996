use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Serialize;
use xrguard::audit::{leakage_delta, run_attack, AttackSpec, AuditError, LeakageReport, Objective};
use xrguard::features::window_truth;
use xrguard::filter::RedactedLog;

use crate::train::load_config;
use crate::{io, CmdResult, Failure, Output};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Log exported without filtering.
    #[arg(long)]
    raw: PathBuf,
    /// Log exported under the policy being audited.
    #[arg(long)]
    filtered: PathBuf,
    /// Session files (or directories) holding the ground-truth labels.
    #[arg(long, required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// What the attacker tries to recover: state or subject.
    #[arg(long, default_value = "state")]
    objective: Objective,
    /// Attack seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Partial classifier config for the attacker network.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Serialize)]
struct AuditRow {
    seed: u64,
    raw: LeakageReport,
    filtered: LeakageReport,
    delta: f64,
}

#[derive(Debug, Serialize)]
struct AuditTable {
    objective: Objective,
    rows: Vec<AuditRow>,
    mean_raw_accuracy: f64,
    mean_filtered_accuracy: f64,
    mean_delta: f64,
}

fn keys(log: &RedactedLog) -> BTreeSet<(String, usize)> {
    log.records.iter().map(|r| (r.session_id().to_string(), r.window_index())).collect()
}

pub fn cmd(args: Args) -> CmdResult {
    let raw = io::load_log(&args.raw)?;
    let filtered = io::load_log(&args.filtered)?;
    let sessions = io::load_sessions(&args.truth)?;
    let truth = window_truth(&sessions);

    let known: BTreeSet<(String, usize)> = truth.iter().map(|t| (t.session_id.clone(), t.window_index)).collect();
    let (raw_keys, filtered_keys) = (keys(&raw), keys(&filtered));
    if let Some((s, w)) = raw_keys.iter().chain(&filtered_keys).find(|k| !known.contains(k)) {
        return Err(Failure::incomparable(format!("log window {s}#{w} has no ground truth")));
    }
    if let Some((s, w)) = filtered_keys.difference(&raw_keys).next() {
        return Err(Failure::incomparable(format!("filtered log has window {s}#{w} that the raw log lacks")));
    }

    let mut attacker = load_config(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        attacker.epochs = e;
    }
    let mut rows = Vec::new();
    for &seed in &args.seeds {
        let spec = AttackSpec { attacker: attacker.clone(), ..AttackSpec::new(args.objective, seed) };
        let r = run_attack(&spec, &raw, &truth)?;
        let f = run_attack(&spec, &filtered, &truth)?;
        let delta = leakage_delta(&r, &f).map_err(|e| match e {
            AuditError::IncomparableReports(m) => Failure::incomparable(m),
            other => Failure::from(other),
        })?;
        rows.push(AuditRow { seed, raw: r, filtered: f, delta });
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&AuditRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let table = AuditTable {
        objective: args.objective,
        mean_raw_accuracy: mean(&|r| r.raw.accuracy),
        mean_filtered_accuracy: mean(&|r| r.filtered.accuracy),
        mean_delta: mean(&|r| r.delta),
        rows,
    };
    let text = if args.output.json { io::to_json(&table) } else { render(&table) };
    io::write_bytes(args.output.out.as_deref(), text.as_bytes())
}

fn render(t: &AuditTable) -> String {
    let mut s = format!("objective {}\n", t.objective.as_str());
    s += "seed  raw acc  filtered acc  chance  raw margin  filtered margin   delta\n";
    for r in &t.rows {
        s += &format!(
            "{:>4}  {:>6.2}%  {:>11.2}%  {:>5.2}%  {:>10.4}  {:>15.4}  {:>6.4}\n",
            r.seed,
            100.0 * r.raw.accuracy,
            100.0 * r.filtered.accuracy,
            100.0 * r.raw.chance,
            r.raw.margin,
            r.filtered.margin,
            r.delta
        );
    }
    s += &format!(
        "mean  {:>6.2}%  {:>11.2}%  {:>32}  {:>6.4}\n",
        100.0 * t.mean_raw_accuracy,
        100.0 * t.mean_filtered_accuracy,
        "",
        t.mean_delta
    );
    s
}
