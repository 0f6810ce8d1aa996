use std::path::PathBuf;

use serde::Serialize;
use xrguard::audit::AuditWindows;
use xrguard::eval::{bench_pipeline, LatencyStats, EXPRESSION_BUDGET_US, FRAME_BUDGET_US};
use xrguard::filter::{ConsentRecord, Decision, Pipeline};
use xrguard::signal::Environment;
use xrguard::synth::{generate_session, EnvironmentProfile};

use crate::{io, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "pass-all")]
    policy: String,
    /// Windows to time.
    #[arg(long, default_value_t = 10_000)]
    n_windows: usize,
    /// Seed of the synthetic session the windows come from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    #[serde(flatten)]
    latency: LatencyStats,
    frame_budget_us: f64,
    expression_budget_us: f64,
    within_frame_budget: bool,
    within_expression_budget: bool,
}

const SOURCE_SECONDS: f64 = 300.0;
const WARMUP_WINDOWS: usize = 100;

pub fn cmd(args: Args) -> CmdResult {
    if args.n_windows == 0 {
        return Err(Failure::usage("--n-windows must be positive"));
    }
    let model = io::load_model_file(&args.model)?;
    let policy = io::load_policy(&args.policy)?;
    let profile = EnvironmentProfile::builtin(Environment::Interactive).with_duration(SOURCE_SECONDS);
    let session = generate_session(&profile, SOURCE_SECONDS, args.seed)?;
    let windows = AuditWindows::from_sessions([&session])?.windows;
    let consent = ConsentRecord::uniform(session.subject.clone().unwrap_or_default(), Decision::Allow, 0.0);
    let pipeline = Pipeline::new(model, &policy, &consent)?;

    bench_pipeline(&pipeline, &windows, WARMUP_WINDOWS)?;
    let latency = bench_pipeline(&pipeline, &windows, args.n_windows)?;
    let report = BenchReport {
        within_frame_budget: latency.within_frame_budget(),
        within_expression_budget: latency.within_expression_budget(),
        latency,
        frame_budget_us: FRAME_BUDGET_US,
        expression_budget_us: EXPRESSION_BUDGET_US,
    };
    if args.json {
        print!("{}", io::to_json(&report));
    } else {
        let l = &report.latency;
        let verdict = |ok: bool| if ok { "ok" } else { "over" };
        println!("windows     {}", l.windows);
        println!("mean        {:.1} us", l.mean_us);
        println!("p99         {:.1} us", l.p99_us);
        println!("max         {:.1} us", l.max_us);
        println!("throughput  {:.0} windows/s", l.throughput_per_s);
        println!("gaze frame budget        {:.1} us  {}", FRAME_BUDGET_US, verdict(report.within_frame_budget));
        println!("expression frame budget  {:.1} us  {}", EXPRESSION_BUDGET_US, verdict(report.within_expression_budget));
    }
    Ok(())
}
