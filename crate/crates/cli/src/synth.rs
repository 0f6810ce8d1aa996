use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use xrguard::features::write_feature_csv;
use xrguard::signal::{serialize_session, Environment};
use xrguard::synth::{generate_corpus, generate_session, parse_profiles, DatasetSpec, EnvironmentProfile};

use crate::{io, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Environment to simulate: interactive, emotional or ambient.
    #[arg(long, value_parser = parse_env, required_unless_present = "corpus")]
    env: Option<Environment>,
    /// Session length in seconds.
    #[arg(long, default_value_t = 600.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale of environment, state and subject effects.
    #[arg(long)]
    separation: Option<f64>,
    /// Profiles file (one JSON profile per line) replacing the builtins.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Generate a labeled feature corpus instead of one session.
    #[arg(long)]
    corpus: bool,
    /// Labeled windows in the corpus.
    #[arg(long, default_value_t = 930)]
    n: usize,
    #[arg(long, default_value_t = 12)]
    subjects: usize,
    /// Also write every corpus session as JSONL into this directory.
    #[arg(long)]
    sessions_dir: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_env(s: &str) -> Result<Environment, String> {
    s.parse().map_err(|_| format!("unknown environment `{s}` (expected interactive, emotional or ambient)"))
}

pub fn cmd(args: Args) -> CmdResult {
    let mut profiles = match &args.profiles {
        Some(p) => parse_profiles(&String::from_utf8(io::read(p)?).context("profiles file is not UTF-8")?)?,
        None => EnvironmentProfile::builtins(),
    };
    if let Some(sep) = args.separation {
        profiles = profiles.into_iter().map(|p| p.with_separation(sep)).collect();
    }

    if args.corpus {
        let spec = DatasetSpec { n_samples: args.n, n_subjects: args.subjects, ..DatasetSpec::with_seed(args.seed) };
        let corpus = generate_corpus(&spec, &profiles)?;
        if let Some(dir) = &args.sessions_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for s in corpus.sessions() {
                let path = dir.join(format!("{}.jsonl", s.session_id));
                fs::write(&path, serialize_session(&s)).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        let features = corpus.labeled_features()?;
        let mut bytes = Vec::new();
        write_feature_csv(&features, &mut bytes)?;
        io::write_bytes(args.out.as_deref(), &bytes)?;
        eprintln!("{} labeled windows from {} sessions", features.len(), corpus.session_count());
        return Ok(());
    }

    let env = args.env.expect("clap requires --env without --corpus");
    let profile = profiles
        .into_iter()
        .find(|p| p.environment == env)
        .ok_or_else(|| Failure::usage(format!("no profile for environment {env}")))?;
    if !(args.seconds.is_finite() && args.seconds > 0.0) {
        return Err(Failure::usage("--seconds must be positive"));
    }
    let session = generate_session(&profile.clone().with_duration(args.seconds), args.seconds, args.seed)?;
    io::write_bytes(args.out.as_deref(), &serialize_session(&session))?;
    eprintln!(
        "{}: {} expression and {} gaze frames, {} labeled windows",
        session.session_id,
        session.expression_stream.len(),
        session.gaze_stream.len(),
        session.labels.len()
    );
    Ok(())
}
