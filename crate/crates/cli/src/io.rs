use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use xrguard::classifier::{load_model, ClassifierModel, Dataset};
use xrguard::features::read_feature_csv;
use xrguard::filter::{FilterPolicy, RedactedLog};
use xrguard::signal::{parse_session, SessionLog};

use crate::Failure;

pub fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    Ok(fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

pub fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(bytes).context("writing stdout")?,
    }
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

pub fn load_model_file(path: &Path) -> Result<ClassifierModel, Failure> {
    Ok(load_model(&read(path)?).with_context(|| format!("loading model {}", path.display()))?)
}

pub fn load_corpus(path: &Path) -> Result<Dataset, Failure> {
    let data = read_feature_csv(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(Dataset::from(&data))
}

pub fn load_log(path: &Path) -> Result<RedactedLog, Failure> {
    Ok(RedactedLog::parse(&read(path)?).with_context(|| format!("reading log {}", path.display()))?)
}

/// A builtin policy name or a policy JSON file.
pub fn load_policy(spec: &str) -> Result<FilterPolicy, Failure> {
    if let Some(p) = FilterPolicy::builtin(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(Failure::usage(format!(
            "unknown policy `{spec}`: expected one of {} or a policy file",
            FilterPolicy::BUILTIN_NAMES.join(", ")
        )));
    }
    let text = String::from_utf8(read(path)?).context("policy file is not UTF-8")?;
    Ok(text.parse::<FilterPolicy>().with_context(|| format!("policy {}", path.display()))?)
}

/// Session files named directly or found (as `*.jsonl`) in directories, in
/// sorted order.
pub fn session_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Failure::usage("no session files given"));
    }
    Ok(out)
}

pub fn load_sessions(inputs: &[PathBuf]) -> Result<Vec<SessionLog>, Failure> {
    session_paths(inputs)?
        .iter()
        .map(|p| Ok(parse_session(&read(p)?).with_context(|| format!("parsing session {}", p.display()))?))
        .collect()
}
