use std::collections::BTreeMap;
use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use xrguard::filter::{
    AnswerSource, ConsentRecord, ConsentStore, Decision, Pipeline, RedactedLog, ScriptedAnswers,
};
use xrguard::signal::ChannelGroup;

use crate::{io, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Session JSONL files or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    session: Vec<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Builtin policy name (suppress-all, pass-all, gaze-only,
    /// withhold-stressed) or a policy JSON file.
    #[arg(long)]
    policy: String,
    /// Decision for groups without a journal entry.
    #[arg(long, default_value = "ask", value_parser = parse_decision)]
    consent: Decision,
    /// Append-only consent journal, read at start and extended by answers.
    #[arg(long)]
    consent_journal: Option<PathBuf>,
    /// Subject to use instead of the one named in each session.
    #[arg(long)]
    subject: Option<String>,
    /// Ask on the terminal about groups still pending.
    #[arg(long)]
    ask: bool,
    /// Scripted answers, one `allow <group>` or `deny <group>` per line;
    /// `all` names every group.
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Redacted log destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the run summary as JSON.
    #[arg(long)]
    json: bool,
}

fn parse_decision(s: &str) -> Result<Decision, String> {
    s.parse().map_err(|_| format!("unknown decision `{s}` (expected allow, deny or ask)"))
}

pub fn parse_answers(text: &str) -> Result<ScriptedAnswers, Failure> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Failure::usage(format!("answers line {}: expected `allow|deny <group>`, got `{line}`", i + 1));
        let (verb, group) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
        let decision = match verb {
            "allow" => Decision::Allow,
            "deny" => Decision::Deny,
            _ => return Err(bad()),
        };
        let groups: Vec<ChannelGroup> = match group.trim() {
            "all" => ChannelGroup::ALL.to_vec(),
            g => vec![g.parse().map_err(|_| bad())?],
        };
        for g in groups {
            map.insert(g, decision);
        }
    }
    Ok(ScriptedAnswers(map))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Scripted answers first, then the terminal when allowed.
struct Answers {
    scripted: ScriptedAnswers,
    terminal: bool,
}

impl AnswerSource for Answers {
    fn answer(&mut self, subject_id: &str, group: ChannelGroup) -> Option<Decision> {
        if let Some(d) = self.scripted.answer(subject_id, group) {
            return Some(d);
        }
        if !self.terminal {
            return None;
        }
        eprint!("allow export of {group} channels for {subject_id}? [allow/deny] ");
        std::io::stderr().flush().ok();
        let mut line = String::new();
        std::io::stdin().lock().read_line(&mut line).ok()?;
        match line.trim() {
            "allow" | "a" | "y" | "yes" => Some(Decision::Allow),
            "deny" | "d" | "n" | "no" => Some(Decision::Deny),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    sessions: usize,
    exported: usize,
    withheld: usize,
    policy_hash: String,
    /// Per subject, per group: manifest codes of that group's channels.
    resolution: BTreeMap<String, BTreeMap<String, String>>,
    unanswered: BTreeMap<String, Vec<ChannelGroup>>,
}

pub fn cmd(args: Args) -> CmdResult {
    let model = io::load_model_file(&args.model)?;
    let policy = io::load_policy(&args.policy)?;
    let sessions = io::load_sessions(&args.session)?;
    let scripted = match &args.answers {
        Some(p) => parse_answers(&String::from_utf8(io::read(p)?).context("answers file is not UTF-8")?)?,
        None => ScriptedAnswers::default(),
    };
    let terminal = args.ask && std::io::stdin().is_terminal();
    if args.ask && !terminal {
        eprintln!("warning: stdin is not a terminal; groups awaiting consent stay suppressed");
    }
    let mut answers = Answers { scripted, terminal };

    let mut pipelines: BTreeMap<String, Pipeline> = BTreeMap::new();
    let mut summary = RunSummary {
        sessions: sessions.len(),
        exported: 0,
        withheld: 0,
        policy_hash: policy.hash(),
        resolution: BTreeMap::new(),
        unanswered: BTreeMap::new(),
    };
    let mut log = RedactedLog::new(policy.hash());
    for session in &sessions {
        let subject = args.subject.clone().or_else(|| session.subject.clone()).unwrap_or_else(|| "anonymous".into());
        if !pipelines.contains_key(&subject) {
            let initial = ConsentRecord::uniform(&subject, args.consent, now());
            let mut store = match &args.consent_journal {
                Some(p) => ConsentStore::open(p, initial)?,
                None => ConsentStore::in_memory(initial),
            };
            let left = store.prompt_pending(&mut answers, now())?;
            if !left.is_empty() {
                eprintln!(
                    "warning: no consent answer for {subject}: {}; suppressed",
                    left.iter().map(|g| g.as_str()).collect::<Vec<_>>().join(", ")
                );
                summary.unanswered.insert(subject.clone(), left);
            }
            let pipeline = Pipeline::new(model.clone(), &policy, store.record())?;
            let codes = ChannelGroup::ALL
                .iter()
                .map(|g| (g.to_string(), g.channels().map(|c| pipeline.resolved.resolution(c).code()).collect()))
                .collect();
            summary.resolution.insert(subject.clone(), codes);
            pipelines.insert(subject.clone(), pipeline);
        }
        pipelines[&subject].process_session(session, &mut log)?;
    }
    summary.exported = log.records.len();
    summary.withheld = log.withheld;

    match &args.out {
        Some(p) => log.write_to(p)?,
        None => io::write_bytes(None, &log.to_bytes())?,
    }
    let text = if args.json { io::to_json(&summary) } else { render(&summary) };
    if args.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(())
}

fn render(s: &RunSummary) -> String {
    let mut out = format!(
        "{} session(s): {} window(s) exported, {} withheld\npolicy {}\n",
        s.sessions, s.exported, s.withheld, s.policy_hash
    );
    for (subject, groups) in &s.resolution {
        out += &format!("{subject}:\n");
        for (g, codes) in groups {
            let count = |c: char| codes.chars().filter(|x| *x == c).count();
            out += &format!(
                "  {g:<8} pass {:>2}  coarsen {:>2}  policy {:>2}  denied {:>2}  pending {:>2}\n",
                count('P'),
                count('C'),
                count('S'),
                count('D'),
                count('A')
            );
        }
    }
    out
}
