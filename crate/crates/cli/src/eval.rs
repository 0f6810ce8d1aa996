use std::path::PathBuf;

use serde::Serialize;
use xrguard::classifier::stratified_split;
use xrguard::eval::{eval_report, noise_control_importance, EvalReport};

use crate::{io, CmdResult, Failure, Output};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Labeled feature CSV.
    #[arg(long)]
    corpus: PathBuf,
    /// Cross-validation folds; 0 skips cross-validation.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Training share used when the model was trained; the rest is scored.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    /// Score every row instead of the held-out share.
    #[arg(long)]
    all: bool,
    /// Also report the importance of an appended pure-noise column.
    #[arg(long)]
    noise_control: bool,
    /// Seed for fold assignment and the noise column.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Serialize)]
struct Report {
    #[serde(flatten)]
    eval: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_control_points: Option<f64>,
}

pub fn cmd(args: Args) -> CmdResult {
    if !(args.split > 0.0 && args.split < 1.0) {
        return Err(Failure::usage("--split must be between 0 and 1"));
    }
    let model = io::load_model_file(&args.model)?;
    let data = io::load_corpus(&args.corpus)?;
    if let Some(l) = data.labels.iter().find(|l| model.config.label_index(l).is_none()) {
        return Err(Failure::from(anyhow::anyhow!("corpus label {l} is not in the model's label set")));
    }
    // same split the train command made with this model's seed
    let (train_idx, test_idx) = stratified_split(&data.labels, args.split, model.config.seed)?;
    let test = if args.all { data.clone() } else { data.subset(&test_idx) };
    let cv = (args.folds > 0).then_some((&data, args.folds, args.seed));
    let eval = eval_report(&model, &test, cv)?;
    let noise_control_points = if args.noise_control {
        Some(noise_control_importance(&model.config, &data.subset(&train_idx), &test, args.seed)?)
    } else {
        None
    };
    let report = Report { eval, noise_control_points };

    let text = if args.output.json { io::to_json(&report) } else { render(&report) };
    io::write_bytes(args.output.out.as_deref(), text.as_bytes())
}

fn render(r: &Report) -> String {
    let e = &r.eval;
    let mut s = String::new();
    s += &format!("samples   {}\naccuracy  {:.2}%\nmacro-F1  {:.4}\n\n", e.samples, 100.0 * e.accuracy, e.macro_f1);
    let width = e.labels.iter().map(|l| l.as_str().len()).max().unwrap_or(5).max(9);
    s += &format!("{:width$}", "truth\\pred");
    for l in &e.labels {
        s += &format!(" {:>width$}", l.as_str());
    }
    s += "\n";
    for (l, row) in e.labels.iter().zip(&e.confusion_pct) {
        s += &format!("{:width$}", l.as_str());
        for v in row {
            s += &format!(" {:>width$.1}", v);
        }
        s += "\n";
    }
    if let Some(cv) = &e.cross_validation {
        s += "\nfold  train  test  accuracy  macro-F1\n";
        for f in &cv.folds {
            s += &format!("{:>4}  {:>5}  {:>4}  {:>7.2}%  {:>8.4}\n", f.fold, f.train_size, f.test_size, 100.0 * f.accuracy, f.macro_f1);
        }
        s += &format!("mean {:.2}%  std {:.2} points\n", 100.0 * cv.mean_accuracy, 100.0 * cv.std_accuracy);
    }
    s += "\nfeature                 drop (points)\n";
    for f in &e.importance {
        s += &format!("{:<22} {:>8.2}\n", f.feature, f.delta_points);
    }
    if let Some(n) = r.noise_control_points {
        s += &format!("noise control          {n:>8.2}\n");
    }
    s
}
