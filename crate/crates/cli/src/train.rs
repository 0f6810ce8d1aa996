use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use xrguard::classifier::{evaluate, save_model, stratified_split, train, ClassifierConfig};

use crate::{io, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Labeled feature CSV.
    #[arg(long)]
    corpus: PathBuf,
    /// Partial classifier config as JSON; unspecified fields keep defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Training share of the stratified split.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    /// Write the per-epoch loss trace as CSV.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    train_size: usize,
    test_size: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    final_loss: Option<f64>,
    epochs: usize,
}

/// Defaults overlaid with the fields present in `path`.
pub fn load_config(path: Option<&std::path::Path>) -> Result<ClassifierConfig, Failure> {
    let mut base = serde_json::to_value(ClassifierConfig::default()).expect("config serializes");
    if let Some(p) = path {
        let text = String::from_utf8(io::read(p)?).context("config is not UTF-8")?;
        let over: Value = serde_json::from_str(&text).with_context(|| format!("config {}", p.display()))?;
        let Value::Object(over) = over else {
            return Err(Failure::usage("config must be a JSON object"));
        };
        let obj = base.as_object_mut().expect("config is an object");
        for (k, v) in over {
            if !obj.contains_key(&k) {
                return Err(Failure::usage(format!("unknown config field `{k}`")));
            }
            obj.insert(k, v);
        }
    }
    Ok(serde_json::from_value(base).context("invalid config")?)
}

pub fn cmd(args: Args) -> CmdResult {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.hidden {
        config.hidden_units = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.dropout {
        config.dropout_p = v;
    }
    if !(args.split > 0.0 && args.split < 1.0) {
        return Err(Failure::usage("--split must be between 0 and 1"));
    }

    let data = io::load_corpus(&args.corpus)?;
    let (train_idx, test_idx) = stratified_split(&data.labels, args.split, config.seed)?;
    let train_set = data.subset(&train_idx);
    let test_set = data.subset(&test_idx);
    let trained = train(&config, &train_set)?;
    io::write_bytes(Some(&args.out), &save_model(&trained.model))?;
    if let Some(path) = &args.loss_trace {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in trained.loss_trace.iter().enumerate() {
            writeln!(csv, "{},{l}", i + 1).expect("writing to a string");
        }
        io::write_bytes(Some(path), csv.as_bytes())?;
    }

    let summary = TrainSummary {
        train_size: train_set.len(),
        test_size: test_set.len(),
        train_accuracy: evaluate(&trained.model, &train_set)?.accuracy(),
        test_accuracy: evaluate(&trained.model, &test_set)?.accuracy(),
        final_loss: trained.loss_trace.last().copied(),
        epochs: trained.loss_trace.len(),
    };
    if args.json {
        print!("{}", io::to_json(&summary));
    } else {
        println!("trained {} epochs on {} windows ({} held out)", summary.epochs, summary.train_size, summary.test_size);
        println!("train accuracy  {:>6.2}%", 100.0 * summary.train_accuracy);
        println!("test accuracy   {:>6.2}%", 100.0 * summary.test_accuracy);
        if let Some(l) = summary.final_loss {
            println!("final loss      {l:.4}");
        }
        println!("model written to {}", args.out.display());
    }
    Ok(())
}
