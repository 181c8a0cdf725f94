use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rbmlab::classify::{classify_batch, ClassifyConfig};
use serde::{Deserialize, Serialize};

use crate::config::{
    bail_usage, load_config, load_model, set, to_value, ClassifyArgs, CommonArgs, DataArgs, DataConfig,
};
use crate::error::{Failure, ResultExt};
use crate::output::RunDir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyRun {
    pub data: DataConfig,
    /// Checkpoint path or `zero-model`.
    pub checkpoint: String,
    /// Hidden units of the zero model.
    pub n_hidden: usize,
    pub classify: ClassifyConfig,
    /// Restrict the vote to these classes; empty means all.
    pub classes: Vec<usize>,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ClassifyRun {
    fn default() -> Self {
        ClassifyRun {
            data: DataConfig::default(),
            checkpoint: String::new(),
            n_hidden: 74,
            classify: ClassifyConfig::default(),
            classes: Vec::new(),
            rng_seed: 0,
            out_dir: "runs".into(),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ClassifyCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub classify: ClassifyArgs,
    /// Checkpoint file, or `zero-model`
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub n_hidden: Option<usize>,
    /// Comma-separated classes the vote is restricted to
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<usize>>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

#[derive(Serialize)]
struct Summary {
    n_patterns: usize,
    error: f64,
    predicted_counts: Vec<usize>,
    predicted_frequencies: Vec<f64>,
}

pub fn run(args: ClassifyCmdArgs) -> Result<(), Failure> {
    let mut cfg: ClassifyRun = load_config(args.common.config.as_deref())?;
    args.data.apply(&mut cfg.data);
    args.classify.apply(&mut cfg.classify);
    set(&mut cfg.checkpoint, &args.checkpoint);
    set(&mut cfg.n_hidden, &args.n_hidden);
    set(&mut cfg.classes, &args.classes);
    set(&mut cfg.rng_seed, &args.rng_seed);
    set(&mut cfg.out_dir, &args.common.out_dir);
    let layout = cfg.data.layout();
    if let Some(&c) = cfg.classes.iter().find(|&&c| c >= layout.n_classes) {
        return bail_usage(format!("class {c} out of range"));
    }
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let model = load_model(&cfg.checkpoint, layout.n_visible(), cfg.n_hidden)?;
    let test = cfg.data.load_test()?;
    let allowed = (!cfg.classes.is_empty()).then_some(cfg.classes.as_slice());
    let preds = classify_batch(&model, layout, &test.patterns, &cfg.classify, allowed, cfg.rng_seed).runtime()?;

    let mut counts = vec![0usize; layout.n_classes];
    let mut csv = String::from("index,label,predicted\n");
    for (i, (p, t)) in preds.iter().zip(&test.patterns).enumerate() {
        counts[*p] += 1;
        let _ = writeln!(csv, "{i},{},{p}", t.label);
    }
    let n = preds.len();
    let wrong = preds.iter().zip(&test.patterns).filter(|(p, t)| **p != t.label).count();
    let summary = Summary {
        n_patterns: n,
        error: wrong as f64 / n as f64,
        predicted_frequencies: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        predicted_counts: counts,
    };

    let mut run = RunDir::create(&cfg.out_dir, args.common.run_name.as_deref(), "classify", to_value(&cfg), cfg.rng_seed)
        .context("creating run directory")?;
    run.write("predictions.csv", csv.as_bytes())?;
    run.write_json("classify.json", &summary)?;
    println!("error {:.4} over {n} patterns", summary.error);
    println!("predicted frequencies {:?}", summary.predicted_frequencies);
    let root = run.finish("ok")?;
    println!("run directory {}", root.display());
    Ok(())
}
