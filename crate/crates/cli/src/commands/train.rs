use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, ValueEnum};
use rbmlab::ais::{ais_log_z, log_likelihood, AisConfig};
use rbmlab::classify::{classification_error, ClassifyConfig};
use rbmlab::data::Dataset;
use rbmlab::rng;
use rbmlab::seeds::{SeedKind, SeedStrategy};
use rbmlab::train::{Reconstruction, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{
    bail_usage, check_positive, load_config, set, to_value, BackendArgs, ClassifyArgs, CommonArgs, DataArgs,
    DataConfig,
};
use crate::error::{Failure, ResultExt};
use crate::output::RunDir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Test-set classification every this many epochs (and at the last one).
    pub eval_interval: usize,
    /// AIS log-likelihood every this many epochs; 0 disables it.
    pub ais_interval: usize,
    pub ais: AisConfig,
    pub classify: ClassifyConfig,
    /// Checkpoint every this many epochs; the last epoch is always saved.
    pub checkpoint_interval: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            eval_interval: 10,
            ais_interval: 50,
            ais: AisConfig::default(),
            classify: ClassifyConfig::default(),
            checkpoint_interval: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Independent runs with seeds `rng_seed, rng_seed + 1, ...`.
    pub repeats: usize,
    pub out_dir: PathBuf,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun {
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            repeats: 1,
            out_dir: "runs".into(),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ReconstructionArg {
    Binary,
    Probabilities,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub classify: ClassifyArgs,
    #[arg(long)]
    pub n_hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k_steps: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// cd, dw (annealer minima) or hybrid
    #[arg(long)]
    pub seed_strategy: Option<SeedKind>,
    /// Fraction of hybrid seeds taken from annealer minima
    #[arg(long)]
    pub mix_fraction: Option<f64>,
    /// Negative-phase chains per batch (default: one per pattern)
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Mini-batch size (default: the full training set)
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub reconstruction: Option<ReconstructionArg>,
    /// Backend reads per epoch for annealer-seeded strategies
    #[arg(long)]
    pub n_reads: Option<usize>,
    #[arg(long)]
    pub target_weight: Option<f64>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    /// 0 turns AIS off
    #[arg(long)]
    pub ais_interval: Option<usize>,
    #[arg(long)]
    pub n_temps: Option<usize>,
    #[arg(long)]
    pub n_chains: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut TrainRun) -> Result<(), Failure> {
        self.data.apply(&mut cfg.data);
        set(&mut cfg.out_dir, &self.common.out_dir);
        let t = &mut cfg.train;
        self.backend.apply(&mut t.backend)?;
        self.backend.apply_options(&mut t.sample_options);
        set(&mut t.n_hidden, &self.n_hidden);
        set(&mut t.epochs, &self.epochs);
        set(&mut t.k_steps, &self.k_steps);
        set(&mut t.temperature, &self.temperature);
        set(&mut t.update.learning_rate, &self.learning_rate);
        set(&mut t.update.momentum, &self.momentum);
        set(&mut t.update.l2, &self.l2);
        if self.seed_strategy.is_some() || self.mix_fraction.is_some() {
            let kind = self.seed_strategy.unwrap_or(t.strategy.kind);
            let mix = self.mix_fraction.unwrap_or(if kind == SeedKind::Hybrid && t.strategy.kind != SeedKind::Hybrid {
                0.5
            } else {
                t.strategy.mix_fraction
            });
            t.strategy = SeedStrategy::from_kind(kind, mix).usage()?;
        }
        if self.n_samples.is_some() {
            t.n_samples = self.n_samples;
        }
        if self.batch_size.is_some() {
            t.batch_size = self.batch_size;
        }
        if let Some(r) = self.reconstruction {
            t.reconstruction = match r {
                ReconstructionArg::Binary => Reconstruction::Binary,
                ReconstructionArg::Probabilities => Reconstruction::Probabilities,
            };
        }
        set(&mut t.n_reads, &self.n_reads);
        set(&mut t.target_weight, &self.target_weight);
        set(&mut t.init_std, &self.init_std);
        set(&mut t.rng_seed, &self.rng_seed);
        let e = &mut cfg.eval;
        self.classify.apply(&mut e.classify);
        set(&mut e.eval_interval, &self.eval_interval);
        set(&mut e.ais_interval, &self.ais_interval);
        set(&mut e.ais.n_temps, &self.n_temps);
        set(&mut e.ais.n_chains, &self.n_chains);
        set(&mut e.checkpoint_interval, &self.checkpoint_interval);
        set(&mut cfg.repeats, &self.repeats);
        Ok(())
    }
}

impl TrainRun {
    fn validate(&self) -> Result<(), Failure> {
        self.train.validate().usage()?;
        check_positive("epochs", self.train.epochs)?;
        check_positive("eval_interval", self.eval.eval_interval)?;
        check_positive("repeats", self.repeats)?;
        if self.eval.ais_interval > 0 {
            self.eval.ais.validate().usage()?;
        }
        if self.train.batch_size.is_some() && self.train.strategy.needs_annealer() {
            return bail_usage("mini-batching is only available for the cd strategy".into());
        }
        Ok(())
    }
}

struct Row {
    epoch: usize,
    error: Option<f64>,
    ll: Option<f64>,
    log_z: Option<f64>,
    seeds_from_annealer: usize,
    seeds_from_tps: usize,
    distinct_lms: usize,
    with_replacement: bool,
    wall_ms: u128,
}

const METRICS_HEADER: &str = "epoch,classification_error,log_likelihood,log_z,seed_strategy,seeds_from_annealer,seeds_from_tps,distinct_lms,with_replacement,wall_time_ms";

fn metrics_csv(rows: &[Row], strategy: &str) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{strategy},{},{},{},{},{}",
            r.epoch,
            opt(r.error),
            opt(r.ll),
            opt(r.log_z),
            r.seeds_from_annealer,
            r.seeds_from_tps,
            r.distinct_lms,
            r.with_replacement,
            r.wall_ms
        );
    }
    out
}

fn strategy_tag(s: &SeedStrategy) -> &'static str {
    match s.kind {
        SeedKind::ClassicalTp => "cd",
        SeedKind::AnnealerLm => "dw",
        SeedKind::Hybrid => "hybrid",
    }
}

struct Final {
    error: Option<f64>,
    ll: Option<f64>,
}

fn train_once(
    cfg: &TrainRun,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    run: &mut RunDir,
    prefix: &str,
) -> Result<Final, Failure> {
    let mut tcfg = cfg.train.clone();
    tcfg.rng_seed = seed;
    let epochs = tcfg.epochs;
    let layout = cfg.data.layout();
    let mut trainer = Trainer::new(tcfg, layout.n_visible()).usage()?;
    let data = train.visible_vectors();
    let tag = strategy_tag(&cfg.train.strategy);
    let start = Instant::now();
    let mut rows = Vec::with_capacity(epochs);
    let mut result = Ok(());
    for e in 1..=epochs {
        let step = (|| -> anyhow::Result<Row> {
            let log = trainer.train_epoch(&data)?;
            let m = trainer.model();
            let last = e == epochs;
            let error = if last || e % cfg.eval.eval_interval == 0 {
                Some(classification_error(m, layout, &test.patterns, &cfg.eval.classify, rng::derive_seed(seed, &[5, e as u64]))?)
            } else {
                None
            };
            let ais_due = cfg.eval.ais_interval > 0 && (last || e % cfg.eval.ais_interval == 0);
            let (ll, log_z) = if ais_due {
                let ais = AisConfig {
                    rng_seed: rng::derive_seed(seed, &[6, e as u64]),
                    ..cfg.eval.ais.clone()
                };
                let z = ais_log_z(m, &ais)?;
                (Some(log_likelihood(m, &data, z.log_z)?), Some(z.log_z))
            } else {
                (None, None)
            };
            let ci = cfg.eval.checkpoint_interval;
            if last || (ci > 0 && e % ci == 0) {
                run.write(&format!("{prefix}checkpoints/epoch_{e}.json"), m.to_json().as_bytes())?;
            }
            Ok(Row {
                epoch: e,
                error,
                ll,
                log_z,
                seeds_from_annealer: log.seeds_from_annealer,
                seeds_from_tps: log.seeds_from_tps,
                distinct_lms: log.distinct_lms,
                with_replacement: log.with_replacement,
                wall_ms: start.elapsed().as_millis(),
            })
        })();
        match step {
            Ok(row) => {
                if let Some(err) = row.error {
                    log::info!("epoch {e}: test error {err:.4}");
                }
                rows.push(row);
            }
            Err(err) => {
                result = Err(err.context(format!("epoch {e}")));
                break;
            }
        }
    }
    // metrics up to the failure are still worth keeping
    run.write(&format!("{prefix}metrics.csv"), metrics_csv(&rows, tag).as_bytes())?;
    result?;
    let error = rows.iter().rev().find_map(|r| r.error);
    let ll = rows.iter().rev().find_map(|r| r.ll);
    Ok(Final { error, ll })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summary_csv(finals: &[Final]) -> String {
    let mut out = String::from("metric,median,mean,runs\n");
    let mut row = |name: &str, xs: Vec<f64>| {
        if !xs.is_empty() {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let _ = writeln!(out, "{name},{},{mean},{}", median(&xs), xs.len());
        }
    };
    row("final_classification_error", finals.iter().filter_map(|f| f.error).collect());
    row("final_log_likelihood", finals.iter().filter_map(|f| f.ll).collect());
    out
}

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg: TrainRun = load_config(args.common.config.as_deref())?;
    args.apply(&mut cfg)?;
    cfg.validate()?;
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let train = cfg.data.load_train()?;
    let test = cfg.data.load_test()?;
    let mut run = RunDir::create(&cfg.out_dir, args.common.run_name.as_deref(), "train", to_value(&cfg), cfg.train.rng_seed)
        .context("creating run directory")?;
    let mut outcome = Ok(Vec::new());
    for r in 0..cfg.repeats {
        let prefix = if cfg.repeats > 1 { format!("repeat_{r}/") } else { String::new() };
        let seed = cfg.train.rng_seed.wrapping_add(r as u64);
        match train_once(&cfg, seed, &train, &test, &mut run, &prefix) {
            Ok(f) => {
                if let Ok(v) = outcome.as_mut() {
                    v.push(f);
                }
            }
            Err(e) => {
                outcome = Err(e);
                break;
            }
        }
    }
    match outcome {
        Ok(finals) => {
            if cfg.repeats > 1 {
                run.write("summary.csv", summary_csv(&finals).as_bytes())?;
            }
            if let Some(f) = finals.last() {
                if let Some(e) = f.error {
                    println!("final test error {e:.4}");
                }
                if let Some(ll) = f.ll {
                    println!("final log-likelihood {ll:.4}");
                }
            }
            let root = run.finish("ok")?;
            println!("run directory {}", root.display());
            Ok(())
        }
        Err(e) => {
            run.finish("failed")?;
            Err(e)
        }
    }
}
