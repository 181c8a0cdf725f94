use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use rbmlab::continual::{run_schedule_with, CfConfig, MemorySelector, ReplayMode, TaskSchedule};
use rbmlab::rbm::RbmModel;
use serde::{Deserialize, Serialize};

use crate::config::{
    bail_usage, check_positive, load_config, set, to_value, BackendArgs, ClassifyArgs, CommonArgs, DataArgs,
    DataConfig,
};
use crate::error::{Failure, ResultExt};
use crate::output::RunDir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfRun {
    pub data: DataConfig,
    pub cf: CfConfig,
    pub out_dir: PathBuf,
}

impl Default for CfRun {
    fn default() -> Self {
        CfRun {
            data: DataConfig::default(),
            cf: CfConfig::default(),
            out_dir: "runs".into(),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoding {
    /// Vote only between the two classes of the evaluated pair.
    Restricted,
    /// Vote over all classes.
    Full,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CfArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Backend used to generate annealer memories
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub classify: ClassifyArgs,
    /// none, mcmc or annealer
    #[arg(long)]
    pub mode: Option<ReplayMode>,
    /// lowest-energy or random-correct
    #[arg(long)]
    pub selector: Option<MemorySelector>,
    /// Memories kept per learned class
    #[arg(long)]
    pub k_mem: Option<usize>,
    /// Candidates generated per class before selection
    #[arg(long)]
    pub generator_reads: Option<usize>,
    #[arg(long)]
    pub mcmc_steps: Option<usize>,
    #[arg(long)]
    pub clamp_strength: Option<f64>,
    #[arg(long)]
    pub epochs_per_task: Option<usize>,
    /// Class pairs in training order, e.g. 0-1,2-3
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pub tasks: Option<Vec<(usize, usize)>>,
    #[arg(long, value_enum)]
    pub decoding: Option<Decoding>,
    #[arg(long)]
    pub n_hidden: Option<usize>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub k_steps: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected a-b, got {s:?}"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

impl CfArgs {
    fn apply(&self, cfg: &mut CfRun) -> Result<(), Failure> {
        self.data.apply(&mut cfg.data);
        set(&mut cfg.out_dir, &self.common.out_dir);
        let c = &mut cfg.cf;
        let r = &mut c.replay;
        self.backend.apply(&mut r.backend)?;
        set(&mut r.hard_clamp, &self.backend.hard_clamp);
        if self.backend.auto_scale == Some(true) {
            return bail_usage("memory generation never rescales the problem; drop --auto-scale".into());
        }
        set(&mut r.mode, &self.mode);
        set(&mut r.selector, &self.selector);
        set(&mut r.k_mem, &self.k_mem);
        set(&mut r.generator_reads, &self.generator_reads);
        set(&mut r.mcmc_steps, &self.mcmc_steps);
        set(&mut r.clamp_strength, &self.clamp_strength);
        set(&mut c.epochs_per_task, &self.epochs_per_task);
        if let Some(t) = &self.tasks {
            c.schedule = TaskSchedule { tasks: t.clone() };
        }
        if let Some(d) = self.decoding {
            c.restricted_decoding = d == Decoding::Restricted;
        }
        self.classify.apply(&mut c.classify);
        let t = &mut c.train;
        set(&mut t.n_hidden, &self.n_hidden);
        set(&mut t.update.learning_rate, &self.learning_rate);
        set(&mut t.update.momentum, &self.momentum);
        set(&mut t.update.l2, &self.l2);
        set(&mut t.k_steps, &self.k_steps);
        set(&mut c.rng_seed, &self.rng_seed);
        Ok(())
    }
}

impl CfRun {
    fn validate(&self) -> Result<(), Failure> {
        let c = &self.cf;
        c.schedule.validate(self.data.n_classes).usage()?;
        c.replay.validate().usage()?;
        c.train.validate().usage()?;
        check_positive("epochs_per_task", c.epochs_per_task)?;
        if c.replay.mode == ReplayMode::Mcmc {
            check_positive("mcmc_steps", c.replay.mcmc_steps)?;
        }
        Ok(())
    }
}

pub fn run(args: CfArgs) -> Result<(), Failure> {
    let mut cfg: CfRun = load_config(args.common.config.as_deref())?;
    args.apply(&mut cfg)?;
    cfg.validate()?;
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let train = cfg.data.load_train()?;
    let test = cfg.data.load_test()?;
    let mut run = RunDir::create(&cfg.out_dir, args.common.run_name.as_deref(), "cf", to_value(&cfg), cfg.cf.rng_seed)
        .context("creating run directory")?;

    let mut models: Vec<RbmModel> = Vec::new();
    let outcome = run_schedule_with(&cfg.cf, &train, &test, |k, m, row| {
        let cells: Vec<String> = row.iter().map(|e| format!("{e:.3}")).collect();
        println!("after task {}: {}", k + 1, cells.join(" "));
        models.push(m.clone());
        Ok(())
    });
    for (k, m) in models.iter().enumerate() {
        run.write(&format!("checkpoints/task_{}.json", k + 1), m.to_json().as_bytes())?;
    }
    let report = match outcome {
        Ok(r) => r,
        Err(e) => {
            run.finish("failed")?;
            return Err(anyhow::Error::from(e).context("continual-learning run").into());
        }
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv).runtime()?;
    run.write("cf_matrix.csv", &csv)?;
    run.write_json("cf_report.json", &report)?;
    let root = run.finish("ok")?;
    println!("run directory {}", root.display());
    Ok(())
}
