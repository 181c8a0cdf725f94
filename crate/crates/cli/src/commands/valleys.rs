use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use rand::Rng as _;
use rbmlab::anneal::{rbm_to_qubo, Backend, SampleOptions, Sampler};
use rbmlab::bits::{BinaryVector, JointState};
use rbmlab::gibbs::run_chain_with;
use rbmlab::rbm::RbmModel;
use rbmlab::rng;
use rbmlab::valley::{assign_to_valleys, complete_tp, default_bin_width, valley_histogram, LocalValleyRecord, SourceTag};
use serde::{Deserialize, Serialize};

use crate::config::{bail_usage, load_config, load_model, set, to_value, BackendArgs, CommonArgs, DataArgs, DataConfig};
use crate::error::{Failure, ResultExt};
use crate::output::RunDir;

/// Largest model whose joint space the exhaustive population enumerates.
const EXHAUSTIVE_UNIT_LIMIT: usize = 24;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    /// Backend reads of the model's QUBO.
    Annealer,
    /// Final states of free-running Gibbs chains from random starts.
    Mcmc,
    /// Every joint state (small models only); sample sizes are ignored.
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValleysRun {
    pub data: DataConfig,
    pub checkpoint: String,
    pub source: Population,
    pub sample_sizes: Vec<usize>,
    pub backend: Backend,
    pub sample_options: SampleOptions,
    pub target_weight: f64,
    pub mcmc_steps: usize,
    /// Also histogram the training patterns.
    pub include_tps: bool,
    /// Energy bin width; a twentieth of each population's range when unset.
    pub bin_width: Option<f64>,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ValleysRun {
    fn default() -> Self {
        ValleysRun {
            data: DataConfig::default(),
            checkpoint: String::new(),
            source: Population::Annealer,
            sample_sizes: vec![1000, 10_000],
            backend: Backend::default(),
            sample_options: SampleOptions {
                hard_clamp: true,
                auto_scale: true,
            },
            target_weight: 1.0,
            mcmc_steps: 200,
            include_tps: true,
            bin_width: None,
            rng_seed: 0,
            out_dir: "runs".into(),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ValleysArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long, value_enum)]
    pub source: Option<Population>,
    /// Comma-separated population sizes, e.g. 1000,10000
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub target_weight: Option<f64>,
    #[arg(long)]
    pub mcmc_steps: Option<usize>,
    #[arg(long)]
    pub include_tps: Option<bool>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

#[derive(Serialize)]
struct PopulationSummary {
    source: SourceTag,
    size: usize,
    n_valleys: usize,
    bin_width: f64,
    lowest_bin_avg_members: f64,
    highest_bin_avg_members: f64,
    histogram: String,
}

fn bits_string(v: &BinaryVector) -> String {
    v.iter().map(|b| char::from(b'0' + b)).collect()
}

fn records_csv(records: &[LocalValleyRecord]) -> String {
    let mut out = String::from("lm_energy,members,source_tag,v,h\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.lm_energy,
            r.members,
            r.source_tag,
            bits_string(&r.lm_state.v),
            bits_string(&r.lm_state.h)
        );
    }
    out
}

fn population(cfg: &ValleysRun, m: &RbmModel, size: usize) -> Result<Vec<JointState>, Failure> {
    let seed = rng::derive_seed(cfg.rng_seed, &[size as u64]);
    match cfg.source {
        Population::Annealer => {
            let (q, _) = rbm_to_qubo(m, cfg.target_weight).runtime()?;
            let ss = cfg
                .backend
                .sample(&q, size, &cfg.sample_options, &mut rng::from_seed(seed))
                .runtime()?;
            Ok(ss.expanded().iter().map(|x| JointState::from_flat(x, m.n_visible())).collect())
        }
        Population::Mcmc => Ok((0..size)
                        .map(|i| {
                let mut r = rng::substream(seed, &[i as u64]);
                let v = BinaryVector::from_bits((0..m.n_visible()).map(|_| r.random_range(0..2u8)));
                run_chain_with(m, &v, cfg.mcmc_steps, m.temperature(), &mut r)
            })
            .collect()),
        Population::Exhaustive => Ok((0..1u64 << m.n_units())
            .map(|k| JointState::from_index(m.n_visible(), m.n_hidden(), k))
            .collect()),
    }
}

fn emit(
    run: &mut RunDir,
    name: &str,
    size: usize,
    records: &[LocalValleyRecord],
    cfg: &ValleysRun,
    tag: SourceTag,
) -> Result<PopulationSummary, Failure> {
    let width = cfg.bin_width.unwrap_or_else(|| default_bin_width(records));
    let hist = valley_histogram(records, width).runtime()?;
    let mut buf = Vec::new();
    hist.write_csv(tag, &mut buf).runtime()?;
    let rel = format!("valleys/{name}.csv");
    run.write(&rel, &buf)?;
    run.write(&format!("valleys/{name}_records.csv"), records_csv(records).as_bytes())?;
    let (lo, hi) = hist.extreme_averages().expect("nonempty histogram");
    println!(
        "{name}: {} valleys, lowest-bin avg members {lo:.2}, highest-bin avg members {hi:.2}",
        records.len()
    );
    Ok(PopulationSummary {
        source: tag,
        size,
        n_valleys: records.len(),
        bin_width: width,
        lowest_bin_avg_members: lo,
        highest_bin_avg_members: hi,
        histogram: rel,
    })
}

pub fn run(args: ValleysArgs) -> Result<(), Failure> {
    let mut cfg: ValleysRun = load_config(args.common.config.as_deref())?;
    args.data.apply(&mut cfg.data);
    args.backend.apply(&mut cfg.backend)?;
    args.backend.apply_options(&mut cfg.sample_options);
    set(&mut cfg.checkpoint, &args.checkpoint);
    set(&mut cfg.source, &args.source);
    set(&mut cfg.sample_sizes, &args.sample_sizes);
    set(&mut cfg.target_weight, &args.target_weight);
    set(&mut cfg.mcmc_steps, &args.mcmc_steps);
    set(&mut cfg.include_tps, &args.include_tps);
    if args.bin_width.is_some() {
        cfg.bin_width = args.bin_width;
    }
    set(&mut cfg.rng_seed, &args.rng_seed);
    set(&mut cfg.out_dir, &args.common.out_dir);
    if cfg.source != Population::Exhaustive && (cfg.sample_sizes.is_empty() || cfg.sample_sizes.contains(&0)) {
        return bail_usage("sample sizes must be nonempty and positive".into());
    }
    if cfg.bin_width.is_some_and(|w| w.is_nan() || w <= 0.0) {
        return bail_usage("bin width must be positive".into());
    }
    if cfg.source == Population::Mcmc && cfg.mcmc_steps == 0 {
        return bail_usage("mcmc_steps must be at least 1".into());
    }
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    if cfg.checkpoint.is_empty() {
        return bail_usage("--checkpoint is required".into());
    }
    let m = load_model(&cfg.checkpoint, 0, 0)?;
    if cfg.source == Population::Exhaustive && m.n_units() > EXHAUSTIVE_UNIT_LIMIT {
        return bail_usage(format!(
            "exhaustive population needs at most {EXHAUSTIVE_UNIT_LIMIT} units, model has {}",
            m.n_units()
        ));
    }
    let tps = if cfg.include_tps {
        let train = cfg.data.load_train()?;
        if train.layout.n_visible() != m.n_visible() {
            return bail_usage(format!(
                "training patterns have {} visible bits, the model {}",
                train.layout.n_visible(),
                m.n_visible()
            ));
        }
        Some(train.visible_vectors())
    } else {
        None
    };

    let mut run = RunDir::create(&cfg.out_dir, args.common.run_name.as_deref(), "valleys", to_value(&cfg), cfg.rng_seed)
        .context("creating run directory")?;
    let mut summaries = Vec::new();
    let (tag, sizes) = match cfg.source {
        Population::Annealer => (SourceTag::Annealer, cfg.sample_sizes.clone()),
        Population::Mcmc => (SourceTag::Mcmc, cfg.sample_sizes.clone()),
        Population::Exhaustive => (SourceTag::Exhaustive, vec![1usize << m.n_units()]),
    };
    for size in sizes {
        let pop = population(&cfg, &m, size)?;
        let records = assign_to_valleys(&m, &pop, tag).runtime()?;
        summaries.push(emit(&mut run, &format!("{tag}_{size}"), size, &records, &cfg, tag)?);
    }
    if let Some(tps) = tps {
        let pop: Vec<JointState> = tps.iter().map(|v| complete_tp(&m, v)).collect();
        let records = assign_to_valleys(&m, &pop, SourceTag::Tp).runtime()?;
        summaries.push(emit(&mut run, "tp", pop.len(), &records, &cfg, SourceTag::Tp)?);
    }
    run.write_json("valleys.json", &summaries)?;
    let root = run.finish("ok")?;
    println!("run directory {}", root.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_population_covers_joint_space() {
        let m = RbmModel::random_uniform(3, 2, 1.0, &mut rng::from_seed(1));
        let cfg = ValleysRun {
            source: Population::Exhaustive,
            ..Default::default()
        };
        let pop = population(&cfg, &m, 0).unwrap();
        assert_eq!(pop.len(), 32);
        let distinct: std::collections::BTreeSet<_> = pop.iter().collect();
        assert_eq!(distinct.len(), 32);
    }

    #[test]
    fn records_csv_layout() {
        let rec = LocalValleyRecord {
            lm_state: JointState::new(BinaryVector::from_bits([1, 0]), BinaryVector::from_bits([1])),
            lm_energy: -1.5,
            members: 3,
            source_tag: SourceTag::Mcmc,
        };
        assert_eq!(records_csv(&[rec]), "lm_energy,members,source_tag,v,h\n-1.5,3,mcmc,10,1\n");
    }
}
