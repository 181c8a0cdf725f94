use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rbmlab::ais::{ais_log_z, log_likelihood, AisConfig, Schedule};
use rbmlab::data::{load_digits_with, SplitTag};
use serde::{Deserialize, Serialize};

use crate::config::{load_config, load_model, set, to_value, CommonArgs, DataArgs, DataConfig};
use crate::error::{Failure, ResultExt};
use crate::output::RunDir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AisRun {
    pub data: DataConfig,
    pub checkpoint: String,
    pub ais: AisConfig,
    /// Also enumerate `ln Z` exactly (small models only).
    pub verify_exact: bool,
    /// Digits file whose average log-likelihood is reported.
    pub ll_file: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for AisRun {
    fn default() -> Self {
        AisRun {
            data: DataConfig::default(),
            checkpoint: String::new(),
            ais: AisConfig::default(),
            verify_exact: false,
            ll_file: None,
            out_dir: "runs".into(),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct AisArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub n_temps: Option<usize>,
    #[arg(long)]
    pub n_chains: Option<usize>,
    /// linear or geometric spacing of the inverse temperatures
    #[arg(long, value_parser = parse_schedule)]
    pub schedule: Option<Schedule>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub verify_exact: bool,
    #[arg(long)]
    pub ll_file: Option<PathBuf>,
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    match s {
        "linear" => Ok(Schedule::Linear),
        "geometric" => Ok(Schedule::Geometric),
        other => Err(format!("unknown schedule {other:?}")),
    }
}

#[derive(Serialize)]
struct Report {
    log_z: f64,
    std_err: f64,
    n_chains: usize,
    n_temps: usize,
    exact_log_z: Option<f64>,
    gap: Option<f64>,
    log_likelihood: Option<f64>,
}

pub fn run(args: AisArgs) -> Result<(), Failure> {
    let mut cfg: AisRun = load_config(args.common.config.as_deref())?;
    args.data.apply(&mut cfg.data);
    set(&mut cfg.checkpoint, &args.checkpoint);
    set(&mut cfg.ais.n_temps, &args.n_temps);
    set(&mut cfg.ais.n_chains, &args.n_chains);
    set(&mut cfg.ais.schedule, &args.schedule);
    set(&mut cfg.ais.rng_seed, &args.rng_seed);
    cfg.verify_exact |= args.verify_exact;
    if args.ll_file.is_some() {
        cfg.ll_file = args.ll_file.clone();
    }
    set(&mut cfg.out_dir, &args.common.out_dir);
    cfg.ais.validate().usage()?;
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let m = load_model(&cfg.checkpoint, 0, 0)?;
    let exact = if cfg.verify_exact {
        Some(m.exact_log_partition().context("exact ln Z").usage()?)
    } else {
        None
    };
    let data = match &cfg.ll_file {
        Some(p) => {
            let d = load_digits_with(p, cfg.data.binarize_threshold, SplitTag::Train, cfg.data.layout())
                .with_context(|| format!("loading {}", p.display()))
                .runtime()?;
            if d.layout.n_visible() != m.n_visible() {
                return crate::config::bail_usage(format!(
                    "{} has {} visible bits, the model {}",
                    p.display(),
                    d.layout.n_visible(),
                    m.n_visible()
                ));
            }
            Some(d.visible_vectors())
        }
        None => None,
    };

    let mut run = RunDir::create(&cfg.out_dir, args.common.run_name.as_deref(), "ais", to_value(&cfg), cfg.ais.rng_seed)
        .context("creating run directory")?;
    let est = ais_log_z(&m, &cfg.ais).runtime()?;
    println!("AIS ln Z = {:.6} ± {:.6}", est.log_z, est.std_err);
    if let Some(z) = exact {
        println!("exact ln Z = {z:.6}, gap {:.6}", est.log_z - z);
    }
    let ll = match &data {
        Some(d) => {
            let ll = log_likelihood(&m, d, est.log_z).runtime()?;
            println!("average log-likelihood {ll:.6}");
            Some(ll)
        }
        None => None,
    };
    run.write_json(
        "ais.json",
        &Report {
            log_z: est.log_z,
            std_err: est.std_err,
            n_chains: est.n_chains,
            n_temps: cfg.ais.n_temps,
            exact_log_z: exact,
            gap: exact.map(|z| est.log_z - z),
            log_likelihood: ll,
        },
    )?;
    let root = run.finish("ok")?;
    println!("run directory {}", root.display());
    Ok(())
}
