//! Flag groups shared by several subcommands and the JSON config-file layer.
//! Every command resolves its configuration as: built-in defaults, then the
//! `--config` file, then explicit flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use rbmlab::anneal::{Backend, ExactSampler, RemoteSampler, SampleOptions, SimulatedAnnealer};
use rbmlab::classify::ClassifyConfig;
use rbmlab::data::{load_digits_with, Dataset, Layout, SplitTag};
use rbmlab::rbm::RbmModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Failure, ResultExt};

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file (a run manifest also works); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Run directory name instead of a timestamp
    #[arg(long)]
    pub run_name: Option<String>,
    /// Print the resolved config as JSON and exit
    #[arg(long)]
    pub print_config: bool,
}

/// Reads a config file. A run manifest is recognized by its `command` and
/// `config` keys, in which case its `config` member is used.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .usage()?;
    let mut value: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .usage()?;
    if value.get("command").is_some() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    serde_json::from_value(value)
        .with_context(|| format!("config {}", path.display()))
        .usage()
}

pub fn to_value(cfg: &impl Serialize) -> Value {
    serde_json::to_value(cfg).expect("configs serialize to JSON")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_file: PathBuf,
    pub test_file: PathBuf,
    pub binarize_threshold: f64,
    pub n_pixels: usize,
    pub n_classes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_file: "data/digits_train.csv".into(),
            test_file: "data/digits_test.csv".into(),
            binarize_threshold: 0.5,
            n_pixels: Layout::DIGITS.n_pixels,
            n_classes: Layout::DIGITS.n_classes,
        }
    }
}

impl DataConfig {
    pub fn layout(&self) -> Layout {
        Layout {
            n_pixels: self.n_pixels,
            n_classes: self.n_classes,
        }
    }

    pub fn load_train(&self) -> Result<Dataset, Failure> {
        self.load(&self.train_file, SplitTag::Train)
    }

    pub fn load_test(&self) -> Result<Dataset, Failure> {
        self.load(&self.test_file, SplitTag::Test)
    }

    fn load(&self, path: &Path, split: SplitTag) -> Result<Dataset, Failure> {
        load_digits_with(path, self.binarize_threshold, split, self.layout())
            .with_context(|| format!("loading {}", path.display()))
            .runtime()
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Fraction of the file's maximum intensity at which a pixel turns on
    #[arg(long)]
    pub binarize_threshold: Option<f64>,
    /// Pixels per pattern (64 for 8×8 digits)
    #[arg(long)]
    pub n_pixels: Option<usize>,
    #[arg(long)]
    pub n_classes: Option<usize>,
}

impl DataArgs {
    pub fn apply(&self, d: &mut DataConfig) {
        set(&mut d.train_file, &self.train_file);
        set(&mut d.test_file, &self.test_file);
        set(&mut d.binarize_threshold, &self.binarize_threshold);
        set(&mut d.n_pixels, &self.n_pixels);
        set(&mut d.n_classes, &self.n_classes);
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ClassifyArgs {
    /// Gibbs steps discarded before label votes are counted
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Gibbs steps whose label bits are counted
    #[arg(long)]
    pub vote_steps: Option<usize>,
}

impl ClassifyArgs {
    pub fn apply(&self, c: &mut ClassifyConfig) {
        set(&mut c.burn_in, &self.burn_in);
        set(&mut c.vote_steps, &self.vote_steps);
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Exact,
    Sa,
    Remote,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Endpoint for the remote backend
    #[arg(long)]
    pub remote_url: Option<String>,
    #[arg(long)]
    pub annealing_time_us: Option<f64>,
    #[arg(long)]
    pub sa_sweeps: Option<usize>,
    #[arg(long)]
    pub sa_beta_min: Option<f64>,
    #[arg(long)]
    pub sa_beta_max: Option<f64>,
    /// Inverse temperature of the exact backend
    #[arg(long)]
    pub exact_beta: Option<f64>,
    /// Rescale problem coefficients into [-1, 1] before sampling
    #[arg(long)]
    pub auto_scale: Option<bool>,
    /// Fix clamped variables inside the backend
    #[arg(long)]
    pub hard_clamp: Option<bool>,
}

impl BackendArgs {
    pub fn apply(&self, backend: &mut Backend) -> Result<(), Failure> {
        if let Some(kind) = self.backend {
            let same = matches!(
                (kind, &*backend),
                (BackendKind::Exact, Backend::Exact(_))
                    | (BackendKind::Sa, Backend::SimulatedAnnealing(_))
                    | (BackendKind::Remote, Backend::Remote(_))
            );
            if !same {
                *backend = match kind {
                    BackendKind::Exact => Backend::Exact(ExactSampler::default()),
                    BackendKind::Sa => Backend::SimulatedAnnealing(SimulatedAnnealer::default()),
                    BackendKind::Remote => Backend::Remote(RemoteSampler::new("")),
                };
            }
        }
        match backend {
            Backend::Exact(s) => {
                set(&mut s.beta, &self.exact_beta);
            }
            Backend::SimulatedAnnealing(s) => {
                set(&mut s.sweeps, &self.sa_sweeps);
                set(&mut s.beta_min, &self.sa_beta_min);
                set(&mut s.beta_max, &self.sa_beta_max);
            }
            Backend::Remote(s) => {
                set(&mut s.url, &self.remote_url);
                set(&mut s.annealing_time_us, &self.annealing_time_us);
            }
        }
        let name = backend.name();
        let wrong = |flag: &str| bail_usage(format!("--{flag} does not apply to the {name} backend"));
        let exact = matches!(backend, Backend::Exact(_));
        let sa = matches!(backend, Backend::SimulatedAnnealing(_));
        let remote = matches!(backend, Backend::Remote(_));
        if !exact && self.exact_beta.is_some() {
            return wrong("exact-beta");
        }
        if !sa && (self.sa_sweeps.is_some() || self.sa_beta_min.is_some() || self.sa_beta_max.is_some()) {
            return wrong("sa-*");
        }
        if !remote && (self.remote_url.is_some() || self.annealing_time_us.is_some()) {
            return wrong("remote-url/--annealing-time-us");
        }
        if let Backend::Remote(s) = backend {
            if s.url.is_empty() {
                return Err(anyhow!("the remote backend needs --remote-url")).usage();
            }
        }
        Ok(())
    }

    pub fn apply_options(&self, opts: &mut SampleOptions) {
        set(&mut opts.auto_scale, &self.auto_scale);
        set(&mut opts.hard_clamp, &self.hard_clamp);
    }
}

/// Overwrites `slot` when the flag was given.
pub fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

/// A checkpoint path, or `zero-model` for an all-zero model of the given shape.
pub fn load_model(checkpoint: &str, n_visible: usize, n_hidden: usize) -> Result<RbmModel, Failure> {
    if checkpoint == "zero-model" {
        return Ok(RbmModel::zeros(n_visible, n_hidden));
    }
    if checkpoint.is_empty() {
        return Err(anyhow!("--checkpoint is required")).usage();
    }
    RbmModel::load(checkpoint).with_context(|| format!("loading checkpoint {checkpoint}")).runtime()
}

pub fn check_positive(name: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        bail_usage(format!("{name} must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn bail_usage<T>(msg: String) -> Result<T, Failure> {
    Err(Failure::Usage(anyhow!(msg)))
}
