//! Epoch loop for CD-k training with classical, annealer-seeded or hybrid
//! negative phases.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::anneal::{rbm_to_qubo, Backend, SampleOptions, Sampler};
use crate::bits::{BinaryVector, JointState};
use crate::error::{Error, Result};
use crate::gibbs::{negative_phase_sample, relax_to_lm, ChainConfig};
use crate::rbm::{apply_update, gradient_from_visible, GradientSet, RbmModel, UpdateRule};
use crate::rng;
use crate::seeds::{select_seeds, SeedKind, SeedStrategy};
use crate::valley::dedupe_lms;

/// How the final negative-phase visible layer enters the gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconstruction {
    /// Sampled binary states.
    #[default]
    Binary,
    /// `p(v | h)` of the last half-step.
    Probabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_hidden: usize,
    pub epochs: usize,
    pub k_steps: usize,
    pub temperature: f64,
    pub update: UpdateRule,
    pub strategy: SeedStrategy,
    /// Chains per negative phase; `None` means one per pattern in the batch.
    pub n_samples: Option<usize>,
    /// `None` trains on the full batch every epoch.
    pub batch_size: Option<usize>,
    pub reconstruction: Reconstruction,
    pub backend: Backend,
    pub n_reads: usize,
    pub sample_options: SampleOptions,
    pub target_weight: f64,
    /// Standard deviation of the initial weights; biases start at zero.
    pub init_std: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_hidden: 74,
            epochs: 100,
            k_steps: 1,
            temperature: 1.0,
            update: UpdateRule::default(),
            strategy: SeedStrategy::classical(),
            n_samples: None,
            batch_size: None,
            reconstruction: Reconstruction::Binary,
            backend: Backend::default(),
            n_reads: 1000,
            sample_options: SampleOptions {
                hard_clamp: true,
                auto_scale: true,
            },
            target_weight: 1.0,
            init_std: 0.01,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.update.validate()?;
        if self.k_steps == 0 {
            return Err(Error::InvalidArgument("k_steps must be ≥ 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("training temperature must be > 0".into()));
        }
        if self.n_samples == Some(0) || self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("n_samples and batch_size must be ≥ 1".into()));
        }
        if self.strategy.needs_annealer() && self.n_reads == 0 {
            return Err(Error::InvalidArgument("n_reads must be ≥ 1".into()));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::InvalidArgument("init_std must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Per-epoch record of where the negative-phase seeds came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub batches: usize,
    pub annealer_reads: usize,
    pub distinct_reads: usize,
    pub distinct_lms: usize,
    pub seeds_from_annealer: usize,
    pub seeds_from_tps: usize,
    pub with_replacement: bool,
    pub grad_max_abs: f64,
    pub scale_factor: f64,
}

/// Local minima from one annealer call, plus the raw read count.
pub struct AnnealerMinima {
    pub lms: Vec<JointState>,
    pub reads: usize,
    pub distinct_reads: usize,
    pub scale_factor: f64,
}

/// Sample the model's QUBO, drop duplicate reads, relax each to its minimum and
/// drop duplicate minima.
pub fn annealer_minima(
    m: &RbmModel,
    backend: &Backend,
    n_reads: usize,
    opts: &SampleOptions,
    target_weight: f64,
    rng: &mut rng::Rng,
) -> Result<AnnealerMinima> {
    let (qubo, sf) = rbm_to_qubo(m, target_weight)?;
    let ss = backend.sample(&qubo, n_reads, opts, rng)?;
    let states: Vec<JointState> = ss
        .expanded()
        .iter()
        .map(|x| JointState::from_flat(x, m.n_visible()))
        .collect();
    let distinct = dedupe_lms(&states);
    let lms: Vec<JointState> = distinct.iter().map(|s| relax_to_lm(m, s)).collect::<Result<_>>()?;
    Ok(AnnealerMinima {
        lms: dedupe_lms(&lms),
        reads: states.len(),
        distinct_reads: distinct.len(),
        scale_factor: sf,
    })
}

pub struct Trainer {
    pub config: TrainConfig,
    model: RbmModel,
    velocity: GradientSet,
    epoch: usize,
}

impl Trainer {
    /// Fresh model with `N(0, init_std²)` weights and zero biases.
    pub fn new(config: TrainConfig, n_visible: usize) -> Result<Self> {
        config.validate()?;
        let model = RbmModel::random(
            n_visible,
            config.n_hidden,
            config.init_std,
            &mut rng::substream(config.rng_seed, &[0]),
        )
        .with_temperature(config.temperature)?;
        Ok(Self::from_model(config, model))
    }

    /// Continues training `model`; momentum starts from zero.
    pub fn from_model(config: TrainConfig, model: RbmModel) -> Self {
        let velocity = GradientSet::zeros_like(&model);
        Trainer {
            config,
            model,
            velocity,
            epoch: 0,
        }
    }

    pub fn model(&self) -> &RbmModel {
        &self.model
    }

    pub fn into_model(self) -> RbmModel {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Re-seeds the stream family, e.g. for a new task on the same model.
    pub fn reseed(&mut self, rng_seed: u64) {
        self.config.rng_seed = rng_seed;
        self.epoch = 0;
    }

    fn negative_visible(&self, batch: &[BinaryVector], stream: &[u64]) -> Result<(Vec<Vec<f64>>, EpochLog)> {
        let cfg = &self.config;
        let m = &self.model;
        let n_target = cfg.n_samples.unwrap_or(batch.len());
        let mut log = EpochLog {
            epoch: self.epoch,
            batches: 1,
            annealer_reads: 0,
            distinct_reads: 0,
            distinct_lms: 0,
            seeds_from_annealer: 0,
            seeds_from_tps: 0,
            with_replacement: false,
            grad_max_abs: 0.0,
            scale_factor: 1.0,
        };
        let seeds: Vec<JointState> = if cfg.strategy.kind == SeedKind::ClassicalTp && n_target == batch.len() {
            // standard CD: every pattern in the batch seeds one chain
            log.seeds_from_tps = batch.len();
            batch
                .iter()
                .map(|v| JointState::new(v.clone(), BinaryVector::zeros(m.n_hidden())))
                .collect()
        } else {
            let lms = if cfg.strategy.annealer_quota(n_target) > 0 {
                let mut r = rng::substream(cfg.rng_seed, &[stream, &[0]].concat());
                let found = annealer_minima(
                    m,
                    &cfg.backend,
                    cfg.n_reads,
                    &cfg.sample_options,
                    cfg.target_weight,
                    &mut r,
                )?;
                log.annealer_reads = found.reads;
                log.distinct_reads = found.distinct_reads;
                log.distinct_lms = found.lms.len();
                log.scale_factor = found.scale_factor;
                found.lms
            } else {
                Vec::new()
            };
            let mut r = rng::substream(cfg.rng_seed, &[stream, &[1]].concat());
            let sel = select_seeds(batch, &lms, m, n_target, &cfg.strategy, &mut r)?;
            log.seeds_from_annealer = sel.from_annealer;
            log.seeds_from_tps = sel.from_tps;
            log.with_replacement = sel.with_replacement;
            sel.seeds
        };
        let chain = ChainConfig {
            k_steps: cfg.k_steps,
            temperature: m.temperature(),
            rng_seed: rng::derive_seed(cfg.rng_seed, &[stream, &[2]].concat()),
        };
        let finals = negative_phase_sample(m, &seeds, &chain)?;
        let negative = match cfg.reconstruction {
            Reconstruction::Binary => finals.iter().map(|s| s.v.to_f64()).collect(),
            Reconstruction::Probabilities => finals
                .iter()
                .map(|s| m.visible_conditionals(&s.h))
                .collect::<Result<_>>()?,
        };
        Ok((negative, log))
    }

    /// One pass over `data`; returns the seed log for the epoch.
    pub fn train_epoch(&mut self, data: &[BinaryVector]) -> Result<EpochLog> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training data"));
        }
        let epoch = self.epoch as u64;
        let batches: Vec<Vec<BinaryVector>> = match self.config.batch_size {
            None => vec![data.to_vec()],
            Some(bs) => {
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(&mut rng::substream(self.config.rng_seed, &[1, epoch, u64::MAX]));
                order
                    .chunks(bs)
                    .map(|c| c.iter().map(|&i| data[i].clone()).collect())
                    .collect()
            }
        };
        let mut total: Option<EpochLog> = None;
        for (b, batch) in batches.iter().enumerate() {
            let stream = [1, epoch, b as u64];
            let (negative, mut log) = self
                .negative_visible(batch, &stream)
                .map_err(|e| e.at_epoch(self.epoch))?;
            let positive: Vec<Vec<f64>> = batch.iter().map(|v| v.to_f64()).collect();
            let g = gradient_from_visible(&self.model, &positive, &negative)?;
            log.grad_max_abs = g.max_abs();
            let (next, vel) = apply_update(&self.model, &g, &self.config.update, &self.velocity)
                .map_err(|e| e.at_epoch(self.epoch))?;
            self.model = next;
            self.velocity = vel;
            total = Some(match total {
                None => log,
                Some(mut acc) => {
                    acc.batches += 1;
                    acc.annealer_reads += log.annealer_reads;
                    acc.distinct_reads += log.distinct_reads;
                    acc.distinct_lms += log.distinct_lms;
                    acc.seeds_from_annealer += log.seeds_from_annealer;
                    acc.seeds_from_tps += log.seeds_from_tps;
                    acc.with_replacement |= log.with_replacement;
                    acc.grad_max_abs = acc.grad_max_abs.max(log.grad_max_abs);
                    acc.scale_factor = log.scale_factor;
                    acc
                }
            });
        }
        self.epoch += 1;
        Ok(total.expect("at least one batch"))
    }

    /// `config.epochs` epochs; `on_epoch` sees each log and the updated model.
    pub fn run<F>(&mut self, data: &[BinaryVector], mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&EpochLog, &RbmModel) -> Result<()>,
    {
        for _ in 0..self.config.epochs {
            let log = self.train_epoch(data)?;
            log::debug!(
                "epoch {}: |g|max {:.3e}, seeds {} annealer / {} tp",
                log.epoch,
                log.grad_max_abs,
                log.seeds_from_annealer,
                log.seeds_from_tps
            );
            on_epoch(&log, &self.model)?;
        }
        Ok(())
    }
}
