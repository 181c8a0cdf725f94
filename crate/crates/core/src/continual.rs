//! Task-incremental learning over class pairs, with optional generative replay
//! of class-conditional memories drawn from the model itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::anneal::{clamp_vars, rbm_to_qubo, Backend, SampleOptions, Sampler, DEFAULT_CLAMP_STRENGTH};
use crate::bits::BinaryVector;
use crate::classify::{classify_batch, generate_memories_mcmc, ClassifyConfig};
use crate::data::{encode_visible_with, filter_classes, Dataset, LabeledPattern, Layout};
use crate::error::{Error, Result};
use crate::rbm::RbmModel;
use crate::rng::{self, Rng};
use crate::train::{TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub tasks: Vec<(usize, usize)>,
}

impl Default for TaskSchedule {
    fn default() -> Self {
        TaskSchedule {
            tasks: vec![(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)],
        }
    }
}

impl TaskSchedule {
    pub fn new(tasks: Vec<(usize, usize)>, n_classes: usize) -> Result<Self> {
        let s = TaskSchedule { tasks };
        s.validate(n_classes)?;
        Ok(s)
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::EmptyInput("task schedule"));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.tasks {
            for c in [a, b] {
                if c >= n_classes {
                    return Err(Error::InvalidArgument(format!("class {c} out of range")));
                }
                if !seen.insert(c) {
                    return Err(Error::InvalidArgument(format!("class {c} appears in two tasks")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    None,
    Mcmc,
    Annealer,
}

impl FromStr for ReplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ReplayMode::None),
            "mcmc" => Ok(ReplayMode::Mcmc),
            "annealer" | "dw" => Ok(ReplayMode::Annealer),
            other => Err(Error::InvalidArgument(format!("unknown replay mode {other:?}"))),
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplayMode::None => "none",
            ReplayMode::Mcmc => "mcmc",
            ReplayMode::Annealer => "annealer",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySelector {
    /// The `k_mem` correctly classified candidates of lowest free energy, chosen once.
    LowestEnergy,
    /// `k_mem` uniform draws from the correctly classified pool, chosen once.
    RandomCorrect,
}

impl FromStr for MemorySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest-energy" | "lowest_energy" => Ok(MemorySelector::LowestEnergy),
            "random-correct" | "random_correct" => Ok(MemorySelector::RandomCorrect),
            other => Err(Error::InvalidArgument(format!("unknown memory selector {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub mode: ReplayMode,
    pub k_mem: usize,
    pub selector: MemorySelector,
    /// Candidate memories generated per class.
    pub generator_reads: usize,
    /// Chain length for MCMC generation.
    pub mcmc_steps: usize,
    pub clamp_strength: f64,
    /// Backend for annealer generation; auto-scale is always forced off.
    pub backend: Backend,
    pub hard_clamp: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            mode: ReplayMode::None,
            k_mem: 100,
            selector: MemorySelector::LowestEnergy,
            generator_reads: 1000,
            mcmc_steps: 200,
            clamp_strength: DEFAULT_CLAMP_STRENGTH,
            backend: Backend::default(),
            hard_clamp: true,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode != ReplayMode::None {
            if self.k_mem == 0 || self.k_mem > self.generator_reads {
                return Err(Error::InvalidArgument(format!(
                    "k_mem {} must lie in 1..={}",
                    self.k_mem, self.generator_reads
                )));
            }
            if !(self.clamp_strength > 0.0) {
                return Err(Error::InvalidArgument("clamp strength must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    pub schedule: TaskSchedule,
    pub replay: ReplayConfig,
    pub train: TrainConfig,
    pub epochs_per_task: usize,
    pub classify: ClassifyConfig,
    /// Vote only over the two classes of the tested pair.
    pub restricted_decoding: bool,
    pub rng_seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            schedule: TaskSchedule::default(),
            replay: ReplayConfig::default(),
            train: TrainConfig::default(),
            epochs_per_task: 100,
            classify: ClassifyConfig::default(),
            restricted_decoding: true,
            rng_seed: 0,
        }
    }
}

/// A generated pattern together with the task after which it was generated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    pub pattern: LabeledPattern,
    pub task: usize,
}

/// Stored replay material for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub class_id: usize,
    pub task: usize,
    pub memories: Vec<LabeledPattern>,
}

impl MemoryBank {
    /// The stored memories, stamped with the task that produced them.
    pub fn replay(&self) -> Vec<Memory> {
        self.memories
            .iter()
            .map(|pattern| Memory {
                pattern: pattern.clone(),
                task: self.task,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub pairs: Vec<(usize, usize)>,
    /// `error_matrix[task][pair]`, evaluated after each task on every pair.
    pub error_matrix: Vec<Vec<f64>>,
    /// Memories replayed per epoch during each task.
    pub memories_per_task: Vec<usize>,
}

impl ForgettingReport {
    pub fn error(&self, task: usize, pair: usize) -> f64 {
        self.error_matrix[task][pair]
    }

    /// CSV with one row per task and one column per pair.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let header: Vec<String> = self.pairs.iter().map(|(a, b)| format!("pair_{a}_{b}")).collect();
        writeln!(out, "task,{}", header.join(","))?;
        for (t, row) in self.error_matrix.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{},{}", t + 1, cells.join(","))?;
        }
        Ok(())
    }
}

/// Samples the clamped QUBO of `m` with the label block fixed to `one-hot(class_id)`
/// and returns the pixel part of every read.
#[allow(clippy::too_many_arguments)]
pub fn generate_memories_annealer(
    m: &RbmModel,
    layout: Layout,
    class_id: usize,
    backend: &Backend,
    n_reads: usize,
    clamp_strength: f64,
    hard_clamp: bool,
    rng: &mut Rng,
) -> Result<Vec<LabeledPattern>> {
    if class_id >= layout.n_classes {
        return Err(Error::InvalidArgument(format!("class {class_id} out of range")));
    }
    crate::error::check_len("model visible layer", layout.n_visible(), m.n_visible())?;
    let (qubo, _) = rbm_to_qubo(m, 1.0)?;
    let clamps: BTreeMap<usize, u8> = (0..layout.n_classes)
        .map(|c| (layout.label_bit(c), u8::from(c == class_id)))
        .collect();
    let clamped = clamp_vars(&qubo, &clamps, clamp_strength)?;
    let opts = SampleOptions {
        hard_clamp,
        auto_scale: false,
    };
    let ss = backend.sample(&clamped, n_reads, &opts, rng)?;
    Ok(ss
        .expanded()
        .into_iter()
        .map(|x| {
            LabeledPattern::new(
                BinaryVector::from_bits(x.as_slice()[..layout.n_pixels].iter().copied()),
                class_id,
            )
        })
        .collect())
}

/// Candidates whose pixels the model classifies (10-way) as their tagged class.
pub fn correct_candidates(
    candidates: &[LabeledPattern],
    m: &RbmModel,
    layout: Layout,
    cfg: &ClassifyConfig,
    rng_seed: u64,
) -> Result<Vec<LabeledPattern>> {
    let preds = classify_batch(m, layout, candidates, cfg, None, rng_seed)?;
    Ok(candidates
        .iter()
        .zip(preds)
        .filter(|(c, p)| c.label == *p)
        .map(|(c, _)| c.clone())
        .collect())
}

fn pick_random(pool: &[LabeledPattern], k: usize, rng: &mut Rng) -> Vec<LabeledPattern> {
    let k = k.min(pool.len());
    index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i].clone()).collect()
}

/// `k_mem` of the lowest free-energy patterns, ties broken by input order.
pub fn lowest_energy(pool: &[LabeledPattern], m: &RbmModel, layout: Layout, k_mem: usize) -> Result<Vec<LabeledPattern>> {
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((m.free_energy(&encode_visible_with(layout, p))?, i)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k_mem).map(|(_, i)| pool[i].clone()).collect())
}

/// Filters to correctly classified candidates, then applies `selector`.
pub fn select_memories(
    candidates: &[LabeledPattern],
    m: &RbmModel,
    layout: Layout,
    selector: MemorySelector,
    k_mem: usize,
    classify_cfg: &ClassifyConfig,
    rng: &mut Rng,
) -> Result<Vec<LabeledPattern>> {
    let class_id = candidates.first().map(|c| c.label).ok_or(Error::EmptyInput("memory candidates"))?;
    let seed: u64 = rand::Rng::random(rng);
    let pool = correct_candidates(candidates, m, layout, classify_cfg, seed)?;
    if pool.is_empty() {
        return Err(Error::EmptyMemories(class_id));
    }
    if pool.len() < k_mem {
        log::warn!(
            "class {class_id}: only {} of {k_mem} requested memories classified correctly",
            pool.len()
        );
    }
    match selector {
        MemorySelector::LowestEnergy => lowest_energy(&pool, m, layout, k_mem),
        MemorySelector::RandomCorrect => Ok(pick_random(&pool, k_mem, rng)),
    }
}

/// Misclassification rate per pair. With `restricted`, the vote is limited to
/// the pair's two classes.
pub fn evaluate_forgetting(
    m: &RbmModel,
    test: &Dataset,
    pairs: &[(usize, usize)],
    cfg: &ClassifyConfig,
    restricted: bool,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("evaluation pairs"));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let patterns: Vec<LabeledPattern> = test
                .patterns
                .iter()
                .filter(|p| p.label == a || p.label == b)
                .cloned()
                .collect();
            if patterns.is_empty() {
                return Err(Error::PairAbsent((a, b)));
            }
            let allowed = [a, b];
            let preds = classify_batch(
                m,
                test.layout,
                &patterns,
                cfg,
                restricted.then_some(&allowed[..]),
                rng::derive_seed(rng_seed, &[k as u64]),
            )?;
            let wrong = preds.iter().zip(&patterns).filter(|(p, t)| **p != t.label).count();
            Ok(wrong as f64 / patterns.len() as f64)
        })
        .collect()
}

fn build_bank(
    m: &RbmModel,
    layout: Layout,
    class_id: usize,
    task: usize,
    cfg: &CfConfig,
) -> Result<MemoryBank> {
    let replay = &cfg.replay;
    let seed = rng::derive_seed(cfg.rng_seed, &[2, task as u64, class_id as u64]);
    let candidates = match replay.mode {
        ReplayMode::None => unreachable!("no banks without replay"),
        ReplayMode::Mcmc => {
            generate_memories_mcmc(m, layout, class_id, replay.generator_reads, replay.mcmc_steps, seed)?
        }
        ReplayMode::Annealer => generate_memories_annealer(
            m,
            layout,
            class_id,
            &replay.backend,
            replay.generator_reads,
            replay.clamp_strength,
            replay.hard_clamp,
            &mut rng::substream(seed, &[0]),
        )?,
    };
    let memories = select_memories(
        &candidates,
        m,
        layout,
        replay.selector,
        replay.k_mem,
        &cfg.classify,
        &mut rng::substream(seed, &[1]),
    )?;
    log::info!(
        "task {}: class {class_id}, {} memories from {} candidates",
        task + 1,
        memories.len(),
        candidates.len()
    );
    Ok(MemoryBank {
        class_id,
        task,
        memories,
    })
}

/// Runs every task in order and evaluates all pairs after each one.
/// `on_task` sees the task index, the model after that task and its error row.
pub fn run_schedule_with<F>(cfg: &CfConfig, train: &Dataset, test: &Dataset, mut on_task: F) -> Result<ForgettingReport>
where
    F: FnMut(usize, &RbmModel, &[f64]) -> Result<()>,
{
    let layout = train.layout;
    cfg.schedule.validate(layout.n_classes)?;
    cfg.replay.validate()?;
    let pairs = cfg.schedule.tasks.clone();
    let mut banks: Vec<MemoryBank> = Vec::new();
    let mut model: Option<RbmModel> = None;
    let mut report = ForgettingReport {
        pairs: pairs.clone(),
        error_matrix: Vec::new(),
        memories_per_task: Vec::new(),
    };
    for (task, &(a, b)) in pairs.iter().enumerate() {
        let mut tcfg = cfg.train.clone();
        tcfg.rng_seed = rng::derive_seed(cfg.rng_seed, &[1, task as u64]);
        let tps = filter_classes(train, &BTreeSet::from([a, b])).map_err(|e| e.at_task(task))?;
        let tp_vectors = tps.visible_vectors();
        let mut trainer = match model.take() {
            None => Trainer::new(tcfg, layout.n_visible()),
            Some(m) => {
                tcfg.validate()?;
                Ok(Trainer::from_model(tcfg, m))
            }
        }
        .map_err(|e| e.at_task(task))?;
        let mut replayed = 0;
        for epoch in 0..cfg.epochs_per_task {
            let mut data = tp_vectors.clone();
            let mut r = rng::substream(cfg.rng_seed, &[3, task as u64, epoch as u64]);
            for bank in &banks {
                let mems = bank.replay();
                debug_assert!(mems.iter().all(|mm| mm.task == bank.task && mm.task < task));
                data.extend(mems.iter().map(|mm| encode_visible_with(layout, &mm.pattern)));
            }
            replayed = data.len() - tp_vectors.len();
            if !banks.is_empty() {
                data.shuffle(&mut r);
            }
            trainer.train_epoch(&data).map_err(|e| e.at_task(task))?;
        }
        let m = trainer.into_model();
        let row = evaluate_forgetting(
            &m,
            test,
            &pairs,
            &cfg.classify,
            cfg.restricted_decoding,
            rng::derive_seed(cfg.rng_seed, &[4, task as u64]),
        )
        .map_err(|e| e.at_task(task))?;
        log::info!("task {}: errors {:?}", task + 1, row);
        on_task(task, &m, &row)?;
        if cfg.replay.mode != ReplayMode::None && task + 1 < pairs.len() {
            for c in [a, b] {
                banks.push(build_bank(&m, layout, c, task, cfg).map_err(|e| e.at_task(task))?);
            }
        }
        report.error_matrix.push(row);
        report.memories_per_task.push(replayed);
        model = Some(m);
    }
    Ok(report)
}

pub fn run_schedule(cfg: &CfConfig, train: &Dataset, test: &Dataset) -> Result<ForgettingReport> {
    run_schedule_with(cfg, train, test, |_, _, _| Ok(()))
}
