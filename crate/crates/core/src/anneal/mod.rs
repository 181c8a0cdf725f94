//! Annealer abstraction: the QUBO encoding of an RBM and interchangeable
//! samplers over it (exact enumeration, simulated annealing, remote service).

mod exact;
mod qubo;
mod remote;
mod sa;

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bits::BinaryVector;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub use exact::{exact_ground_state, ExactSampler, EXACT_VAR_LIMIT};
pub use qubo::{clamp_vars, joint_from_qubo, rbm_to_qubo, QuboProblem};
pub use remote::{RemoteRequest, RemoteResponse, RemoteSampler, WireCoupling, WireParams};
pub use sa::SimulatedAnnealer;

pub const DEFAULT_CLAMP_STRENGTH: f64 = 4.0;

/// Reads returned by a sampler. Energies are always evaluated on the problem
/// as given by the caller, never on an internally rescaled copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub states: Vec<BinaryVector>,
    pub energies: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl SampleSet {
    /// One entry per read, each with multiplicity 1.
    pub fn from_reads(p: &QuboProblem, states: Vec<BinaryVector>) -> Result<Self> {
        let energies = states.iter().map(|s| p.energy(s)).collect::<Result<Vec<_>>>()?;
        let multiplicities = vec![1; states.len()];
        Ok(SampleSet {
            states,
            energies,
            multiplicities,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_reads(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Merges identical states, summing multiplicities; ordered by state bits.
    pub fn aggregate(&self) -> SampleSet {
        let mut merged: BTreeMap<&BinaryVector, (f64, usize)> = BTreeMap::new();
        for ((s, &e), &k) in self.states.iter().zip(&self.energies).zip(&self.multiplicities) {
            merged.entry(s).or_insert((e, 0)).1 += k;
        }
        let mut out = SampleSet {
            states: Vec::with_capacity(merged.len()),
            energies: Vec::with_capacity(merged.len()),
            multiplicities: Vec::with_capacity(merged.len()),
        };
        for (s, (e, k)) in merged {
            out.states.push(s.clone());
            out.energies.push(e);
            out.multiplicities.push(k);
        }
        out
    }

    /// Every read expanded by multiplicity.
    pub fn expanded(&self) -> Vec<BinaryVector> {
        self.states
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(s, &k)| std::iter::repeat_n(s.clone(), k))
            .collect()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.energies.iter().copied().reduce(f64::min)
    }

    pub fn mean_energy(&self) -> Option<f64> {
        let n = self.total_reads();
        (n > 0).then(|| {
            self.energies
                .iter()
                .zip(&self.multiplicities)
                .map(|(e, &k)| e * k as f64)
                .sum::<f64>()
                / n as f64
        })
    }

    /// Largest deviation between stored energies and energies recomputed on `p`.
    pub fn energy_discrepancy(&self, p: &QuboProblem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (s, e) in self.states.iter().zip(&self.energies) {
            worst = worst.max((p.energy(s)? - e).abs());
        }
        Ok(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    /// Fix clamped variables inside the backend on top of the biased linear term.
    pub hard_clamp: bool,
    /// Rescale coefficients into [-1, 1] before sampling.
    pub auto_scale: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            hard_clamp: true,
            auto_scale: false,
        }
    }
}

pub trait Sampler {
    fn sample(
        &self,
        p: &QuboProblem,
        n_reads: usize,
        opts: &SampleOptions,
        rng: &mut Rng,
    ) -> Result<SampleSet>;
}

/// Backend selection with its parameters, as stored in configs and manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Exact(ExactSampler),
    SimulatedAnnealing(SimulatedAnnealer),
    Remote(RemoteSampler),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exact(_) => "exact",
            Backend::SimulatedAnnealing(_) => "sa",
            Backend::Remote(_) => "remote",
        }
    }
}

impl Default for Backend {
    fn default() -> Self {
        Backend::SimulatedAnnealing(SimulatedAnnealer::default())
    }
}

impl Sampler for Backend {
    fn sample(
        &self,
        p: &QuboProblem,
        n_reads: usize,
        opts: &SampleOptions,
        rng: &mut Rng,
    ) -> Result<SampleSet> {
        let ss = match self {
            Backend::Exact(s) => s.sample(p, n_reads, opts, rng),
            Backend::SimulatedAnnealing(s) => s.sample(p, n_reads, opts, rng),
            Backend::Remote(s) => s.sample(p, n_reads, opts, rng),
        }?;
        log::debug!(
            "{} backend: {} reads, min energy {:?}",
            self.name(),
            ss.total_reads(),
            ss.min_energy()
        );
        Ok(ss)
    }
}

pub(crate) fn check_reads(n_reads: usize) -> Result<()> {
    if n_reads == 0 {
        Err(Error::InvalidArgument("n_reads must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// The problem a backend should actually anneal: rescaled into [-1, 1] when requested.
pub(crate) fn working_problem(p: &QuboProblem, opts: &SampleOptions) -> QuboProblem {
    let max = p.max_abs_coefficient();
    if opts.auto_scale && max > 0.0 {
        p.scaled(1.0 / max)
    } else {
        p.clone()
    }
}

/// Majority bit; an exact tie is a fair coin from `rng`.
pub fn majority_vote(chain_bits: &[u8], rng: &mut Rng) -> Result<u8> {
    if chain_bits.is_empty() {
        return Err(Error::EmptyInput("chain bits"));
    }
    let ones = chain_bits.iter().filter(|&&b| b != 0).count();
    let zeros = chain_bits.len() - ones;
    Ok(match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => u8::from(rng.random::<bool>()),
    })
}

/// Fraction of reads, weighted by multiplicity, with energy ≤ `gs_energy + tol`.
pub fn ground_state_rate(ss: &SampleSet, gs_energy: f64, tol: f64) -> f64 {
    let total = ss.total_reads();
    if total == 0 {
        return 0.0;
    }
    let hits: usize = ss
        .energies
        .iter()
        .zip(&ss.multiplicities)
        .filter(|(e, _)| **e <= gs_energy + tol.max(0.0))
        .map(|(_, &k)| k)
        .sum();
    hits as f64 / total as f64
}
