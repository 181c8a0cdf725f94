//! Chain-seed selection: uniformly drawn training patterns, Boltzmann-weighted
//! local minima from annealer reads, or a mix of the two.

use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::error::{check_len, Error, Result};
use crate::gibbs::sample_hidden;
use crate::rbm::RbmModel;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedKind {
    /// Classical CD: chains start at training patterns.
    #[serde(rename = "cd")]
    ClassicalTp,
    /// Chains start at local minima found from annealer reads.
    #[serde(rename = "dw")]
    AnnealerLm,
    Hybrid,
}

impl FromStr for SeedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" | "classical" => Ok(SeedKind::ClassicalTp),
            "dw" | "annealer" => Ok(SeedKind::AnnealerLm),
            "hybrid" => Ok(SeedKind::Hybrid),
            other => Err(Error::InvalidArgument(format!(
                "unknown seed strategy {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedStrategy {
    pub kind: SeedKind,
    /// Fraction of seeds drawn from annealer minima.
    pub mix_fraction: f64,
}

impl SeedStrategy {
    pub fn classical() -> Self {
        SeedStrategy {
            kind: SeedKind::ClassicalTp,
            mix_fraction: 0.0,
        }
    }

    pub fn annealer() -> Self {
        SeedStrategy {
            kind: SeedKind::AnnealerLm,
            mix_fraction: 1.0,
        }
    }

    pub fn hybrid(mix_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mix_fraction) {
            return Err(Error::InvalidArgument(format!(
                "mix fraction {mix_fraction} outside [0, 1]"
            )));
        }
        Ok(SeedStrategy {
            kind: SeedKind::Hybrid,
            mix_fraction,
        })
    }

    /// Builds the strategy for `kind`; `mix_fraction` only matters for hybrid.
    pub fn from_kind(kind: SeedKind, mix_fraction: f64) -> Result<Self> {
        match kind {
            SeedKind::ClassicalTp => Ok(Self::classical()),
            SeedKind::AnnealerLm => Ok(Self::annealer()),
            SeedKind::Hybrid => Self::hybrid(mix_fraction),
        }
    }

    pub fn needs_annealer(&self) -> bool {
        self.annealer_quota(1_000_000) > 0
    }

    pub fn annealer_quota(&self, n_target: usize) -> usize {
        match self.kind {
            SeedKind::ClassicalTp => 0,
            SeedKind::AnnealerLm => n_target,
            SeedKind::Hybrid => ((self.mix_fraction * n_target as f64).round() as usize).min(n_target),
        }
    }
}

impl Default for SeedStrategy {
    fn default() -> Self {
        Self::classical()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSelection {
    /// Annealer-derived seeds first, then TP-derived seeds.
    pub seeds: Vec<JointState>,
    pub from_annealer: usize,
    pub from_tps: usize,
    /// Whether the annealer portion was drawn with replacement (too few minima).
    pub with_replacement: bool,
}

/// Indices drawn i.i.d. with probability `∝ exp(-E)`.
pub fn boltzmann_with_replacement(energies: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if energies.is_empty() {
        return Err(Error::EmptyInput("local-minimum list"));
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-(e - e_min)).exp()).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidArgument(format!("Boltzmann weights: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `n` distinct indices, equivalent to successive draws `∝ exp(-E)` without
/// replacement (exponential-race keys `ln(Exp(1)) + E`, smallest first).
pub fn boltzmann_without_replacement(
    energies: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if n > energies.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} distinct items from {}",
            energies.len()
        )));
    }
    let mut keyed: Vec<(f64, usize)> = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let u: f64 = rng.random::<f64>();
            let exp1 = -(1.0 - u).ln();
            (exp1.ln() + e, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(keyed.into_iter().take(n).map(|(_, i)| i).collect())
}

/// Builds `n_target` chain seeds according to `strategy`.
pub fn select_seeds(
    tps: &[BinaryVector],
    lms: &[JointState],
    m: &RbmModel,
    n_target: usize,
    strategy: &SeedStrategy,
    rng: &mut Rng,
) -> Result<SeedSelection> {
    let quota_lm = strategy.annealer_quota(n_target);
    let quota_tp = n_target - quota_lm;
    if quota_lm > 0 && lms.is_empty() {
        return Err(Error::EmptyInput("local-minimum list"));
    }
    if quota_tp > 0 && tps.is_empty() {
        return Err(Error::EmptyInput("training-pattern list"));
    }

    let mut seeds = Vec::with_capacity(n_target);
    let mut with_replacement = false;
    if quota_lm > 0 {
        // Boltzmann weights at T = 1 regardless of the model temperature
        let energies: Vec<f64> = lms.iter().map(|s| m.energy(s)).collect::<Result<_>>()?;
        let picks = if lms.len() < quota_lm {
            with_replacement = true;
            boltzmann_with_replacement(&energies, quota_lm, rng)?
        } else {
            boltzmann_without_replacement(&energies, quota_lm, rng)?
        };
        seeds.extend(picks.into_iter().map(|i| lms[i].clone()));
    }
    for _ in 0..quota_tp {
        let v = &tps[rng.random_range(0..tps.len())];
        check_len("training pattern", m.n_visible(), v.len())?;
        let h = sample_hidden(m, v, m.temperature(), rng);
        seeds.push(JointState::new(v.clone(), h));
    }
    Ok(SeedSelection {
        seeds,
        from_annealer: quota_lm,
        from_tps: quota_tp,
        with_replacement,
    })
}
