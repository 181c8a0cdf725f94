//! Local-valley statistics: relax populations to their local minima, group
//! members per minimum and histogram members-per-valley by energy.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::error::{Error, Result};
use crate::gibbs::{relax_hidden, relax_to_lm};
use crate::rbm::RbmModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Annealer,
    Tp,
    Mcmc,
    /// Every joint state of a small model.
    Exhaustive,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Annealer => "annealer",
            SourceTag::Tp => "tp",
            SourceTag::Mcmc => "mcmc",
            SourceTag::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annealer" | "dw" => Ok(SourceTag::Annealer),
            "tp" => Ok(SourceTag::Tp),
            "mcmc" => Ok(SourceTag::Mcmc),
            "exhaustive" => Ok(SourceTag::Exhaustive),
            other => Err(Error::InvalidArgument(format!("unknown source tag {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalValleyRecord {
    pub lm_state: JointState,
    pub lm_energy: f64,
    pub members: usize,
    pub source_tag: SourceTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistogram {
    /// `len = bins + 1`, ascending.
    pub bin_edges: Vec<f64>,
    pub avg_members_per_lv: Vec<f64>,
    pub lv_count: Vec<usize>,
}

impl EnergyHistogram {
    pub fn n_bins(&self) -> usize {
        self.lv_count.len()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_bins()).filter(|&b| self.lv_count[b] > 0)
    }

    /// Average members per LV in the lowest and highest occupied bins.
    pub fn extreme_averages(&self) -> Option<(f64, f64)> {
        let lo = self.occupied().next()?;
        let hi = self.occupied().last()?;
        Some((self.avg_members_per_lv[lo], self.avg_members_per_lv[hi]))
    }

    /// CSV with header `bin_lo,bin_hi,lv_count,avg_members,source_tag`.
    pub fn write_csv(&self, tag: SourceTag, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_lo,bin_hi,lv_count,avg_members,source_tag")?;
        for b in 0..self.n_bins() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.bin_edges[b], self.bin_edges[b + 1], self.lv_count[b], self.avg_members_per_lv[b], tag
            )?;
        }
        Ok(())
    }
}

/// First occurrence of each distinct state, order preserved.
pub fn dedupe_lms(states: &[JointState]) -> Vec<JointState> {
    let mut seen = HashSet::with_capacity(states.len());
    states.iter().filter(|s| seen.insert(*s)).cloned().collect()
}

/// A training pattern completed to a full state by one T=0 hidden inference from `h = 0`.
pub fn complete_tp(m: &RbmModel, v: &BinaryVector) -> JointState {
    let (h, _) = relax_hidden(m, v, &BinaryVector::zeros(m.n_hidden()));
    JointState::new(v.clone(), h)
}

/// Relaxes every member of `population` and groups members by the minimum they reach.
/// Records are ordered by ascending energy, then by state bits.
pub fn assign_to_valleys(
    m: &RbmModel,
    population: &[JointState],
    tag: SourceTag,
) -> Result<Vec<LocalValleyRecord>> {
    let minima: Vec<JointState> = population
        .par_iter()
        .map(|s| relax_to_lm(m, s))
        .collect::<Result<_>>()?;
    let mut groups: HashMap<JointState, usize> = HashMap::new();
    for lm in minima {
        *groups.entry(lm).or_insert(0) += 1;
    }
    let mut records: Vec<LocalValleyRecord> = groups
        .into_iter()
        .map(|(lm_state, members)| LocalValleyRecord {
            lm_energy: m.energy_unchecked(&lm_state),
            lm_state,
            members,
            source_tag: tag,
        })
        .collect();
    records.sort_by(|a, b| {
        a.lm_energy
            .total_cmp(&b.lm_energy)
            .then_with(|| a.lm_state.cmp(&b.lm_state))
    });
    Ok(records)
}

/// Bin width used when none is given: a twentieth of the energy range.
pub fn default_bin_width(records: &[LocalValleyRecord]) -> f64 {
    let (lo, hi) = energy_range(records);
    if hi > lo {
        (hi - lo) / 20.0
    } else {
        1.0
    }
}

fn energy_range(records: &[LocalValleyRecord]) -> (f64, f64) {
    records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.lm_energy), hi.max(r.lm_energy))
    })
}

/// Members-per-LV averages over energy bins of width `bin_width` starting at the lowest LM energy.
pub fn valley_histogram(records: &[LocalValleyRecord], bin_width: f64) -> Result<EnergyHistogram> {
    if records.is_empty() {
        return Err(Error::EmptyInput("valley records"));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width {bin_width} must be positive")));
    }
    let (lo, hi) = energy_range(records);
    let n_bins = (((hi - lo) / bin_width).floor() as usize + 1).max(1);
    let bin_edges: Vec<f64> = (0..=n_bins).map(|b| lo + b as f64 * bin_width).collect();
    let mut lv_count = vec![0usize; n_bins];
    let mut member_sum = vec![0usize; n_bins];
    for r in records {
        let b = (((r.lm_energy - lo) / bin_width).floor() as usize).min(n_bins - 1);
        lv_count[b] += 1;
        member_sum[b] += r.members;
    }
    let avg_members_per_lv = lv_count
        .iter()
        .zip(&member_sum)
        .map(|(&c, &s)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
        .collect();
    Ok(EnergyHistogram {
        bin_edges,
        avg_members_per_lv,
        lv_count,
    })
}
