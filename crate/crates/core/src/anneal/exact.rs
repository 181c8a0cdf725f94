use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{check_reads, working_problem, QuboProblem, SampleOptions, SampleSet, Sampler};
use crate::bits::BinaryVector;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Largest number of free variables the enumerating sampler accepts.
pub const EXACT_VAR_LIMIT: usize = 20;

/// Independent draws from `exp(-β E)` by full enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactSampler {
    pub beta: f64,
}

impl Default for ExactSampler {
    fn default() -> Self {
        ExactSampler { beta: 1.0 }
    }
}

/// Free variable indices and the template state carrying the fixed bits.
fn free_layout(p: &QuboProblem, hard_clamp: bool) -> (Vec<usize>, BinaryVector) {
    let mut base = BinaryVector::zeros(p.n_vars());
    let mut free = Vec::new();
    for i in 0..p.n_vars() {
        match p.clamps().get(&i) {
            Some(&b) if hard_clamp => base.set(i, b),
            _ => free.push(i),
        }
    }
    (free, base)
}

fn enumerate<'a>(free: &'a [usize], base: &BinaryVector) -> Result<impl Iterator<Item = BinaryVector> + 'a> {
    if free.len() > EXACT_VAR_LIMIT {
        return Err(Error::TooLarge {
            units: free.len(),
            limit: EXACT_VAR_LIMIT,
        });
    }
    let base = base.clone();
    Ok((0..1u64 << free.len()).map(move |k| {
        let mut x = base.clone();
        for (bit, &i) in free.iter().enumerate() {
            x.set(i, ((k >> bit) & 1) as u8);
        }
        x
    }))
}

/// A minimum-energy state of `p` respecting its clamps, by brute force.
pub fn exact_ground_state(p: &QuboProblem) -> Result<(BinaryVector, f64)> {
    let (free, base) = free_layout(p, true);
    let mut best: Option<(BinaryVector, f64)> = None;
    for x in enumerate(&free, &base)? {
        let e = p.energy_unchecked(&x);
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((x, e));
        }
    }
    Ok(best.expect("enumeration yields at least one state"))
}

impl Sampler for ExactSampler {
    fn sample(
        &self,
        p: &QuboProblem,
        n_reads: usize,
        opts: &SampleOptions,
        rng: &mut Rng,
    ) -> Result<SampleSet> {
        check_reads(n_reads)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta {} must be finite and ≥ 0", self.beta)));
        }
        let work = working_problem(p, opts);
        let (free, base) = free_layout(&work, opts.hard_clamp);
        let states: Vec<BinaryVector> = enumerate(&free, &base)?.collect();
        let energies: Vec<f64> = states.iter().map(|x| work.energy_unchecked(x)).collect();
        let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = energies.iter().map(|e| (-self.beta * (e - e_min)).exp()).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("Boltzmann weights: {e}")))?;
        let reads = (0..n_reads).map(|_| states[dist.sample(rng)].clone()).collect();
        SampleSet::from_reads(p, reads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::BTreeMap;

    #[test]
    fn size_guard() {
        let p = QuboProblem::new(EXACT_VAR_LIMIT + 1);
        let r = ExactSampler::default().sample(&p, 1, &SampleOptions::default(), &mut rng::from_seed(0));
        assert!(matches!(r, Err(Error::TooLarge { .. })));
        // hard-clamping enough variables brings it back under the guard
        let mut q = p.clone();
        q.set_clamp(0, 1).unwrap();
        assert!(ExactSampler::default()
            .sample(&q, 3, &SampleOptions::default(), &mut rng::from_seed(0))
            .is_ok());
    }

    #[test]
    fn ground_state_by_enumeration() {
        let mut p = QuboProblem::new(3);
        p.set_linear(0, -1.0).unwrap();
        p.set_linear(1, -1.0).unwrap();
        p.add_quadratic(0, 1, 3.0).unwrap();
        p.set_linear(2, 0.5).unwrap();
        let (x, e) = exact_ground_state(&p).unwrap();
        assert_eq!(e, -1.0);
        assert_eq!(x.get(2), 0);
        assert_eq!(x.count_ones(), 1);
    }

    #[test]
    fn clamped_problem_honors_clamp() {
        let mut p = QuboProblem::new(8);
        for i in 0..8 {
            p.set_linear(i, -0.3 * i as f64).unwrap();
        }
        let c = super::super::clamp_vars(&p, &BTreeMap::from([(2, 0), (5, 1)]), 4.0).unwrap();
        let ss = ExactSampler { beta: 0.1 }
            .sample(&c, 500, &SampleOptions::default(), &mut rng::from_seed(1))
            .unwrap();
        assert_eq!(ss.total_reads(), 500);
        assert!(ss.states.iter().all(|x| c.satisfies_clamps(x)));
    }
}
