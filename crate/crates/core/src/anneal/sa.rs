use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_reads, working_problem, QuboProblem, SampleOptions, SampleSet, Sampler};
use crate::bits::BinaryVector;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Single-bit Metropolis annealing over a geometric inverse-temperature ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatedAnnealer {
    pub beta_min: f64,
    pub beta_max: f64,
    pub sweeps: usize,
}

impl Default for SimulatedAnnealer {
    fn default() -> Self {
        SimulatedAnnealer {
            beta_min: 0.1,
            beta_max: 10.0,
            sweeps: 1000,
        }
    }
}

impl SimulatedAnnealer {
    pub fn with_sweeps(sweeps: usize) -> Self {
        SimulatedAnnealer {
            sweeps,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_max >= self.beta_min && self.beta_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta range [{}, {}] must satisfy 0 < min ≤ max < ∞",
                self.beta_min, self.beta_max
            )));
        }
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<f64> {
        if self.sweeps == 1 {
            return vec![self.beta_max];
        }
        let ratio = (self.beta_max / self.beta_min).ln();
        (0..self.sweeps)
            .map(|k| self.beta_min * (ratio * k as f64 / (self.sweeps - 1) as f64).exp())
            .collect()
    }
}

/// Compressed neighbour lists.
struct Csr {
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    couplings: Vec<f64>,
}

impl Csr {
    fn new(p: &QuboProblem) -> Self {
        let adj = p.adjacency();
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut neighbours = Vec::new();
        let mut couplings = Vec::new();
        offsets.push(0);
        for row in adj {
            for (j, q) in row {
                neighbours.push(j);
                couplings.push(q);
            }
            offsets.push(neighbours.len());
        }
        Csr {
            offsets,
            neighbours,
            couplings,
        }
    }
}

fn anneal_once(
    p: &QuboProblem,
    csr: &Csr,
    fixed: &[Option<u8>],
    betas: &[f64],
    rng: &mut Rng,
) -> BinaryVector {
    let n = p.n_vars();
    let mut x: Vec<u8> = fixed
        .iter()
        .map(|f| f.unwrap_or_else(|| u8::from(rng.random::<bool>())))
        .collect();
    // field_i = linear_i + Σ_j Q_ij x_j, the energy change of turning bit i on
    let mut field = p.linear().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 1 {
            for k in csr.offsets[i]..csr.offsets[i + 1] {
                field[csr.neighbours[k]] += csr.couplings[k];
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    for &beta in betas {
        for &i in &free {
            let delta = if x[i] == 0 { field[i] } else { -field[i] };
            if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                let sign = if x[i] == 0 { 1.0 } else { -1.0 };
                x[i] ^= 1;
                for k in csr.offsets[i]..csr.offsets[i + 1] {
                    field[csr.neighbours[k]] += sign * csr.couplings[k];
                }
            }
        }
    }
    BinaryVector::from(x)
}

impl Sampler for SimulatedAnnealer {
    fn sample(
        &self,
        p: &QuboProblem,
        n_reads: usize,
        opts: &SampleOptions,
        rng: &mut Rng,
    ) -> Result<SampleSet> {
        check_reads(n_reads)?;
        self.validate()?;
        let work = working_problem(p, opts);
        let csr = Csr::new(&work);
        let fixed: Vec<Option<u8>> = (0..work.n_vars())
            .map(|i| if opts.hard_clamp { work.clamps().get(&i).copied() } else { None })
            .collect();
        let betas = self.schedule();
        let master: u64 = rng.random();
        let reads: Vec<BinaryVector> = (0..n_reads)
            .into_par_iter()
            .map(|r| {
                let mut local = rng::substream(master, &[r as u64]);
                anneal_once(&work, &csr, &fixed, &betas, &mut local)
            })
            .collect();
        SampleSet::from_reads(p, reads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_geometric() {
        let s = SimulatedAnnealer::default().schedule();
        assert_eq!(s.len(), 1000);
        assert!((s[0] - 0.1).abs() < 1e-12);
        assert!((s[999] - 10.0).abs() < 1e-9);
        let r1 = s[1] / s[0];
        let r2 = s[500] / s[499];
        assert!((r1 - r2).abs() < 1e-9);
        assert_eq!(SimulatedAnnealer::with_sweeps(1).schedule(), vec![10.0]);
    }

    #[test]
    fn flat_landscape_is_uniform() {
        let p = QuboProblem::new(6);
        let ss = SimulatedAnnealer::with_sweeps(10)
            .sample(&p, 2000, &SampleOptions::default(), &mut rng::from_seed(3))
            .unwrap();
        assert_eq!(ss.len(), 2000);
        for i in 0..6 {
            let mean = ss.states.iter().map(|x| x.get(i) as f64).sum::<f64>() / 2000.0;
            assert!((0.45..=0.55).contains(&mean), "bit {i} mean {mean}");
        }
    }

    #[test]
    fn invalid_parameters() {
        let p = QuboProblem::new(2);
        let o = SampleOptions::default();
        let r = &mut rng::from_seed(0);
        assert!(SimulatedAnnealer::with_sweeps(0).sample(&p, 1, &o, r).is_err());
        assert!(SimulatedAnnealer::default().sample(&p, 0, &o, r).is_err());
        let bad = SimulatedAnnealer { beta_min: 0.0, ..Default::default() };
        assert!(bad.sample(&p, 1, &o, r).is_err());
    }

    #[test]
    fn reproducible_with_seed() {
        let mut p = QuboProblem::new(5);
        p.add_quadratic(0, 3, -1.0).unwrap();
        p.set_linear(2, 0.4).unwrap();
        let sa = SimulatedAnnealer::with_sweeps(20);
        let a = sa.sample(&p, 50, &SampleOptions::default(), &mut rng::from_seed(8)).unwrap();
        let b = sa.sample(&p, 50, &SampleOptions::default(), &mut rng::from_seed(8)).unwrap();
        assert_eq!(a, b);
    }
}
