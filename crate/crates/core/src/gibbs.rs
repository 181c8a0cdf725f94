//! Block Gibbs dynamics and deterministic zero-temperature relaxation.
//!
//! Both modes update the hidden layer first and then the visible layer.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::error::{check_len, Error, Result};
use crate::rbm::{sigmoid, RbmModel};
use crate::rng::{self, Rng};

pub const DEFAULT_RELAX_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub k_steps: usize,
    /// Sampling temperature; `0` selects deterministic relaxation.
    pub temperature: f64,
    pub rng_seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            k_steps: 1,
            temperature: 1.0,
            rng_seed: 0,
        }
    }
}

fn bernoulli_layer(inputs: Vec<f64>, t: f64, rng: &mut Rng) -> BinaryVector {
    BinaryVector::from_bits(
        inputs
            .into_iter()
            .map(|x| u8::from(rng.random::<f64>() < sigmoid(x / t))),
    )
}

pub fn sample_hidden(m: &RbmModel, v: &BinaryVector, t: f64, rng: &mut Rng) -> BinaryVector {
    bernoulli_layer(m.hidden_inputs(v), t, rng)
}

pub fn sample_visible(m: &RbmModel, h: &BinaryVector, t: f64, rng: &mut Rng) -> BinaryVector {
    bernoulli_layer(m.visible_inputs(h), t, rng)
}

/// One block step: `h' ~ p(h | v)` then `v' ~ p(v | h')`. The incoming hidden
/// layer is ignored, so TP seeds need no hidden state.
pub fn gibbs_step(m: &RbmModel, s: &JointState, t: f64, rng: &mut Rng) -> JointState {
    debug_assert!(t > 0.0, "gibbs_step needs a positive temperature");
    let h = sample_hidden(m, &s.v, t, rng);
    let v = sample_visible(m, &h, t, rng);
    JointState { v, h }
}

/// `k` block steps from `seed_v` with an explicit random stream.
pub fn run_chain_with(
    m: &RbmModel,
    seed_v: &BinaryVector,
    k_steps: usize,
    t: f64,
    rng: &mut Rng,
) -> JointState {
    let mut s = JointState::new(seed_v.clone(), BinaryVector::zeros(m.n_hidden()));
    for _ in 0..k_steps {
        s = gibbs_step(m, &s, t, rng);
    }
    s
}

/// `cfg.k_steps` block steps from `seed_v`, seeded from `cfg.rng_seed`.
pub fn run_chain(m: &RbmModel, seed_v: &BinaryVector, cfg: &ChainConfig) -> Result<JointState> {
    check_len("chain seed", m.n_visible(), seed_v.len())?;
    if !(cfg.temperature > 0.0) {
        return Err(Error::InvalidArgument(
            "stochastic chains need temperature > 0".into(),
        ));
    }
    let mut rng = rng::from_seed(cfg.rng_seed);
    Ok(run_chain_with(m, seed_v, cfg.k_steps, cfg.temperature, &mut rng))
}

/// Independent `k`-step chains from every seed; chain `i` draws from substream `i`.
pub fn negative_phase_sample(
    m: &RbmModel,
    seeds: &[JointState],
    cfg: &ChainConfig,
) -> Result<Vec<JointState>> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed list"));
    }
    if !(cfg.temperature > 0.0) {
        return Err(Error::InvalidArgument(
            "stochastic chains need temperature > 0".into(),
        ));
    }
    for s in seeds {
        check_len("seed visible", m.n_visible(), s.v.len())?;
    }
    Ok(seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng::substream(cfg.rng_seed, &[i as u64]);
            run_chain_with(m, &s.v, cfg.k_steps, cfg.temperature, &mut rng)
        })
        .collect())
}

/// Zero-temperature threshold rule: on iff input > 0, unchanged at exactly 0.
fn threshold_layer(inputs: &[f64], current: &BinaryVector) -> (BinaryVector, bool) {
    let mut changed = false;
    let bits = inputs.iter().zip(current.iter()).map(|(&x, old)| {
        let new = if x > 0.0 {
            1
        } else if x < 0.0 {
            0
        } else {
            old
        };
        changed |= new != old;
        new
    });
    let out = BinaryVector::from_bits(bits.collect::<Vec<_>>());
    (out, changed)
}

/// Deterministic hidden-layer inference given `v`, keeping `h` where the input is exactly zero.
pub fn relax_hidden(m: &RbmModel, v: &BinaryVector, h: &BinaryVector) -> (BinaryVector, bool) {
    threshold_layer(&m.hidden_inputs(v), h)
}

pub fn relax_visible(m: &RbmModel, h: &BinaryVector, v: &BinaryVector) -> (BinaryVector, bool) {
    threshold_layer(&m.visible_inputs(h), v)
}

/// One deterministic h-then-v sweep. Returns the new state and whether any bit changed.
pub fn relax_sweep(m: &RbmModel, s: &JointState) -> (JointState, bool) {
    let (h, ch) = relax_hidden(m, &s.v, &s.h);
    let (v, cv) = relax_visible(m, &h, &s.v);
    (JointState { v, h }, ch || cv)
}

/// Relaxes to the bottom of the local valley containing `s`.
pub fn relax_to_lm(m: &RbmModel, s: &JointState) -> Result<JointState> {
    relax_to_lm_capped(m, s, DEFAULT_RELAX_CAP)
}

pub fn relax_to_lm_capped(m: &RbmModel, s: &JointState, max_sweeps: usize) -> Result<JointState> {
    check_len("visible state", m.n_visible(), s.v.len())?;
    check_len("hidden state", m.n_hidden(), s.h.len())?;
    let mut cur = s.clone();
    for _ in 0..max_sweeps {
        let (next, changed) = relax_sweep(m, &cur);
        if !changed {
            return Ok(cur);
        }
        cur = next;
    }
    Err(Error::NonConvergence(max_sweeps))
}
