//! Label reconstruction with clamped pixels, and class-conditional memory
//! generation with clamped labels. Both run Gibbs chains in which a subset of
//! the visible layer is held fixed.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::data::{LabeledPattern, Layout};
use crate::error::{check_len, Error, Result};
use crate::rbm::{sigmoid, RbmModel};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub burn_in: usize,
    pub vote_steps: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            burn_in: 50,
            vote_steps: 50,
        }
    }
}

/// A Gibbs chain over the free visible units, with every other visible unit clamped.
pub struct ClampedChain<'a> {
    m: &'a RbmModel,
    free: Vec<usize>,
    /// Hidden inputs contributed by the clamped units (and the hidden bias).
    clamped_input: Vec<f64>,
    v: BinaryVector,
    h: BinaryVector,
}

impl<'a> ClampedChain<'a> {
    /// `start` gives the initial visible vector; units outside `free` never change.
    pub fn new(m: &'a RbmModel, start: BinaryVector, free: Vec<usize>) -> Self {
        let mut is_free = vec![false; m.n_visible()];
        for &j in &free {
            is_free[j] = true;
        }
        let mut clamped_input = m.hidden_bias().to_vec();
        for (i, acc) in clamped_input.iter_mut().enumerate() {
            let row = m.weight_row(i);
            *acc += start
                .ones_indices()
                .filter(|&j| !is_free[j])
                .map(|j| row[j])
                .sum::<f64>();
        }
        ClampedChain {
            m,
            free,
            clamped_input,
            v: start,
            h: BinaryVector::zeros(m.n_hidden()),
        }
    }

    /// `h ~ p(h | v)`, then each free visible unit `~ p(v_j | h)`.
    pub fn step(&mut self, rng: &mut Rng) {
        let t = self.m.temperature();
        let mut h = Vec::with_capacity(self.m.n_hidden());
        for (i, base) in self.clamped_input.iter().enumerate() {
            let row = self.m.weight_row(i);
            let x = base + self.free.iter().map(|&j| row[j] * f64::from(self.v.get(j))).sum::<f64>();
            h.push(u8::from(rng.random::<f64>() < sigmoid(x / t)));
        }
        self.h = BinaryVector::from_bits(h);
        for &j in &self.free {
            let x = self.m.visible_bias()[j]
                + self
                    .h
                    .ones_indices()
                    .map(|i| self.m.weight(i, j))
                    .sum::<f64>();
            self.v.set(j, u8::from(rng.random::<f64>() < sigmoid(x / t)));
        }
    }

    pub fn visible(&self) -> &BinaryVector {
        &self.v
    }

    pub fn state(&self) -> JointState {
        JointState::new(self.v.clone(), self.h.clone())
    }
}

/// Per-class fraction of vote steps in which each label bit was on.
pub fn label_frequencies(
    m: &RbmModel,
    layout: Layout,
    pixels: &BinaryVector,
    cfg: &ClassifyConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_len("model visible layer", layout.n_visible(), m.n_visible())?;
    check_len("pixels", layout.n_pixels, pixels.len())?;
    if cfg.vote_steps == 0 {
        return Err(Error::InvalidArgument("vote_steps must be >= 1".into()));
    }
    let labels: Vec<u8> = (0..layout.n_classes)
        .map(|_| u8::from(rng.random::<bool>()))
        .collect();
    let start = BinaryVector::from_bits(pixels.iter().chain(labels));
    let mut chain = ClampedChain::new(m, start, layout.label_bits().collect());
    for _ in 0..cfg.burn_in {
        chain.step(rng);
    }
    let mut tally = vec![0usize; layout.n_classes];
    for _ in 0..cfg.vote_steps {
        chain.step(rng);
        for (c, t) in tally.iter_mut().enumerate() {
            *t += chain.visible().get(layout.label_bit(c)) as usize;
        }
    }
    Ok(tally
        .into_iter()
        .map(|t| t as f64 / cfg.vote_steps as f64)
        .collect())
}

/// Argmax of `freqs` over `allowed`, ties to the lowest class index.
pub fn vote(freqs: &[f64], allowed: &[usize]) -> usize {
    let mut best = allowed[0];
    for &c in allowed {
        if freqs[c] > freqs[best] || (freqs[c] == freqs[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Reconstructs the label of `pixels` by majority vote over all classes.
pub fn classify(
    m: &RbmModel,
    layout: Layout,
    pixels: &BinaryVector,
    cfg: &ClassifyConfig,
    rng: &mut Rng,
) -> Result<usize> {
    let all: Vec<usize> = (0..layout.n_classes).collect();
    classify_among(m, layout, pixels, cfg, &all, rng)
}

/// Like [`classify`] but the vote is restricted to `allowed` classes.
pub fn classify_among(
    m: &RbmModel,
    layout: Layout,
    pixels: &BinaryVector,
    cfg: &ClassifyConfig,
    allowed: &[usize],
    rng: &mut Rng,
) -> Result<usize> {
    if allowed.is_empty() || allowed.iter().any(|&c| c >= layout.n_classes) {
        return Err(Error::InvalidArgument(format!(
            "allowed classes {allowed:?} invalid"
        )));
    }
    let freqs = label_frequencies(m, layout, pixels, cfg, rng)?;
    Ok(vote(&freqs, allowed))
}

/// Classifies every pattern using substream `i` for pattern `i`; returns predictions.
pub fn classify_batch(
    m: &RbmModel,
    layout: Layout,
    patterns: &[LabeledPattern],
    cfg: &ClassifyConfig,
    allowed: Option<&[usize]>,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..layout.n_classes).collect();
    let allowed = allowed.unwrap_or(&all);
    patterns
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = rng::substream(rng_seed, &[i as u64]);
            classify_among(m, layout, &p.pixels, cfg, allowed, &mut r)
        })
        .collect()
}

/// Fraction of patterns whose predicted class differs from the label.
pub fn classification_error(
    m: &RbmModel,
    layout: Layout,
    patterns: &[LabeledPattern],
    cfg: &ClassifyConfig,
    rng_seed: u64,
) -> Result<f64> {
    if patterns.is_empty() {
        return Err(Error::EmptyInput("test patterns"));
    }
    let preds = classify_batch(m, layout, patterns, cfg, None, rng_seed)?;
    let wrong = preds
        .iter()
        .zip(patterns)
        .filter(|(p, t)| **p != t.label)
        .count();
    Ok(wrong as f64 / patterns.len() as f64)
}

/// `n_runs` chains of `k_steps` from random pixels with the label block clamped
/// to `one-hot(class_id)`; returns the final pixels of every run.
pub fn generate_memories_mcmc(
    m: &RbmModel,
    layout: Layout,
    class_id: usize,
    n_runs: usize,
    k_steps: usize,
    rng_seed: u64,
) -> Result<Vec<LabeledPattern>> {
    check_len("model visible layer", layout.n_visible(), m.n_visible())?;
    if class_id >= layout.n_classes {
        return Err(Error::InvalidArgument(format!("class {class_id} out of range")));
    }
    Ok((0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut r = rng::substream(rng_seed, &[class_id as u64, run as u64]);
            let pixels: Vec<u8> = (0..layout.n_pixels)
                .map(|_| u8::from(r.random::<bool>()))
                .collect();
            let labels = (0..layout.n_classes).map(|c| u8::from(c == class_id));
            let start = BinaryVector::from_bits(pixels.into_iter().chain(labels));
            let mut chain = ClampedChain::new(m, start, (0..layout.n_pixels).collect());
            for _ in 0..k_steps {
                chain.step(&mut r);
            }
            debug_assert!(layout
                .label_bits()
                .all(|j| chain.visible().get(j) == u8::from(j == layout.label_bit(class_id))));
            LabeledPattern::new(
                BinaryVector::from_bits(chain.visible().as_slice()[..layout.n_pixels].iter().copied()),
                class_id,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: Layout = Layout {
        n_pixels: 3,
        n_classes: 2,
    };

    /// pixel pattern 101 and label 1 are pinned by biases and tied through hidden unit 0
    fn saturated_model() -> RbmModel {
        let mut m = RbmModel::zeros(5, 1);
        for (j, w) in [12.0, -12.0, 12.0, -12.0, 12.0].into_iter().enumerate() {
            m.set_weight(0, j, w);
        }
        m.hidden_bias_mut()[0] = -18.0;
        m.visible_bias_mut().copy_from_slice(&[12.0, -12.0, 12.0, -12.0, 0.0]);
        m
    }

    #[test]
    fn saturated_model_returns_its_label() {
        let m = saturated_model();
        let pixels = BinaryVector::from_bits([1, 0, 1]);
        for seed in 0..20 {
            let c = classify(&m, TINY, &pixels, &ClassifyConfig::default(), &mut rng::from_seed(seed))
                .unwrap();
            assert_eq!(c, 1);
        }
    }

    #[test]
    fn zero_model_guesses_uniformly() {
        let m = RbmModel::zeros(74, 8);
        let pixels = BinaryVector::zeros(64);
        // long vote so lowest-index tie-breaking has negligible weight
        let cfg = ClassifyConfig {
            burn_in: 0,
            vote_steps: 400,
        };
        let mut counts = [0usize; 10];
        let mut r = rng::from_seed(3);
        let n = 10_000;
        for _ in 0..n {
            counts[classify(&m, Layout::DIGITS, &pixels, &cfg, &mut r).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.08..=0.12).contains(&f), "frequencies {counts:?}");
        }
    }

    #[test]
    fn vote_ties_go_to_lowest_index() {
        assert_eq!(vote(&[0.2, 0.5, 0.5], &[0, 1, 2]), 1);
        assert_eq!(vote(&[0.2, 0.5, 0.5], &[2, 1]), 1);
        assert_eq!(vote(&[0.0, 0.0, 0.0], &[2]), 2);
        assert_eq!(vote(&[0.9, 0.1, 0.3], &[1, 2]), 2);
    }

    #[test]
    fn clamped_pixels_never_flip() {
        let m = RbmModel::random_uniform(74, 20, 2.0, &mut rng::from_seed(1));
        let pixels = BinaryVector::from_index(64, 0xDEAD_BEEF_1234);
        let start = pixels.concat(&BinaryVector::zeros(10));
        let mut chain = ClampedChain::new(&m, start, Layout::DIGITS.label_bits().collect());
        let mut r = rng::from_seed(2);
        for _ in 0..500 {
            chain.step(&mut r);
            assert_eq!(&chain.visible().as_slice()[..64], pixels.as_slice());
        }
    }

    #[test]
    fn clamped_chain_matches_full_inputs() {
        // the cached clamped contribution must equal a from-scratch computation
        let m = RbmModel::random_uniform(6, 4, 1.0, &mut rng::from_seed(8));
        let start = BinaryVector::from_bits([1, 0, 1, 1, 0, 1]);
        let chain = ClampedChain::new(&m, start.clone(), vec![1, 4]);
        let full = m.hidden_inputs(&start);
        for (a, b) in chain.clamped_input.iter().zip(full) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn memories_carry_class_and_count() {
        let m = RbmModel::random_uniform(74, 10, 0.5, &mut rng::from_seed(4));
        let out = generate_memories_mcmc(&m, Layout::DIGITS, 7, 1000, 3, 11).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.iter().all(|p| p.label == 7 && p.pixels.len() == 64));
        let again = generate_memories_mcmc(&m, Layout::DIGITS, 7, 1000, 3, 11).unwrap();
        assert_eq!(out, again);
        assert!(generate_memories_mcmc(&m, Layout::DIGITS, 10, 1, 1, 0).is_err());
    }

    #[test]
    fn saturated_memories_reproduce_the_image() {
        let m = saturated_model();
        let out = generate_memories_mcmc(&m, TINY, 1, 200, 20, 5).unwrap();
        assert!(out.iter().all(|p| p.pixels.as_slice() == [1, 0, 1]));
    }

    #[test]
    fn classify_rejects_bad_inputs() {
        let m = saturated_model();
        let r = &mut rng::from_seed(0);
        let px = BinaryVector::zeros(3);
        let cfg = ClassifyConfig { burn_in: 0, vote_steps: 0 };
        assert!(classify(&m, TINY, &px, &cfg, r).is_err());
        assert!(classify_among(&m, TINY, &px, &ClassifyConfig::default(), &[], r).is_err());
        assert!(classify(&m, TINY, &BinaryVector::zeros(4), &ClassifyConfig::default(), r).is_err());
    }
}
