//! Binary RBM parameterization, energy, conditionals and the learning rule.
//!
//! Energy convention: `E(v, h) = -(bᵀv + cᵀh + hᵀWv)` with `W` stored
//! row-major as `n_hidden × n_visible`, and `p(v, h) ∝ exp(-E / T)`.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Largest `n_visible + n_hidden` accepted by [`RbmModel::exact_log_partition`].
pub const EXACT_UNIT_LIMIT: usize = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct RbmModel {
    n_visible: usize,
    n_hidden: usize,
    weights: Vec<f64>,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    temperature: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl RbmModel {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        RbmModel {
            n_visible,
            n_hidden,
            weights: vec![0.0; n_visible * n_hidden],
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
            temperature: 1.0,
        }
    }

    pub fn new(
        n_visible: usize,
        n_hidden: usize,
        weights: Vec<f64>,
        visible_bias: Vec<f64>,
        hidden_bias: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        check_len("weights", n_visible * n_hidden, weights.len())?;
        check_len("visible bias", n_visible, visible_bias.len())?;
        check_len("hidden bias", n_hidden, hidden_bias.len())?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature {temperature} must be positive"
            )));
        }
        let m = RbmModel {
            n_visible,
            n_hidden,
            weights,
            visible_bias,
            hidden_bias,
            temperature,
        };
        if !m.is_finite() {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(m)
    }

    /// Weights drawn from `N(0, std²)`, biases zero, `T = 1`.
    pub fn random(n_visible: usize, n_hidden: usize, std: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let mut m = RbmModel::zeros(n_visible, n_hidden);
        for w in &mut m.weights {
            *w = normal.sample(rng);
        }
        m
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`; handy for oracle tests.
    pub fn random_uniform(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut m = RbmModel::zeros(n_visible, n_hidden);
        for p in m
            .weights
            .iter_mut()
            .chain(&mut m.visible_bias)
            .chain(&mut m.hidden_bias)
        {
            *p = rng.random_range(-scale..=scale);
        }
        m
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_units(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature {temperature} must be positive"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_visible + j]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, value: f64) {
        self.weights[i * self.n_visible + j] = value;
    }

    pub fn visible_bias_mut(&mut self) -> &mut [f64] {
        &mut self.visible_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_visible..(i + 1) * self.n_visible]
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|x| x.is_finite())
    }

    /// Largest magnitude over all weights and biases.
    pub fn max_abs_param(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    /// `c_i + Σ_j W_ij v_j` for every hidden unit (not divided by `T`).
    pub fn hidden_inputs(&self, v: &BinaryVector) -> Vec<f64> {
        let mut out = self.hidden_bias.clone();
        for (i, acc) in out.iter_mut().enumerate() {
            let row = self.weight_row(i);
            *acc += v.ones_indices().map(|j| row[j]).sum::<f64>();
        }
        out
    }

    /// Same as [`Self::hidden_inputs`] for a real-valued visible vector.
    pub fn hidden_inputs_real(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.hidden_bias.clone();
        for (i, acc) in out.iter_mut().enumerate() {
            *acc += self
                .weight_row(i)
                .iter()
                .zip(v)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        }
        out
    }

    /// `b_j + Σ_i W_ij h_i` for every visible unit (not divided by `T`).
    pub fn visible_inputs(&self, h: &BinaryVector) -> Vec<f64> {
        let mut out = self.visible_bias.clone();
        for i in h.ones_indices() {
            for (acc, w) in out.iter_mut().zip(self.weight_row(i)) {
                *acc += w;
            }
        }
        out
    }

    fn check_state(&self, s: &JointState) -> Result<()> {
        check_len("visible state", self.n_visible, s.v.len())?;
        check_len("hidden state", self.n_hidden, s.h.len())
    }

    /// `E(v, h) = -(bᵀv + cᵀh + hᵀWv)`.
    pub fn energy(&self, s: &JointState) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.energy_unchecked(s))
    }

    pub(crate) fn energy_unchecked(&self, s: &JointState) -> f64 {
        let mut e = 0.0;
        for i in s.h.ones_indices() {
            let row = self.weight_row(i);
            for j in s.v.ones_indices() {
                e -= row[j];
            }
        }
        for j in s.v.ones_indices() {
            e -= self.visible_bias[j];
        }
        for i in s.h.ones_indices() {
            e -= self.hidden_bias[i];
        }
        e
    }

    /// `p(H_i = 1 | v) = σ((c_i + Σ_j W_ij v_j) / T)`.
    pub fn hidden_conditionals(&self, v: &BinaryVector) -> Result<Vec<f64>> {
        check_len("visible state", self.n_visible, v.len())?;
        let t = self.temperature;
        Ok(self
            .hidden_inputs(v)
            .into_iter()
            .map(|x| sigmoid(x / t))
            .collect())
    }

    /// `p(V_j = 1 | h) = σ((b_j + Σ_i W_ij h_i) / T)`.
    pub fn visible_conditionals(&self, h: &BinaryVector) -> Result<Vec<f64>> {
        check_len("hidden state", self.n_hidden, h.len())?;
        let t = self.temperature;
        Ok(self
            .visible_inputs(h)
            .into_iter()
            .map(|x| sigmoid(x / t))
            .collect())
    }

    /// `ln Σ_h exp(-E(v, h) / T)`: the hidden layer summed out analytically.
    pub fn log_unnormalized_marginal(&self, v: &BinaryVector) -> Result<f64> {
        check_len("visible state", self.n_visible, v.len())?;
        let t = self.temperature;
        let vb: f64 = v.ones_indices().map(|j| self.visible_bias[j]).sum();
        let hidden: f64 = self
            .hidden_inputs(v)
            .into_iter()
            .map(|x| softplus(x / t))
            .sum();
        Ok(vb / t + hidden)
    }

    /// Free energy `F(v) = -T ln Σ_h exp(-E(v, h) / T)`; lower is more probable.
    pub fn free_energy(&self, v: &BinaryVector) -> Result<f64> {
        Ok(-self.temperature * self.log_unnormalized_marginal(v)?)
    }

    /// `ln Z` by enumerating every joint configuration.
    pub fn exact_log_partition(&self) -> Result<f64> {
        let units = self.n_units();
        if units > EXACT_UNIT_LIMIT {
            return Err(Error::TooLarge {
                units,
                limit: EXACT_UNIT_LIMIT,
            });
        }
        let t = self.temperature;
        let mut lse = LogSumExp::default();
        for vi in 0..(1u64 << self.n_visible) {
            let v = BinaryVector::from_index(self.n_visible, vi);
            let vb: f64 = v.ones_indices().map(|j| self.visible_bias[j]).sum();
            let inputs = self.hidden_inputs(&v);
            for hi in 0..(1u64 << self.n_hidden) {
                let mut neg_energy = vb;
                for (i, x) in inputs.iter().enumerate() {
                    if (hi >> i) & 1 == 1 {
                        neg_energy += x;
                    }
                }
                lse.push(neg_energy / t);
            }
        }
        Ok(lse.value())
    }

    /// Exact visible marginal `p(v)` for every visible configuration, in index order.
    pub fn exact_visible_distribution(&self) -> Result<Vec<f64>> {
        if self.n_visible > 20 {
            return Err(Error::TooLarge {
                units: self.n_visible,
                limit: 20,
            });
        }
        let logs: Vec<f64> = (0..(1u64 << self.n_visible))
            .map(|vi| {
                self.log_unnormalized_marginal(&BinaryVector::from_index(self.n_visible, vi))
            })
            .collect::<Result<_>>()?;
        let log_z = log_sum_exp(&logs);
        Ok(logs.into_iter().map(|l| (l - log_z).exp()).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            weights: self.weights.clone(),
            visible_bias: self.visible_bias.clone(),
            hidden_bias: self.hidden_bias.clone(),
            temperature: self.temperature,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Versioned on-disk form of an [`RbmModel`]; weights are row-major `n_hidden × n_visible`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub temperature: f64,
}

impl Checkpoint {
    pub fn into_model(self) -> Result<RbmModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        RbmModel::new(
            self.n_visible,
            self.n_hidden,
            self.weights,
            self.visible_bias,
            self.hidden_bias,
            self.temperature,
        )
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::default();
    for &x in xs {
        acc.push(x);
    }
    acc.value()
}

/// Parameter-shaped buffer used for gradients and momentum velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub d_weights: Vec<f64>,
    pub d_visible_bias: Vec<f64>,
    pub d_hidden_bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(m: &RbmModel) -> Self {
        GradientSet {
            d_weights: vec![0.0; m.weights.len()],
            d_visible_bias: vec![0.0; m.n_visible],
            d_hidden_bias: vec![0.0; m.n_hidden],
        }
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.d_weights
            .iter()
            .chain(&self.d_visible_bias)
            .chain(&self.d_hidden_bias)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    fn check_shape(&self, m: &RbmModel) -> Result<()> {
        check_len("weight gradient", m.weights.len(), self.d_weights.len())?;
        check_len("visible gradient", m.n_visible, self.d_visible_bias.len())?;
        check_len("hidden gradient", m.n_hidden, self.d_hidden_bias.len())
    }
}

/// Weighted mean of `p(H_i=1|v)·v_j`, `v_j` and `p(H_i=1|v)` over visible vectors.
fn phase_statistics<'a, I>(m: &RbmModel, items: I) -> GradientSet
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let mut acc = GradientSet::zeros_like(m);
    let mut total = 0.0;
    let t = m.temperature;
    for (v, w) in items {
        if w == 0.0 {
            continue;
        }
        total += w;
        let probs: Vec<f64> = m
            .hidden_inputs_real(v)
            .into_iter()
            .map(|x| sigmoid(x / t))
            .collect();
        for (i, &p) in probs.iter().enumerate() {
            let wp = w * p;
            acc.d_hidden_bias[i] += wp;
            let row = &mut acc.d_weights[i * m.n_visible..(i + 1) * m.n_visible];
            for (g, &x) in row.iter_mut().zip(v) {
                *g += wp * x;
            }
        }
        for (g, &x) in acc.d_visible_bias.iter_mut().zip(v) {
            *g += w * x;
        }
    }
    let inv = 1.0 / total;
    for g in acc
        .d_weights
        .iter_mut()
        .chain(&mut acc.d_visible_bias)
        .chain(&mut acc.d_hidden_bias)
    {
        *g *= inv;
    }
    acc
}

fn difference(pos: GradientSet, neg: &GradientSet) -> GradientSet {
    let sub = |a: Vec<f64>, b: &[f64]| a.into_iter().zip(b).map(|(x, y)| x - y).collect();
    GradientSet {
        d_weights: sub(pos.d_weights, &neg.d_weights),
        d_visible_bias: sub(pos.d_visible_bias, &neg.d_visible_bias),
        d_hidden_bias: sub(pos.d_hidden_bias, &neg.d_hidden_bias),
    }
}

/// Positive phase over `data_batch` minus negative phase over the visible parts of
/// `model_sample`, both using `p(H_i = 1 | v)` rather than sampled hidden bits.
pub fn loglik_gradient(
    m: &RbmModel,
    data_batch: &[BinaryVector],
    model_sample: &[JointState],
) -> Result<GradientSet> {
    let negative: Vec<Vec<f64>> = model_sample
        .iter()
        .map(|s| {
            check_len("sample visible", m.n_visible, s.v.len())?;
            Ok(s.v.to_f64())
        })
        .collect::<Result<_>>()?;
    let positive = as_real(m, data_batch)?;
    gradient_from_visible(m, &positive, &negative)
}

/// Like [`loglik_gradient`] but with an explicitly weighted negative phase, e.g. the
/// exact model distribution from [`RbmModel::exact_visible_distribution`].
pub fn loglik_gradient_weighted(
    m: &RbmModel,
    data_batch: &[BinaryVector],
    weighted_sample: &[(BinaryVector, f64)],
) -> Result<GradientSet> {
    if data_batch.is_empty() {
        return Err(Error::EmptyInput("data batch"));
    }
    if weighted_sample.is_empty() {
        return Err(Error::EmptyInput("model sample"));
    }
    let positive = as_real(m, data_batch)?;
    let negative: Vec<(Vec<f64>, f64)> = weighted_sample
        .iter()
        .map(|(v, w)| {
            check_len("sample visible", m.n_visible, v.len())?;
            Ok((v.to_f64(), *w))
        })
        .collect::<Result<_>>()?;
    let pos = phase_statistics(m, positive.iter().map(|v| (v.as_slice(), 1.0)));
    let neg = phase_statistics(m, negative.iter().map(|(v, w)| (v.as_slice(), *w)));
    Ok(difference(pos, &neg))
}

/// Gradient from real-valued visible vectors (binary states or reconstruction probabilities).
pub fn gradient_from_visible(
    m: &RbmModel,
    positive: &[Vec<f64>],
    negative: &[Vec<f64>],
) -> Result<GradientSet> {
    if positive.is_empty() {
        return Err(Error::EmptyInput("data batch"));
    }
    if negative.is_empty() {
        return Err(Error::EmptyInput("model sample"));
    }
    for v in positive.iter().chain(negative) {
        check_len("visible vector", m.n_visible, v.len())?;
    }
    let pos = phase_statistics(m, positive.iter().map(|v| (v.as_slice(), 1.0)));
    let neg = phase_statistics(m, negative.iter().map(|v| (v.as_slice(), 1.0)));
    Ok(difference(pos, &neg))
}

fn as_real(m: &RbmModel, batch: &[BinaryVector]) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("data batch"));
    }
    batch
        .iter()
        .map(|v| {
            check_len("data visible", m.n_visible, v.len())?;
            Ok(v.to_f64())
        })
        .collect()
}

/// Momentum SGA with L2 decay on weights and biases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateRule {
    pub learning_rate: f64,
    pub l2: f64,
    pub momentum: f64,
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule {
            learning_rate: 0.05,
            l2: 1e-3,
            momentum: 0.5,
        }
    }
}

impl UpdateRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::InvalidArgument("l2 must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `velocity' = μ·velocity + lr·(g − λ·θ)`, `θ' = θ + velocity'`.
pub fn apply_update(
    m: &RbmModel,
    g: &GradientSet,
    rule: &UpdateRule,
    velocity: &GradientSet,
) -> Result<(RbmModel, GradientSet)> {
    rule.validate()?;
    g.check_shape(m)?;
    velocity.check_shape(m)?;
    let UpdateRule {
        learning_rate: lr,
        l2,
        momentum: mu,
    } = *rule;

    let step = |theta: &[f64], grad: &[f64], vel: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let new_vel: Vec<f64> = theta
            .iter()
            .zip(grad)
            .zip(vel)
            .map(|((&p, &dg), &dv)| mu * dv + lr * (dg - l2 * p))
            .collect();
        let new_theta = theta.iter().zip(&new_vel).map(|(p, dv)| p + dv).collect();
        (new_theta, new_vel)
    };
    let (weights, vw) = step(&m.weights, &g.d_weights, &velocity.d_weights);
    let (visible_bias, vb) = step(&m.visible_bias, &g.d_visible_bias, &velocity.d_visible_bias);
    let (hidden_bias, vc) = step(&m.hidden_bias, &g.d_hidden_bias, &velocity.d_hidden_bias);

    let model = RbmModel {
        weights,
        visible_bias,
        hidden_bias,
        ..m.clone()
    };
    let velocity = GradientSet {
        d_weights: vw,
        d_visible_bias: vb,
        d_hidden_bias: vc,
    };
    if !model.is_finite() || !velocity.is_finite() {
        return Err(Error::NumericOverflow("parameter update"));
    }
    Ok((model, velocity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    /// Double-loop energy written independently of the library path.
    fn brute_energy(m: &RbmModel, s: &JointState) -> f64 {
        let mut e = 0.0;
        for i in 0..m.n_hidden() {
            for j in 0..m.n_visible() {
                e -= m.weight(i, j) * f64::from(s.h.get(i)) * f64::from(s.v.get(j));
            }
        }
        for j in 0..m.n_visible() {
            e -= m.visible_bias()[j] * f64::from(s.v.get(j));
        }
        for i in 0..m.n_hidden() {
            e -= m.hidden_bias()[i] * f64::from(s.h.get(i));
        }
        e
    }

    fn all_states(m: &RbmModel) -> impl Iterator<Item = JointState> + '_ {
        (0..(1u64 << m.n_units()))
            .map(move |k| JointState::from_index(m.n_visible(), m.n_hidden(), k))
    }

    fn naive_partition(m: &RbmModel) -> f64 {
        all_states(m)
            .map(|s| (-brute_energy(m, &s) / m.temperature()).exp())
            .sum()
    }

    fn pair_model(w: f64, b: f64, c: f64) -> RbmModel {
        RbmModel::new(1, 1, vec![w], vec![b], vec![c], 1.0).unwrap()
    }

    #[test]
    fn zero_model_energy_is_zero() {
        let m = RbmModel::zeros(3, 2);
        for s in all_states(&m) {
            assert_eq!(m.energy(&s).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_pair_energy_sign() {
        let m = pair_model(1.0, 0.0, 0.0);
        let s = JointState::new(BinaryVector::ones(1), BinaryVector::ones(1));
        assert_eq!(m.energy(&s).unwrap(), -1.0);
    }

    #[test]
    fn energy_matches_double_loop() {
        let m = RbmModel::random_uniform(3, 2, 1.5, &mut rng::from_seed(11));
        let mut count = 0;
        for s in all_states(&m) {
            assert_eq!(m.energy(&s).unwrap(), brute_energy(&m, &s));
            count += 1;
        }
        assert_eq!(count, 32);
    }

    #[test]
    fn energy_rejects_bad_dimensions() {
        let m = RbmModel::zeros(3, 2);
        let s = JointState::new(BinaryVector::zeros(2), BinaryVector::zeros(2));
        assert!(matches!(
            m.energy(&s),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.hidden_conditionals(&BinaryVector::zeros(4)).is_err());
        assert!(m.visible_conditionals(&BinaryVector::zeros(1)).is_err());
    }

    #[test]
    fn conditionals_of_zero_model_are_half() {
        let m = RbmModel::zeros(4, 3);
        assert!(m
            .hidden_conditionals(&BinaryVector::ones(4))
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));
        assert!(m
            .visible_conditionals(&BinaryVector::ones(3))
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));
    }

    #[test]
    fn conditionals_saturate() {
        let m = pair_model(0.0, -50.0, 50.0);
        let ph = m.hidden_conditionals(&BinaryVector::zeros(1)).unwrap()[0];
        assert!((1.0 - ph).abs() < 1e-15);
        let pv = m.visible_conditionals(&BinaryVector::zeros(1)).unwrap()[0];
        assert!(pv < 1e-15);
    }

    #[test]
    fn conditionals_match_two_state_enumeration() {
        let m = RbmModel::random_uniform(4, 3, 1.0, &mut rng::from_seed(5))
            .with_temperature(0.7)
            .unwrap();
        for vi in 0..16 {
            let v = BinaryVector::from_index(4, vi);
            let probs = m.hidden_conditionals(&v).unwrap();
            for hi in 0..8u64 {
                let h = BinaryVector::from_index(3, hi);
                for (i, &p) in probs.iter().enumerate() {
                    // p(h_i=1 | v, rest of h) from the two energies differing only in h_i
                    let mut on = h.clone();
                    on.set(i, 1);
                    let mut off = h.clone();
                    off.set(i, 0);
                    let e1 = brute_energy(&m, &JointState::new(v.clone(), on));
                    let e0 = brute_energy(&m, &JointState::new(v.clone(), off));
                    let w1 = (-e1 / 0.7).exp();
                    let w0 = (-e0 / 0.7).exp();
                    assert!((p - w1 / (w0 + w1)).abs() < 1e-12);
                }
            }
        }
        for hi in 0..8 {
            let h = BinaryVector::from_index(3, hi);
            let probs = m.visible_conditionals(&h).unwrap();
            for (j, &p) in probs.iter().enumerate() {
                let mut on = BinaryVector::zeros(4);
                on.set(j, 1);
                let e1 = brute_energy(&m, &JointState::new(on, h.clone()));
                let e0 = brute_energy(&m, &JointState::new(BinaryVector::zeros(4), h.clone()));
                let w1 = (-e1 / 0.7).exp();
                let w0 = (-e0 / 0.7).exp();
                assert!((p - w1 / (w0 + w1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_log_partition_cases() {
        let z = RbmModel::zeros(3, 4).exact_log_partition().unwrap();
        assert!((z - 7.0 * 2f64.ln()).abs() < 1e-12);
        let m = pair_model(1.0, 0.0, 0.0);
        let expected = (3.0 + 1f64.exp()).ln();
        assert!((m.exact_log_partition().unwrap() - expected).abs() < 1e-14);
        assert!(matches!(
            RbmModel::zeros(20, 7).exact_log_partition(),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn exact_log_partition_matches_naive_sum() {
        for seed in 0..5 {
            let m = RbmModel::random_uniform(7, 5, 1.0, &mut rng::from_seed(seed))
                .with_temperature(0.5 + seed as f64 * 0.4)
                .unwrap();
            let naive = naive_partition(&m);
            let ours = m.exact_log_partition().unwrap().exp();
            assert!(((ours - naive) / naive).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_distribution_normalizes_and_marginalizes() {
        let m = RbmModel::random_uniform(6, 5, 1.0, &mut rng::from_seed(3));
        let log_z = m.exact_log_partition().unwrap();
        let total: f64 = all_states(&m)
            .map(|s| (-m.energy(&s).unwrap() - log_z).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        let pv = m.exact_visible_distribution().unwrap();
        for (vi, p) in pv.iter().enumerate() {
            let v = BinaryVector::from_index(6, vi as u64);
            let by_sum: f64 = (0..32u64)
                .map(|hi| {
                    let s = JointState::new(v.clone(), BinaryVector::from_index(5, hi));
                    (-brute_energy(&m, &s) - log_z).exp()
                })
                .sum();
            assert!((p - by_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_vanishes_when_phases_coincide() {
        let m = RbmModel::random_uniform(5, 3, 1.0, &mut rng::from_seed(9));
        let data: Vec<_> = (0..6).map(|k| BinaryVector::from_index(5, k * 5 + 1)).collect();
        let sample: Vec<_> = data
            .iter()
            .map(|v| JointState::new(v.clone(), BinaryVector::zeros(3)))
            .collect();
        let g = loglik_gradient(&m, &data, &sample).unwrap();
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn uniform_model_visible_gradient_is_half() {
        let m = RbmModel::zeros(4, 2);
        let exact: Vec<_> = m
            .exact_visible_distribution()
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(k, p)| (BinaryVector::from_index(4, k as u64), p))
            .collect();
        let g = loglik_gradient_weighted(&m, &[BinaryVector::ones(4)], &exact).unwrap();
        for db in &g.d_visible_bias {
            assert!((db - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_requires_nonempty_inputs() {
        let m = RbmModel::zeros(2, 2);
        let s = JointState::new(BinaryVector::zeros(2), BinaryVector::zeros(2));
        assert!(matches!(
            loglik_gradient(&m, &[], &[s]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            loglik_gradient(&m, &[BinaryVector::zeros(2)], &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn update_fixed_point_and_plain_ascent() {
        let m = RbmModel::random_uniform(3, 2, 1.0, &mut rng::from_seed(1));
        let zero = GradientSet::zeros_like(&m);
        let rule = UpdateRule {
            learning_rate: 0.3,
            l2: 0.0,
            momentum: 0.0,
        };
        let (same, _) = apply_update(&m, &zero, &rule, &zero).unwrap();
        assert_eq!(same, m);

        let mut g = zero.clone();
        g.d_weights[2] = 0.5;
        g.d_visible_bias[1] = -1.0;
        g.d_hidden_bias[0] = 2.0;
        let (next, vel) = apply_update(&m, &g, &rule, &zero).unwrap();
        assert_eq!(next.weights()[2], m.weights()[2] + 0.3 * 0.5);
        assert_eq!(next.visible_bias()[1], m.visible_bias()[1] - 0.3);
        assert_eq!(next.hidden_bias()[0], m.hidden_bias()[0] + 0.3 * 2.0);
        assert_eq!(vel.d_weights[2], 0.3 * 0.5);
    }

    #[test]
    fn one_step_decay() {
        let m = RbmModel::new(1, 1, vec![2.0], vec![0.0], vec![0.0], 1.0).unwrap();
        let zero = GradientSet::zeros_like(&m);
        let rule = UpdateRule {
            learning_rate: 1.0,
            l2: 0.1,
            momentum: 0.0,
        };
        let (next, _) = apply_update(&m, &zero, &rule, &zero).unwrap();
        assert!((next.weights()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let m = RbmModel::zeros(1, 1);
        let mut g = GradientSet::zeros_like(&m);
        g.d_weights[0] = 1.0;
        let rule = UpdateRule {
            learning_rate: 0.1,
            l2: 0.0,
            momentum: 0.5,
        };
        let (m1, v1) = apply_update(&m, &g, &rule, &GradientSet::zeros_like(&m)).unwrap();
        let (m2, v2) = apply_update(&m1, &g, &rule, &v1).unwrap();
        assert!((v2.d_weights[0] - 0.15).abs() < 1e-15);
        assert!((m2.weights()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_bad_rule_and_overflow() {
        let m = RbmModel::zeros(1, 1);
        let zero = GradientSet::zeros_like(&m);
        let bad = UpdateRule {
            learning_rate: 0.0,
            ..UpdateRule::default()
        };
        assert!(apply_update(&m, &zero, &bad, &zero).is_err());
        let bad = UpdateRule {
            momentum: 1.0,
            ..UpdateRule::default()
        };
        assert!(apply_update(&m, &zero, &bad, &zero).is_err());
        let mut g = zero.clone();
        g.d_weights[0] = f64::MAX;
        let rule = UpdateRule {
            learning_rate: 10.0,
            l2: 0.0,
            momentum: 0.0,
        };
        assert!(matches!(
            apply_update(&m, &g, &rule, &zero),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = RbmModel::random(7, 4, 0.3, &mut rng::from_seed(2))
            .with_temperature(0.9)
            .unwrap();
        let back = RbmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(RbmModel::load(&path).unwrap(), m);
    }

    #[test]
    fn checkpoint_rejects_bad_shape_and_version() {
        let mut ck = RbmModel::zeros(2, 2).to_checkpoint();
        ck.weights.pop();
        assert!(ck.clone().into_model().is_err());
        let mut ck = RbmModel::zeros(2, 2).to_checkpoint();
        ck.version = 99;
        assert!(ck.into_model().is_err());
    }

    proptest! {
        #[test]
        fn decay_shrinks_every_nonzero_parameter(
            params in proptest::collection::vec(-5.0f64..5.0, 9),
            l2 in 1e-4f64..0.5,
            lr in 1e-3f64..1.0,
        ) {
            let m = RbmModel::new(2, 2, params[..4].to_vec(), params[4..6].to_vec(), params[6..8].to_vec(), 1.0).unwrap();
            let zero = GradientSet::zeros_like(&m);
            let rule = UpdateRule { learning_rate: lr, l2, momentum: 0.0 };
            let (next, _) = apply_update(&m, &zero, &rule, &zero).unwrap();
            let before = m.weights().iter().chain(m.visible_bias()).chain(m.hidden_bias());
            let after = next.weights().iter().chain(next.visible_bias()).chain(next.hidden_bias());
            for (a, b) in before.zip(after) {
                if *a != 0.0 {
                    prop_assert!(b.abs() < a.abs());
                }
            }
        }

        #[test]
        fn energy_identical_across_representations(seed in 0u64..1000, k in 0u64..512) {
            let m = RbmModel::random_uniform(5, 4, 1.0, &mut rng::from_seed(seed));
            let s = JointState::from_index(5, 4, k);
            let flat = JointState::from_flat(&s.to_flat(), 5);
            prop_assert_eq!(m.energy(&s).unwrap(), m.energy(&flat).unwrap());
            let rebuilt = RbmModel::from_json(&m.to_json()).unwrap();
            prop_assert_eq!(m.energy(&s).unwrap(), rebuilt.energy(&s).unwrap());
        }
    }
}
