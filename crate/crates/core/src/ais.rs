//! Annealed importance sampling for `ln Z`, and dataset log-likelihood.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BinaryVector;
use crate::error::{check_len, Error, Result};
use crate::rbm::{softplus, LogSumExp, RbmModel};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Linear,
    Geometric,
}

/// Visible biases of the independent base model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AisBase {
    /// The target model's own visible biases.
    ModelBias,
    /// `logit` of per-pixel on-rates, clipped away from 0 and 1.
    BaseRates(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AisConfig {
    pub n_temps: usize,
    pub n_chains: usize,
    pub schedule: Schedule,
    pub rng_seed: u64,
    pub base: AisBase,
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig {
            n_temps: 1000,
            n_chains: 100,
            schedule: Schedule::Linear,
            rng_seed: 0,
            base: AisBase::ModelBias,
        }
    }
}

impl AisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_temps < 2 {
            return Err(Error::InvalidArgument(format!("n_temps {} must be ≥ 2", self.n_temps)));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidArgument("n_chains must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `n_temps` inverse temperatures from 0 to 1 inclusive.
    pub fn betas(&self) -> Vec<f64> {
        let k = self.n_temps - 1;
        match self.schedule {
            Schedule::Linear => (0..=k).map(|i| i as f64 / k as f64).collect(),
            Schedule::Geometric => {
                // zero, then a geometric ramp from 1e-3
                let lo: f64 = 1e-3;
                std::iter::once(0.0)
                    .chain((0..k).map(|i| {
                        if k == 1 {
                            1.0
                        } else {
                            lo.powf(1.0 - i as f64 / (k - 1) as f64)
                        }
                    }))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogZEstimate {
    pub log_z: f64,
    pub std_err: f64,
    pub n_chains: usize,
}

/// Per-pixel on-rates of `data`, for [`AisBase::BaseRates`].
pub fn base_rates(data: &[BinaryVector]) -> Result<Vec<f64>> {
    let first = data.first().ok_or(Error::EmptyInput("base-rate data"))?;
    let mut rates = vec![0.0; first.len()];
    for v in data {
        check_len("pattern", rates.len(), v.len())?;
        for j in v.ones_indices() {
            rates[j] += 1.0;
        }
    }
    Ok(rates.into_iter().map(|r| r / data.len() as f64).collect())
}

fn base_bias(m: &RbmModel, base: &AisBase) -> Result<Vec<f64>> {
    match base {
        AisBase::ModelBias => Ok(m.visible_bias().to_vec()),
        AisBase::BaseRates(rates) => {
            check_len("base rates", m.n_visible(), rates.len())?;
            Ok(rates
                .iter()
                .map(|&p| {
                    let p = p.clamp(1e-3, 1.0 - 1e-3);
                    // scaled so the base marginal at temperature T matches the rate
                    m.temperature() * (p / (1.0 - p)).ln()
                })
                .collect())
        }
    }
}

/// `ln Z_A = Σ_j softplus(b_A,j / T) + n_h ln 2`.
fn base_log_z(m: &RbmModel, b_a: &[f64]) -> f64 {
    let t = m.temperature();
    b_a.iter().map(|b| softplus(b / t)).sum::<f64>() + m.n_hidden() as f64 * std::f64::consts::LN_2
}

/// `ln p*_β(v)` with `hidden_in = c + W v` precomputed.
fn log_target(m: &RbmModel, b_a: &[f64], v: &[u8], hidden_in: &[f64], beta: f64) -> f64 {
    let t = m.temperature();
    let mut vis = 0.0;
    for (j, &bit) in v.iter().enumerate() {
        if bit == 1 {
            vis += (1.0 - beta) * b_a[j] + beta * m.visible_bias()[j];
        }
    }
    vis / t + hidden_in.iter().map(|x| softplus(beta * x / t)).sum::<f64>()
}

fn hidden_in(m: &RbmModel, v: &[u8], out: &mut [f64]) {
    out.copy_from_slice(m.hidden_bias());
    for (i, o) in out.iter_mut().enumerate() {
        let row = m.weight_row(i);
        for (j, &bit) in v.iter().enumerate() {
            if bit == 1 {
                *o += row[j];
            }
        }
    }
}

fn run_chain(m: &RbmModel, b_a: &[f64], betas: &[f64], rng: &mut rng::Rng) -> Result<f64> {
    let t = m.temperature();
    let (nv, nh) = (m.n_visible(), m.n_hidden());
    let mut v: Vec<u8> = b_a
        .iter()
        .map(|b| u8::from(rng.random::<f64>() < crate::rbm::sigmoid(b / t)))
        .collect();
    let mut h = vec![0u8; nh];
    let mut x = vec![0.0; nh];
    let mut vis_in = vec![0.0; nv];
    let mut log_w = 0.0;
    for k in 1..betas.len() {
        let (prev, cur) = (betas[k - 1], betas[k]);
        hidden_in(m, &v, &mut x);
        log_w += log_target(m, b_a, &v, &x, cur) - log_target(m, b_a, &v, &x, prev);
        if !log_w.is_finite() {
            return Err(Error::AisNonFinite(k));
        }
        if k + 1 == betas.len() {
            break;
        }
        // one block-Gibbs transition leaving p*_cur invariant
        for (hi, xi) in h.iter_mut().zip(&x) {
            *hi = u8::from(rng.random::<f64>() < crate::rbm::sigmoid(cur * xi / t));
        }
        for (j, vi) in vis_in.iter_mut().enumerate() {
            *vi = (1.0 - cur) * b_a[j] + cur * m.visible_bias()[j];
        }
        for (i, &hb) in h.iter().enumerate() {
            if hb == 1 {
                for (vi, w) in vis_in.iter_mut().zip(m.weight_row(i)) {
                    *vi += cur * w;
                }
            }
        }
        for (vj, inp) in v.iter_mut().zip(&vis_in) {
            *vj = u8::from(rng.random::<f64>() < crate::rbm::sigmoid(inp / t));
        }
    }
    Ok(log_w)
}

/// Final log importance weight of each chain, without the base `ln Z_A`.
pub fn ais_log_weights(m: &RbmModel, cfg: &AisConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let b_a = base_bias(m, &cfg.base)?;
    let betas = cfg.betas();
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(m, &b_a, &betas, &mut rng::substream(cfg.rng_seed, &[c as u64])))
        .collect()
}

/// AIS estimate of `ln Z`; `std_err` is the delta-method error of the log-mean weight.
pub fn ais_log_z(m: &RbmModel, cfg: &AisConfig) -> Result<LogZEstimate> {
    let log_w = ais_log_weights(m, cfg)?;
    let b_a = base_bias(m, &cfg.base)?;
    let n = log_w.len() as f64;
    let mut acc = LogSumExp::default();
    for &w in &log_w {
        acc.push(w);
    }
    let log_mean = acc.value() - n.ln();
    // weights relative to their mean: r_c = w_c / mean(w)
    let var_rel = log_w.iter().map(|w| ((w - log_mean).exp() - 1.0).powi(2)).sum::<f64>()
        / (n - 1.0).max(1.0);
    let std_err = (var_rel / n).sqrt();
    let log_z = log_mean + base_log_z(m, &b_a);
    if !log_z.is_finite() || !std_err.is_finite() {
        return Err(Error::AisNonFinite(cfg.n_temps - 1));
    }
    Ok(LogZEstimate {
        log_z,
        std_err,
        n_chains: cfg.n_chains,
    })
}

/// Mean of `ln p(v) = ln Σ_h exp(-E(v,h)/T) − ln Z` over `data`.
pub fn log_likelihood(m: &RbmModel, data: &[BinaryVector], log_z: f64) -> Result<f64> {
    if !log_z.is_finite() {
        return Err(Error::InvalidArgument(format!("log Z {log_z} is not finite")));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("log-likelihood data"));
    }
    let total: f64 = data
        .iter()
        .map(|v| m.log_unnormalized_marginal(v))
        .sum::<Result<f64>>()?;
    Ok(total / data.len() as f64 - log_z)
}
