use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_reads, majority_vote, QuboProblem, SampleOptions, SampleSet, Sampler};
use crate::bits::BinaryVector;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Client for an annealing service speaking the JSON protocol below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteSampler {
    pub url: String,
    #[serde(default = "default_annealing_time")]
    pub annealing_time_us: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_annealing_time() -> f64 {
    20.0
}

fn default_timeout() -> u64 {
    300
}

impl RemoteSampler {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteSampler {
            url: url.into(),
            annealing_time_us: default_annealing_time(),
            timeout_s: default_timeout(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireCoupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireParams {
    pub annealing_time_us: f64,
    pub auto_scale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub n_vars: usize,
    pub linear: Vec<f64>,
    pub quadratic: Vec<WireCoupling>,
    pub clamps: BTreeMap<usize, u8>,
    pub n_reads: usize,
    pub params: WireParams,
}

impl RemoteRequest {
    pub fn new(p: &QuboProblem, n_reads: usize, annealing_time_us: f64, auto_scale: bool) -> Self {
        RemoteRequest {
            n_vars: p.n_vars(),
            linear: p.linear().to_vec(),
            quadratic: p
                .quadratic()
                .iter()
                .map(|(&(i, j), &value)| WireCoupling { i, j, value })
                .collect(),
            clamps: p.clamps().clone(),
            n_reads,
            params: WireParams {
                annealing_time_us,
                auto_scale,
            },
        }
    }

    pub fn to_problem(&self) -> Result<QuboProblem> {
        QuboProblem::from_parts(
            self.n_vars,
            self.linear.clone(),
            self.quadratic.iter().map(|c| ((c.i, c.j), c.value)).collect(),
            self.clamps.clone(),
        )
    }
}

/// `chain_map[v]` lists the physical bit positions that encode logical variable `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub states: Vec<Vec<u8>>,
    #[serde(default)]
    pub energies: Vec<f64>,
    #[serde(default)]
    pub chain_map: Option<Vec<Vec<usize>>>,
}

fn remote_err(msg: impl Into<String>, payload: Option<String>) -> Error {
    Error::Remote {
        msg: msg.into(),
        payload,
    }
}

/// Logical states from a response, resolving chains by majority vote and
/// applying hard clamps.
pub(crate) fn decode_response(
    p: &QuboProblem,
    resp: &RemoteResponse,
    opts: &SampleOptions,
    rng: &mut Rng,
) -> Result<Vec<BinaryVector>> {
    let mut out = Vec::with_capacity(resp.states.len());
    for (r, phys) in resp.states.iter().enumerate() {
        let mut x = match &resp.chain_map {
            None => {
                if phys.len() != p.n_vars() {
                    return Err(remote_err(
                        format!("read {r} has {} bits, expected {}", phys.len(), p.n_vars()),
                        None,
                    ));
                }
                BinaryVector::from_bits(phys.iter().copied())
            }
            Some(map) => {
                if map.len() != p.n_vars() {
                    return Err(remote_err(
                        format!("chain map covers {} variables, expected {}", map.len(), p.n_vars()),
                        None,
                    ));
                }
                let mut x = BinaryVector::zeros(p.n_vars());
                for (v, chain) in map.iter().enumerate() {
                    let bits = chain
                        .iter()
                        .map(|&q| {
                            phys.get(q).copied().ok_or_else(|| {
                                remote_err(format!("read {r}: chain bit {q} out of range"), None)
                            })
                        })
                        .collect::<Result<Vec<u8>>>()?;
                    let bit = majority_vote(&bits, rng)
                        .map_err(|_| remote_err(format!("empty chain for variable {v}"), None))?;
                    x.set(v, bit);
                }
                x
            }
        };
        if opts.hard_clamp {
            for (&i, &b) in p.clamps() {
                x.set(i, b);
            }
        }
        out.push(x);
    }
    Ok(out)
}

impl Sampler for RemoteSampler {
    fn sample(
        &self,
        p: &QuboProblem,
        n_reads: usize,
        opts: &SampleOptions,
        rng: &mut Rng,
    ) -> Result<SampleSet> {
        check_reads(n_reads)?;
        let req = RemoteRequest::new(p, n_reads, self.annealing_time_us, opts.auto_scale);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.url)
            .send_json(&req)
            .map_err(|e| remote_err(format!("request to {} failed: {e}", self.url), None))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| remote_err(format!("reading response body: {e}"), None))?;
        if !status.is_success() {
            return Err(remote_err(format!("service returned {status}"), Some(body)));
        }
        let parsed: RemoteResponse = serde_json::from_str(&body)
            .map_err(|e| remote_err(format!("malformed response: {e}"), Some(body.clone())))?;
        if parsed.states.len() != n_reads {
            return Err(remote_err(
                format!("expected {n_reads} reads, got {}", parsed.states.len()),
                Some(body),
            ));
        }
        let reads = decode_response(p, &parsed, opts, rng)?;
        SampleSet::from_reads(p, reads)
    }
}
