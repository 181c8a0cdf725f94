//! QUBO encoding of an RBM, with dynamic scaling and label/pixel clamping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::{BinaryVector, JointState};
use crate::error::{check_len, Error, Result};
use crate::rbm::RbmModel;

/// `E(x) = Σ_i linear_i x_i + Σ_{i<j} Q_ij x_i x_j` over `x ∈ {0,1}ⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboProblem {
    n_vars: usize,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    clamps: BTreeMap<usize, u8>,
}

impl QuboProblem {
    pub fn new(n_vars: usize) -> Self {
        QuboProblem {
            n_vars,
            linear: vec![0.0; n_vars],
            quadratic: BTreeMap::new(),
            clamps: BTreeMap::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn clamps(&self) -> &BTreeMap<usize, u8> {
        &self.clamps
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n_vars {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                n_vars: self.n_vars,
            })
        }
    }

    pub fn set_linear(&mut self, i: usize, value: f64) -> Result<()> {
        self.check_index(i)?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument("non-finite linear coefficient".into()));
        }
        self.linear[i] = value;
        Ok(())
    }

    /// Adds to the coupling between `i` and `j` (stored with the smaller index first).
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "diagonal quadratic entry ({i}, {i}); use the linear term"
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidArgument("non-finite quadratic coefficient".into()));
        }
        *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += value;
        Ok(())
    }

    pub fn set_clamp(&mut self, i: usize, bit: u8) -> Result<()> {
        self.check_index(i)?;
        self.clamps.insert(i, u8::from(bit != 0));
        Ok(())
    }

    pub fn energy(&self, x: &BinaryVector) -> Result<f64> {
        check_len("QUBO state", self.n_vars, x.len())?;
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &BinaryVector) -> f64 {
        let lin: f64 = x.ones_indices().map(|i| self.linear[i]).sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .filter(|((i, j), _)| x.get(*i) == 1 && x.get(*j) == 1)
            .map(|(_, q)| q)
            .sum();
        lin + quad
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .iter()
            .chain(self.quadratic.values())
            .fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    /// Every coefficient multiplied by `factor`; clamps are kept.
    pub fn scaled(&self, factor: f64) -> QuboProblem {
        QuboProblem {
            n_vars: self.n_vars,
            linear: self.linear.iter().map(|x| x * factor).collect(),
            quadratic: self
                .quadratic
                .iter()
                .map(|(k, q)| (*k, q * factor))
                .collect(),
            clamps: self.clamps.clone(),
        }
    }

    /// Symmetric neighbour lists `(other, Q)` for local-field updates.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_vars];
        for (&(i, j), &q) in &self.quadratic {
            adj[i].push((j, q));
            adj[j].push((i, q));
        }
        adj
    }

    pub fn satisfies_clamps(&self, x: &BinaryVector) -> bool {
        self.clamps.iter().all(|(&i, &b)| x.get(i) == b)
    }

    pub(crate) fn from_parts(
        n_vars: usize,
        linear: Vec<f64>,
        quadratic: BTreeMap<(usize, usize), f64>,
        clamps: BTreeMap<usize, u8>,
    ) -> Result<Self> {
        check_len("linear terms", n_vars, linear.len())?;
        let mut p = QuboProblem::new(n_vars);
        for (i, v) in linear.into_iter().enumerate() {
            p.set_linear(i, v)?;
        }
        for ((i, j), q) in quadratic {
            p.add_quadratic(i, j, q)?;
        }
        for (i, b) in clamps {
            p.set_clamp(i, b)?;
        }
        Ok(p)
    }
}

/// Encodes `m` with variables ordered visible-then-hidden and every coefficient
/// divided by `sf = max|θ| / target_weight`, so `sf · E_qubo(x) = E_rbm(x)`.
/// A model with all-zero parameters gets `sf = 1`.
pub fn rbm_to_qubo(m: &RbmModel, target_weight: f64) -> Result<(QuboProblem, f64)> {
    if !(target_weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target weight {target_weight} must be positive"
        )));
    }
    let max = m.max_abs_param();
    let sf = if max > 0.0 { max / target_weight } else { 1.0 };
    let nv = m.n_visible();
    let mut p = QuboProblem::new(m.n_units());
    for (j, b) in m.visible_bias().iter().enumerate() {
        p.linear[j] = -b / sf;
    }
    for (i, c) in m.hidden_bias().iter().enumerate() {
        p.linear[nv + i] = -c / sf;
    }
    for i in 0..m.n_hidden() {
        for (j, w) in m.weight_row(i).iter().enumerate() {
            if *w != 0.0 {
                p.quadratic.insert((j, nv + i), -w / sf);
            }
        }
    }
    Ok((p, sf))
}

/// Overwrites the linear term of each assigned variable with `∓strength` so the
/// assigned bit is favoured, and registers the clamp for hard fixing.
pub fn clamp_vars(p: &QuboProblem, assignments: &BTreeMap<usize, u8>, strength: f64) -> Result<QuboProblem> {
    if !(strength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "clamp strength {strength} must be positive"
        )));
    }
    let mut out = p.clone();
    for (&i, &bit) in assignments {
        out.check_index(i)?;
        out.linear[i] = if bit != 0 { -strength } else { strength };
        out.clamps.insert(i, u8::from(bit != 0));
    }
    Ok(out)
}

/// Visible block of a flat QUBO state as a joint RBM state.
pub fn joint_from_qubo(x: &BinaryVector, n_visible: usize) -> JointState {
    JointState::from_flat(x, n_visible)
}
