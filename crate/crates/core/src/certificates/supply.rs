use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::SubsystemModel;
use crate::symla::{AffineMatrix, ScalarVar, SdpProblem, SymMatrix, SymVar};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyKind {
    Continuous,
    Discrete,
}

/// Quadratic supply `[input; output]ᵀ M [input; output]`; the first
/// `partition` coordinates are the input block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyRate {
    pub kind: SupplyKind,
    pub partition: usize,
    pub matrix: SymMatrix,
}

impl SupplyRate {
    pub fn new(kind: SupplyKind, partition: usize, matrix: SymMatrix) -> Result<Self> {
        if partition > matrix.dim() {
            return Err(Error::Dimension(format!(
                "supply partition {partition} exceeds dimension {}",
                matrix.dim()
            )));
        }
        Ok(Self { kind, partition, matrix })
    }

    /// `[a; b]ᵀ M [a; b]` with `a` the input block.
    pub fn eval(&self, input: &[f64], output: &[f64]) -> f64 {
        let v: Vec<f64> = input.iter().chain(output).copied().collect();
        let m = self.matrix.as_matrix();
        let mut acc = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                acc += v[i] * m[(i, j)] * v[j];
            }
        }
        acc
    }
}

/// A supply-rate unknown together with its input/output split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupplyVar {
    pub var: SymVar,
    pub partition: usize,
}

impl SupplyVar {
    pub fn new(p: &mut SdpProblem, n_in: usize, n_out: usize, label: &str) -> Self {
        Self {
            var: p.add_sym(n_in + n_out, label),
            partition: n_in,
        }
    }

    pub fn expr(&self) -> AffineMatrix {
        self.var.expr()
    }

    pub fn value(&self, kind: SupplyKind, x: &[f64]) -> SupplyRate {
        let m = SymMatrix::new(self.var.value(x)).expect("solver values are finite");
        SupplyRate::new(kind, self.partition, m).expect("partition fits")
    }
}

/// Mode-indexed quadratic storage `V(x, q) = xᵀ P_q x + λ_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageCertificate {
    pub subsystem: usize,
    /// Keyed by the state symbol (stringified for the text format).
    #[serde(with = "keyed")]
    pub p: BTreeMap<i64, SymMatrix>,
    #[serde(with = "keyed")]
    pub lambda: BTreeMap<i64, f64>,
}

impl StorageCertificate {
    pub fn value(&self, q: i64, x: &[f64]) -> f64 {
        let p = self.p[&q].as_matrix();
        let mut acc = self.lambda.get(&q).copied().unwrap_or(0.0);
        for i in 0..x.len() {
            for j in 0..x.len() {
                acc += x[i] * p[(i, j)] * x[j];
            }
        }
        acc
    }

    /// Every `P_q` multiplied by `factor` (used to build corrupted certificates).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            subsystem: self.subsystem,
            p: self
                .p
                .iter()
                .map(|(&q, m)| (q, SymMatrix::new(m.as_matrix() * factor).expect("finite")))
                .collect(),
            lambda: self.lambda.clone(),
        }
    }
}

mod keyed {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(m: &BTreeMap<i64, T>, s: S) -> Result<S::Ok, S::Error> {
        let named: BTreeMap<String, &T> = m.iter().map(|(k, v)| (k.to_string(), v)).collect();
        named.serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, T>, D::Error> {
        let named = BTreeMap::<String, T>::deserialize(d)?;
        named
            .into_iter()
            .map(|(k, v)| k.parse::<i64>().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// How storage unknowns are parameterised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageForm {
    /// `xᵀ P_q x + λ_q`, with `P_q` shared inside each strongly connected
    /// component of the transition graph (the jump inequalities force
    /// equality there anyway).
    #[default]
    ModeIndexed,
    /// `[x; q]ᵀ [P r; rᵀ λ] [x; q]` with `r = 0`: one `P` for all states and
    /// offset `λ q²`.
    CrossTerm,
}

/// Storage unknowns of one subsystem.
#[derive(Clone, Debug)]
pub struct StorageVars {
    pub subsystem: usize,
    pub p: BTreeMap<i64, SymVar>,
    /// Offsets `λ_q`; `None` for Lyapunov functions, which vanish at the origin.
    pub lambda: Option<BTreeMap<i64, AffineMatrix>>,
    /// Distinct unknowns, for objectives and bookkeeping.
    pub p_unknowns: Vec<SymVar>,
    pub lambda_unknowns: Vec<ScalarVar>,
}

impl StorageVars {
    pub fn new(prob: &mut SdpProblem, model: &SubsystemModel, form: StorageForm, with_offsets: bool) -> Self {
        let i = model.id();
        let dfsm = model.dfsm();
        let mut p = BTreeMap::new();
        let mut p_unknowns = Vec::new();
        let mut lambda_unknowns = Vec::new();
        let lambda = match form {
            StorageForm::ModeIndexed => {
                let comps = dfsm.components();
                let ncomp = comps.iter().max().map_or(0, |m| m + 1);
                for c in 0..ncomp {
                    p_unknowns.push(prob.add_sym(model.n(), format!("P[{i}].c{c}")));
                }
                for (&q, &c) in dfsm.states().iter().zip(&comps) {
                    p.insert(q, p_unknowns[c]);
                }
                with_offsets.then(|| {
                    dfsm.states()
                        .iter()
                        .map(|&q| {
                            let v = prob.add_scalar(format!("lambda[{i}].q{q}"));
                            lambda_unknowns.push(v);
                            (q, v.expr())
                        })
                        .collect()
                })
            }
            StorageForm::CrossTerm => {
                let pv = prob.add_sym(model.n(), format!("P[{i}]"));
                p_unknowns.push(pv);
                for &q in dfsm.states() {
                    p.insert(q, pv);
                }
                with_offsets.then(|| {
                    let v = prob.add_scalar(format!("lambda[{i}]"));
                    lambda_unknowns.push(v);
                    dfsm.states()
                        .iter()
                        .map(|&q| (q, v.expr().scale((q * q) as f64)))
                        .collect()
                })
            }
        };
        Self {
            subsystem: i,
            p,
            lambda,
            p_unknowns,
            lambda_unknowns,
        }
    }

    pub fn value(&self, x: &[f64]) -> StorageCertificate {
        StorageCertificate {
            subsystem: self.subsystem,
            p: self
                .p
                .iter()
                .map(|(&q, v)| (q, SymMatrix::new(v.value(x)).expect("finite")))
                .collect(),
            lambda: match &self.lambda {
                Some(l) => l.iter().map(|(&q, e)| (q, e.eval(x)[(0, 0)])).collect(),
                None => self.p.keys().map(|&q| (q, 0.0)).collect(),
            },
        }
    }
}

/// Which induced quantity the global supply encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainTarget {
    /// `S = [γ I, 0; 0, −I]` over `(d, z)`.
    ContinuousL2,
    /// `R = [γ I, 0; 0, −I]` over `(μ, ζ)`.
    DiscreteL2,
    /// `S = [0, ½ I; ½ I, 0]`: passivity from `d` to `z`.
    Passivity,
}

/// Gain objective: `γ` is minimised when `fixed` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainObjective {
    pub target: GainTarget,
    pub fixed: Option<f64>,
}

impl GainObjective {
    pub fn minimize(target: GainTarget) -> Self {
        Self { target, fixed: None }
    }
}

/// `[γ I_a, 0; 0, −I_b]`; `gamma` is an unknown or a fixed value.
pub(crate) fn gain_supply(gamma: std::result::Result<ScalarVar, f64>, n_in: usize, n_out: usize) -> AffineMatrix {
    let dim = n_in + n_out;
    let sel = DMatrix::from_fn(dim, dim, |r, c| if r == c && r < n_in { 1.0 } else { 0.0 });
    let neg = DMatrix::from_fn(dim, dim, |r, c| if r == c && r >= n_in { -1.0 } else { 0.0 });
    match gamma {
        Ok(g) => AffineMatrix::constant(neg) + g.times(sel),
        Err(v) => AffineMatrix::constant(neg + sel * v),
    }
}

pub(crate) fn passivity_supply(n: usize) -> AffineMatrix {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        m[(k, n + k)] = 0.5;
        m[(n + k, k)] = 0.5;
    }
    AffineMatrix::constant(m)
}

/// Storage as affine expressions: unknowns while solving, constants when
/// auditing a finished certificate.
#[derive(Clone, Debug)]
pub struct StorageExprs {
    pub p: BTreeMap<i64, AffineMatrix>,
    pub lambda: Option<BTreeMap<i64, AffineMatrix>>,
}

impl From<&StorageVars> for StorageExprs {
    fn from(v: &StorageVars) -> Self {
        Self {
            p: v.p.iter().map(|(&q, s)| (q, s.expr())).collect(),
            lambda: v.lambda.clone(),
        }
    }
}

impl From<&StorageCertificate> for StorageExprs {
    fn from(c: &StorageCertificate) -> Self {
        Self {
            p: c.p.iter().map(|(&q, m)| (q, AffineMatrix::constant(m.as_matrix().clone()))).collect(),
            lambda: Some(
                c.lambda
                    .iter()
                    .map(|(&q, &l)| (q, AffineMatrix::constant(DMatrix::from_element(1, 1, l))))
                    .collect(),
            ),
        }
    }
}
