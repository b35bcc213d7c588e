use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::subsystem::SubsystemModel;
use crate::symla::{matrix_from_rows, matrix_to_rows};
use crate::{Error, Result};

/// Exogenous channel counts: continuous `d`, `z` and discrete `μ`, `ζ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExoDims {
    pub n_d: usize,
    pub n_z: usize,
    pub n_mu: usize,
    pub n_zeta: usize,
}

/// Static interconnection `(w, z) = M_c (y, d)`, `(u, ζ) = M_d (p, μ)`.
///
/// Signals are stacked in subsystem order. Every subsystem has one discrete
/// input and one discrete output, so `M_d` is `(N + n_ζ) × (N + n_μ)`.
/// Shapes are not checked here; see [`validate_interconnection`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterconnection", into = "RawInterconnection")]
pub struct Interconnection {
    pub dims: ExoDims,
    pub m_c: DMatrix<f64>,
    pub m_d: DMatrix<i64>,
    /// Symbols each `μ` channel may carry.
    pub mu_alphabet: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct RawInterconnection {
    n_d: usize,
    n_z: usize,
    n_mu: usize,
    n_zeta: usize,
    mu_alphabet: Vec<i64>,
    m_c_cols: usize,
    m_c: Vec<Vec<f64>>,
    m_d_cols: usize,
    m_d: Vec<Vec<i64>>,
}

impl TryFrom<RawInterconnection> for Interconnection {
    type Error = Error;

    fn try_from(r: RawInterconnection) -> Result<Self> {
        let m_c = if r.m_c.iter().all(Vec::is_empty) {
            DMatrix::zeros(r.m_c.len(), r.m_c_cols)
        } else {
            matrix_from_rows(&r.m_c)?
        };
        if m_c.ncols() != r.m_c_cols {
            return Err(Error::Dimension("M_c width disagrees with m_c_cols".into()));
        }
        if r.m_d.iter().any(|row| row.len() != r.m_d_cols) {
            return Err(Error::Dimension("M_d rows disagree with m_d_cols".into()));
        }
        let m_d = DMatrix::from_fn(r.m_d.len(), r.m_d_cols, |i, j| r.m_d[i][j]);
        Interconnection::new(
            ExoDims {
                n_d: r.n_d,
                n_z: r.n_z,
                n_mu: r.n_mu,
                n_zeta: r.n_zeta,
            },
            m_c,
            m_d,
            r.mu_alphabet,
        )
    }
}

impl From<Interconnection> for RawInterconnection {
    fn from(ic: Interconnection) -> Self {
        Self {
            n_d: ic.dims.n_d,
            n_z: ic.dims.n_z,
            n_mu: ic.dims.n_mu,
            n_zeta: ic.dims.n_zeta,
            mu_alphabet: ic.mu_alphabet,
            m_c_cols: ic.m_c.ncols(),
            m_c: matrix_to_rows(&ic.m_c),
            m_d_cols: ic.m_d.ncols(),
            m_d: (0..ic.m_d.nrows())
                .map(|i| (0..ic.m_d.ncols()).map(|j| ic.m_d[(i, j)]).collect())
                .collect(),
        }
    }
}

impl Interconnection {
    pub fn new(dims: ExoDims, m_c: DMatrix<f64>, m_d: DMatrix<i64>, mu_alphabet: Vec<i64>) -> Result<Self> {
        if m_c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("M_c has non-finite entries".into()));
        }
        Ok(Self {
            dims,
            m_c,
            m_d,
            mu_alphabet,
        })
    }

    /// `(w, z) = M_c (y, d)`.
    pub fn continuous(&self, y: &DVector<f64>, d: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let yd = DVector::from_iterator(y.len() + d.len(), y.iter().chain(d.iter()).copied());
        let wz = &self.m_c * yd;
        let n_w = wz.len() - self.dims.n_z;
        (wz.rows(0, n_w).into_owned(), wz.rows(n_w, self.dims.n_z).into_owned())
    }

    /// Row `row` of `M_d (p, μ)`.
    pub fn discrete_row(&self, row: usize, p: &[i64], mu: &[i64]) -> i64 {
        p.iter()
            .chain(mu)
            .enumerate()
            .map(|(j, &v)| self.m_d[(row, j)] * v)
            .sum()
    }

    /// Order in which discrete outputs can be resolved within one instant:
    /// a subsystem whose output depends on its input comes after every
    /// subsystem feeding that input.
    pub fn discrete_order(&self, models: &[SubsystemModel]) -> Result<Vec<usize>> {
        let n = models.len();
        let deps = self.discrete_dependencies(models);
        let mut indeg: Vec<usize> = deps.iter().map(Vec::len).collect();
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        ready.reverse();
        while let Some(j) = ready.pop() {
            order.push(j);
            for i in 0..n {
                if deps[i].contains(&j) {
                    indeg[i] -= 1;
                    if indeg[i] == 0 {
                        ready.push(i);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(Error::InvalidInput("discrete interconnection has an algebraic loop".into()));
        }
        Ok(order)
    }

    /// `deps[i]`: subsystems whose current output `p_i` depends on.
    fn discrete_dependencies(&self, models: &[SubsystemModel]) -> Vec<Vec<usize>> {
        let n = models.len();
        (0..n)
            .map(|i| {
                if !models[i].dfsm().has_feedthrough() || i >= self.m_d.nrows() {
                    return Vec::new();
                }
                (0..n.min(self.m_d.ncols())).filter(|&j| self.m_d[(i, j)] != 0).collect()
            })
            .collect()
    }
}

/// Index permutation: `(P v)[r] = v[src[r]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    src: Vec<usize>,
}

impl Permutation {
    pub fn from_sources(src: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; src.len()];
        for &s in &src {
            if s >= src.len() || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
        }
        Ok(Self { src })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.src.iter().map(|&s| v[s]).collect()
    }

    pub fn apply_transpose<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (r, &s) in self.src.iter().enumerate() {
            out[s] = v[r];
        }
        out
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.src.len();
        let mut m = DMatrix::zeros(n, n);
        for (r, &s) in self.src.iter().enumerate() {
            m[(r, s)] = 1.0;
        }
        m
    }
}

/// `P_c` maps `(w, z, y, d)` to `(w₁, y₁, …, w_N, y_N, d, z)` and `P_d` maps
/// `(u, ζ, p, μ)` to `(u₁, p₁, …, u_N, p_N, μ, ζ)`.
pub fn build_permutations(models: &[SubsystemModel], dims: &ExoDims) -> (Permutation, Permutation) {
    let io: Vec<(usize, usize)> = models.iter().map(|m| (m.n_w(), m.n_y())).collect();
    let ones = vec![(1, 1); models.len()];
    (
        interleave(&io, dims.n_d, dims.n_z),
        interleave(&ones, dims.n_mu, dims.n_zeta),
    )
}

/// Source stacking `(in, exo_out, out, exo_in)`, target
/// `(in₁, out₁, …, exo_in, exo_out)`.
pub(crate) fn interleave(io: &[(usize, usize)], n_exo_in: usize, n_exo_out: usize) -> Permutation {
    let n_in: usize = io.iter().map(|p| p.0).sum();
    let n_out: usize = io.iter().map(|p| p.1).sum();
    let (off_exo_out, off_out, off_exo_in) = (n_in, n_in + n_exo_out, n_in + n_exo_out + n_out);
    let mut src = Vec::with_capacity(off_exo_in + n_exo_in);
    let (mut ci, mut co) = (0, 0);
    for &(ni, no) in io {
        src.extend(ci..ci + ni);
        src.extend(off_out + co..off_out + co + no);
        ci += ni;
        co += no;
    }
    src.extend(off_exo_in..off_exo_in + n_exo_in);
    src.extend(off_exo_out..off_exo_out + n_exo_out);
    Permutation { src }
}

/// Structural problem found by [`validate_interconnection`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSubsystems,
    Shape {
        matrix: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// `M_d` row `row` can produce symbols outside subsystem `subsystem`'s inputs.
    Alphabet {
        subsystem: usize,
        row: usize,
        values: Vec<i64>,
    },
    EmptyMuAlphabet,
    DiscreteLoop {
        subsystems: Vec<usize>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSubsystems => write!(f, "interconnection has no subsystems"),
            Violation::Shape {
                matrix,
                expected,
                found,
            } => write!(
                f,
                "{matrix} is {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::Alphabet { subsystem, row, values } => write!(
                f,
                "M_d row {row} can drive subsystem {subsystem} with {values:?}, outside its input alphabet"
            ),
            Violation::EmptyMuAlphabet => write!(f, "discrete exogenous input declared with an empty alphabet"),
            Violation::DiscreteLoop { subsystems } => {
                write!(f, "instantaneous discrete loop through subsystems {subsystems:?}")
            }
        }
    }
}

/// Structural checks only: shapes, alphabet reachability of every discrete
/// input row, and absence of instantaneous discrete loops. Well-posedness of
/// the continuous coupling is assumed.
pub fn validate_interconnection(ic: &Interconnection, models: &[SubsystemModel]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = models.len();
    if n == 0 {
        out.push(Violation::NoSubsystems);
        return out;
    }
    let n_w: usize = models.iter().map(|m| m.n_w()).sum();
    let n_y: usize = models.iter().map(|m| m.n_y()).sum();
    let d = ic.dims;
    let exp_c = (n_w + d.n_z, n_y + d.n_d);
    if ic.m_c.shape() != exp_c {
        out.push(Violation::Shape {
            matrix: "M_c",
            expected: exp_c,
            found: ic.m_c.shape(),
        });
    }
    let exp_d = (n + d.n_zeta, n + d.n_mu);
    if ic.m_d.shape() != exp_d {
        out.push(Violation::Shape {
            matrix: "M_d",
            expected: exp_d,
            found: ic.m_d.shape(),
        });
        return out;
    }
    if d.n_mu > 0 && ic.mu_alphabet.is_empty() {
        out.push(Violation::EmptyMuAlphabet);
        return out;
    }

    let emitted: Vec<BTreeSet<i64>> = models.iter().map(|m| m.dfsm().emitted_outputs()).collect();
    let mu: BTreeSet<i64> = ic.mu_alphabet.iter().copied().collect();
    for (i, model) in models.iter().enumerate() {
        let mut reach = BTreeSet::from([0i64]);
        for j in 0..n + d.n_mu {
            let c = ic.m_d[(i, j)];
            if c == 0 {
                continue;
            }
            let src = if j < n { &emitted[j] } else { &mu };
            reach = reach.iter().flat_map(|&a| src.iter().map(move |&b| a + c * b)).collect();
        }
        let bad: Vec<i64> = reach
            .into_iter()
            .filter(|v| !model.dfsm().inputs().contains(v))
            .collect();
        if !bad.is_empty() {
            out.push(Violation::Alphabet {
                subsystem: i,
                row: i,
                values: bad,
            });
        }
    }

    if ic.discrete_order(models).is_err() {
        out.push(Violation::DiscreteLoop {
            subsystems: loop_members(&ic.discrete_dependencies(models)),
        });
    }
    out
}

/// Nodes lying on some cycle of the dependency graph.
fn loop_members(deps: &[Vec<usize>]) -> Vec<usize> {
    let n = deps.len();
    (0..n)
        .filter(|&s| {
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = deps[s].clone();
            while let Some(a) = stack.pop() {
                if a == s {
                    return true;
                }
                if !std::mem::replace(&mut seen[a], true) {
                    stack.extend(&deps[a]);
                }
            }
            false
        })
        .collect()
}
