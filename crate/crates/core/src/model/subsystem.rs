use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dfsm::Dfsm;
use crate::symla::{matrix_from_rows, matrix_to_rows};
use crate::{Error, Result};

/// Linear flow `ẋ = A x + B w`, `y = C x` active in one discrete mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMode", into = "RawMode")]
pub struct ModeDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMode {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl TryFrom<RawMode> for ModeDynamics {
    type Error = Error;

    fn try_from(r: RawMode) -> Result<Self> {
        Ok(Self {
            a: matrix_from_rows(&r.a)?,
            b: matrix_from_rows(&r.b)?,
            c: matrix_from_rows(&r.c)?,
        })
    }
}

impl From<ModeDynamics> for RawMode {
    fn from(m: ModeDynamics) -> Self {
        Self {
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
            c: matrix_to_rows(&m.c),
        }
    }
}

impl ModeDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "mode matrices A {}x{}, B {}x{}, C {}x{} are inconsistent",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mode matrices must be finite".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_w(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
}

/// One hybrid subsystem: a flow per DFSM output symbol plus the DFSM.
///
/// Each subsystem carries one scalar discrete input `u` and one scalar
/// discrete output `p`; the mode in force is the current output symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubsystem", into = "RawSubsystem")]
pub struct SubsystemModel {
    id: usize,
    n: usize,
    n_w: usize,
    n_y: usize,
    modes: BTreeMap<i64, ModeDynamics>,
    dfsm: Dfsm,
}

#[derive(Serialize, Deserialize)]
struct ModeEntry {
    p: i64,
    #[serde(flatten)]
    dynamics: ModeDynamics,
}

#[derive(Serialize, Deserialize)]
struct RawSubsystem {
    id: usize,
    n: usize,
    n_w: usize,
    n_y: usize,
    dfsm: Dfsm,
    mode: Vec<ModeEntry>,
}

impl TryFrom<RawSubsystem> for SubsystemModel {
    type Error = Error;

    fn try_from(r: RawSubsystem) -> Result<Self> {
        let mut modes = BTreeMap::new();
        for m in r.mode {
            // 0-column or 0-row matrices lose their width in row form
            let d = m.dynamics;
            let a = if d.a.nrows() == 0 { DMatrix::zeros(r.n, r.n) } else { d.a };
            let b = if d.b.ncols() == 0 { DMatrix::zeros(r.n, r.n_w) } else { d.b };
            let c = if d.c.nrows() == 0 { DMatrix::zeros(r.n_y, r.n) } else { d.c };
            if modes.insert(m.p, ModeDynamics::new(a, b, c)?).is_some() {
                return Err(Error::InvalidInput(format!("mode {} defined twice", m.p)));
            }
        }
        let s = SubsystemModel::new(r.id, modes, r.dfsm)?;
        if (s.n, s.n_w, s.n_y) != (r.n, r.n_w, r.n_y) {
            return Err(Error::Dimension(format!("subsystem {} header dimensions disagree with its modes", r.id)));
        }
        Ok(s)
    }
}

impl From<SubsystemModel> for RawSubsystem {
    fn from(s: SubsystemModel) -> Self {
        Self {
            id: s.id,
            n: s.n,
            n_w: s.n_w,
            n_y: s.n_y,
            dfsm: s.dfsm,
            mode: s
                .modes
                .into_iter()
                .map(|(p, dynamics)| ModeEntry { p, dynamics })
                .collect(),
        }
    }
}

impl SubsystemModel {
    pub fn new(id: usize, modes: BTreeMap<i64, ModeDynamics>, dfsm: Dfsm) -> Result<Self> {
        let keys: Vec<i64> = modes.keys().copied().collect();
        let mut outs = dfsm.outputs().to_vec();
        outs.sort_unstable();
        if keys != outs {
            return Err(Error::InvalidInput(format!(
                "subsystem {id}: modes {keys:?} must match DFSM outputs {outs:?}"
            )));
        }
        let first = modes.values().next().expect("output alphabet is nonempty");
        let (n, n_w, n_y) = (first.n(), first.n_w(), first.n_y());
        if n == 0 {
            return Err(Error::Dimension(format!("subsystem {id} has no continuous state")));
        }
        for (p, m) in &modes {
            if (m.n(), m.n_w(), m.n_y()) != (n, n_w, n_y) {
                return Err(Error::Dimension(format!("subsystem {id}: mode {p} has different dimensions")));
            }
        }
        Ok(Self {
            id,
            n,
            n_w,
            n_y,
            modes,
            dfsm,
        })
    }

    /// Subsystem with one mode and a trivial machine.
    pub fn lti(id: usize, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let mut modes = BTreeMap::new();
        modes.insert(0, ModeDynamics::new(a, b, c)?);
        Self::new(id, modes, Dfsm::trivial(0))
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// The same subsystem under another index.
    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn modes(&self) -> &BTreeMap<i64, ModeDynamics> {
        &self.modes
    }

    pub fn mode(&self, p: i64) -> Result<&ModeDynamics> {
        self.modes.get(&p).ok_or(Error::Alphabet { alphabet: "output", value: p })
    }

    pub fn dfsm(&self) -> &Dfsm {
        &self.dfsm
    }

    /// Pairs `(q, p)` with `p ∈ l(q, 𝒰)`, or all of `𝒬 × 𝒫` when `full_product`.
    pub fn mode_pairs(&self, full_product: bool) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for &q in self.dfsm.states() {
            if full_product {
                out.extend(self.dfsm.outputs().iter().map(|&p| (q, p)));
            } else {
                let ps = self.dfsm.feasible_outputs(q).expect("state from own alphabet");
                out.extend(ps.into_iter().map(|p| (q, p)));
            }
        }
        out
    }
}
