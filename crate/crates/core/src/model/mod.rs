//! Hybrid subsystems, their finite state machines and the static
//! interconnection, plus the text format for whole systems.

mod dfsm;
mod interconnect;
mod subsystem;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dfsm::{dfsm_step, Dfsm};
pub use interconnect::{build_permutations, validate_interconnection, ExoDims, Interconnection, Permutation, Violation};
pub use subsystem::{ModeDynamics, SubsystemModel};

use crate::{Error, Result};

/// A complete interconnected system as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridSystem {
    #[serde(rename = "subsystem")]
    pub subsystems: Vec<SubsystemModel>,
    pub interconnection: Interconnection,
}

impl HybridSystem {
    /// Builds and validates; any structural violation is an error.
    pub fn new(subsystems: Vec<SubsystemModel>, interconnection: Interconnection) -> Result<Self> {
        let sys = Self {
            subsystems,
            interconnection,
        };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<()> {
        for (i, s) in self.subsystems.iter().enumerate() {
            if s.id() != i {
                return Err(Error::InvalidInput(format!("subsystem at position {i} has id {}", s.id())));
            }
        }
        let v = validate_interconnection(&self.interconnection, &self.subsystems);
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(Error::InvalidInput(msgs.join("; ")))
        }
    }

    pub fn n_states(&self) -> usize {
        self.subsystems.iter().map(|s| s.n()).sum()
    }

    pub fn n_discrete_states(&self) -> usize {
        self.subsystems.iter().map(|s| s.dfsm().states().len()).sum()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let sys: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        sys.check()?;
        Ok(sys)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use std::collections::BTreeMap;

    fn scalar(id: usize, a: f64) -> SubsystemModel {
        SubsystemModel::lti(
            id,
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn io_model(id: usize, n_w: usize, n_y: usize) -> SubsystemModel {
        SubsystemModel::lti(id, -DMatrix::identity(2, 2), DMatrix::zeros(2, n_w), DMatrix::zeros(n_y, 2)).unwrap()
    }

    #[test]
    fn single_subsystem_permutation() {
        let models = vec![scalar(0, -1.0)];
        let (pc, _) = build_permutations(&models, &ExoDims::default());
        // (w, z, y, d) = (w, y) -> (w1, y1)
        assert_eq!(pc.apply(&[10.0, 20.0]), vec![10.0, 20.0]);
        let dims = ExoDims {
            n_d: 1,
            n_z: 1,
            ..Default::default()
        };
        let (pc, pd) = build_permutations(&models, &dims);
        // (w, z, y, d) -> (w1, y1, d, z)
        assert_eq!(pc.apply(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 3.0, 4.0, 2.0]);
        assert_eq!(pd.apply(&[1, 2]), vec![1, 2]);
    }

    #[test]
    fn hand_enumerated_interleaving() {
        let models = vec![io_model(0, 2, 1), io_model(1, 1, 2)];
        let dims = ExoDims {
            n_d: 1,
            n_z: 2,
            n_mu: 1,
            n_zeta: 1,
        };
        let (pc, pd) = build_permutations(&models, &dims);
        // source: w0 w1 w2 | z0 z1 | y0 y1 y2 | d0  (indices 0..9)
        // target: w0 w1 y0 | w2 y1 y2 | d0 | z0 z1
        assert_eq!(pc.sources(), &[0, 1, 5, 2, 6, 7, 8, 3, 4]);
        // source: u0 u1 | ζ0 | p0 p1 | μ0 ; target: u0 p0 u1 p1 μ0 ζ0
        assert_eq!(pd.sources(), &[0, 3, 1, 4, 5, 2]);
        let m = pc.matrix();
        for i in 0..m.nrows() {
            assert_eq!(m.row(i).sum(), 1.0);
            assert_eq!(m.column(i).sum(), 1.0);
        }
        assert_eq!(&m * m.transpose(), DMatrix::identity(9, 9));
    }

    #[test]
    fn transpose_undoes_permutation() {
        let models = vec![scalar(0, -1.0), scalar(1, -2.0)];
        let (pc, _) = build_permutations(&models, &ExoDims::default());
        let v = vec![0.1, -0.2, 0.3, 0.7];
        assert_eq!(pc.apply_transpose(&pc.apply(&v)), v);
    }

    fn ring() -> (Vec<SubsystemModel>, Interconnection) {
        let models = vec![scalar(0, -1.0), scalar(1, -1.0)];
        let m_c = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let m_d = DMatrix::from_row_slice(2, 2, &[0, 0, 0, 0]);
        let ic = Interconnection::new(ExoDims::default(), m_c, m_d, vec![]).unwrap();
        (models, ic)
    }

    #[test]
    fn valid_ring_has_no_violations() {
        let (models, ic) = ring();
        assert!(validate_interconnection(&ic, &models).is_empty());
    }

    #[test]
    fn wrong_mc_rows_reported_once() {
        let (models, mut ic) = ring();
        ic.m_c = DMatrix::zeros(3, 2);
        let v = validate_interconnection(&ic, &models);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Shape { matrix: "M_c", .. }));
    }

    fn fsm_pair(m_d: DMatrix<i64>, n_mu: usize) -> (Vec<SubsystemModel>, Interconnection) {
        let mode = ModeDynamics::new(-DMatrix::identity(1, 1), DMatrix::zeros(1, 0), DMatrix::zeros(0, 1)).unwrap();
        let modes: BTreeMap<i64, ModeDynamics> = [0, 1, 2].into_iter().map(|p| (p, mode.clone())).collect();
        let models: Vec<SubsystemModel> = (0..2)
            .map(|i| SubsystemModel::new(i, modes.clone(), Dfsm::three_state_example()).unwrap())
            .collect();
        let dims = ExoDims {
            n_mu,
            ..Default::default()
        };
        let ic = Interconnection::new(dims, DMatrix::zeros(0, 0), m_d, vec![0, 1]).unwrap();
        (models, ic)
    }

    #[test]
    fn alphabet_violation_names_row() {
        // u_1 = 2·p_0 can be 2, outside {0, 1}
        let (models, ic) = fsm_pair(DMatrix::from_row_slice(2, 3, &[0, 0, 1, 2, 0, 0]), 1);
        let v = validate_interconnection(&ic, &models);
        assert_eq!(
            v,
            vec![Violation::Alphabet {
                subsystem: 1,
                row: 1,
                values: vec![2]
            }]
        );
    }

    #[test]
    fn discrete_loop_detected() {
        let (models, ic) = fsm_pair(DMatrix::from_row_slice(2, 2, &[0, 1, 1, 0]), 0);
        let v = validate_interconnection(&ic, &models);
        assert_eq!(v, vec![Violation::DiscreteLoop { subsystems: vec![0, 1] }]);
        let (models, ic) = fsm_pair(DMatrix::from_row_slice(2, 3, &[0, 0, 1, 1, 0, 0]), 1);
        assert!(validate_interconnection(&ic, &models).is_empty());
        assert_eq!(ic.discrete_order(&models).unwrap(), vec![0, 1]);
    }

    #[test]
    fn continuous_resolution() {
        let (_, ic) = ring();
        let (w, z) = ic.continuous(&DVector::from_vec(vec![2.0, 4.0]), &DVector::zeros(0));
        assert_eq!(w.as_slice(), &[2.0, 1.0]);
        assert_eq!(z.len(), 0);
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let (models, ic) = fsm_pair(DMatrix::from_row_slice(2, 3, &[0, 0, 1, 1, 0, 0]), 1);
        let mut models = models;
        let a = DMatrix::from_element(1, 1, -std::f64::consts::PI / 3.0);
        let mut modes = models[0].modes().clone();
        modes.insert(1, ModeDynamics::new(a, DMatrix::zeros(1, 0), DMatrix::zeros(0, 1)).unwrap());
        models[0] = SubsystemModel::new(0, modes, Dfsm::three_state_example()).unwrap();
        let sys = HybridSystem::new(models, ic).unwrap();
        let text = sys.to_toml().unwrap();
        let back = HybridSystem::from_toml(&text).unwrap();
        assert_eq!(back, sys);

        let (models, ic) = ring();
        let sys = HybridSystem::new(models, ic).unwrap();
        assert_eq!(HybridSystem::from_toml(&sys.to_toml().unwrap()).unwrap(), sys);
    }

    #[test]
    fn modes_must_match_outputs() {
        let mode = ModeDynamics::new(-DMatrix::identity(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let modes: BTreeMap<i64, ModeDynamics> = [(0, mode)].into_iter().collect();
        assert!(SubsystemModel::new(0, modes, Dfsm::three_state_example()).is_err());
    }
}
