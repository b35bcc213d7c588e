use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{Dfsm, ExoDims, HybridSystem, Interconnection, ModeDynamics, SubsystemModel};
use crate::{Error, Result};

/// Parameters of a random interconnected benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_subsystems: usize,
    /// Continuous states per subsystem.
    pub n_states: usize,
    /// Continuous inputs and outputs per subsystem (`n_w = n_y`).
    pub io: usize,
    /// Number of DFSM outputs, i.e. flow modes, per subsystem.
    pub modes: usize,
    /// Upstream subsystems feeding each subsystem's continuous input.
    pub neighbors: usize,
    /// Largest real part of every `A_p` after normalisation.
    pub eig_norm: f64,
    /// Spectral norm of each subsystem-to-subsystem coupling block; 1 matches
    /// the unit-norm columns of `B` and `C`.
    pub coupling: f64,
    /// Place `d` and `z` at random subsystems instead of the first and last.
    pub random_io: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_subsystems: 6,
            n_states: 10,
            io: 2,
            modes: 3,
            neighbors: 3,
            eig_norm: -2.0,
            coupling: 1.0,
            random_io: false,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subsystems == 0 || self.n_states == 0 || self.io == 0 || self.modes == 0 {
            return Err(Error::InvalidInput("benchmark sizes must be positive".into()));
        }
        if self.neighbors >= self.n_subsystems.max(1) && self.neighbors > 0 {
            return Err(Error::InvalidInput(format!(
                "neighbors ({}) must be below the subsystem count ({})",
                self.neighbors, self.n_subsystems
            )));
        }
        if !self.eig_norm.is_finite() || !(self.coupling >= 0.0) {
            return Err(Error::InvalidInput("eig_norm must be finite and coupling nonnegative".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    m
}

/// Largest real part of the eigenvalues of a real square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Shifts `a` so that its spectral abscissa equals `target`.
fn normalise(mut a: DMatrix<f64>, target: f64) -> DMatrix<f64> {
    // one correction pass absorbs the rounding of the first shift
    for _ in 0..2 {
        let shift = spectral_abscissa(&a) - target;
        for i in 0..a.nrows() {
            a[(i, i)] -= shift;
        }
    }
    a
}

/// Machine with `k` states and symbols `0..k`; input 1 advances the state
/// cyclically (so the machine is strongly connected), the rest is random.
fn random_machine(rng: &mut ChaCha8Rng, k: usize) -> Dfsm {
    let syms: Vec<i64> = (0..k as i64).collect();
    let next = (0..k)
        .map(|q| {
            (0..k)
                .map(|u| if u == 1 { ((q + 1) % k) as i64 } else { rng.random_range(0..k) as i64 })
                .collect()
        })
        .collect();
    let output = (0..k).map(|_| (0..k).map(|_| rng.random_range(0..k) as i64).collect()).collect();
    Dfsm::new(syms.clone(), syms.clone(), syms, next, output, 0).expect("random machine is well formed")
}

/// Random benchmark instance, deterministic in `cfg.seed`.
///
/// Each mode's `A` is standard normal shifted to spectral abscissa
/// `eig_norm`; `B` and `C` are standard normal with unit-norm columns.
/// Subsystem `i` receives `coupling · G y_j` from the `neighbors` subsystems
/// `j = i−1, …, i−neighbors` (cyclically), with `G` a random matrix of unit
/// spectral norm. `d` enters the first subsystem and `z` reads the last.
/// Discrete signals form a chain `u₁ = μ`, `u_i = p_{i−1}`, `ζ = p_N`.
pub fn generate(cfg: &BenchConfig) -> Result<HybridSystem> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n_sub, n, io) = (cfg.n_subsystems, cfg.n_states, cfg.io);

    let mut models = Vec::with_capacity(n_sub);
    for i in 0..n_sub {
        let dfsm = if cfg.modes == 3 {
            Dfsm::three_state_example()
        } else {
            random_machine(&mut rng, cfg.modes)
        };
        let mut modes = BTreeMap::new();
        for &p in dfsm.outputs() {
            let a = normalise(gaussian(&mut rng, n, n), cfg.eig_norm);
            let b = unit_columns(gaussian(&mut rng, n, io));
            let c = unit_columns(gaussian(&mut rng, io, n));
            modes.insert(p, ModeDynamics::new(a, b, c)?);
        }
        models.push(SubsystemModel::new(i, modes, dfsm)?);
    }

    let (d_at, z_at) = if cfg.random_io {
        let mut idx: Vec<usize> = (0..n_sub).collect();
        idx.shuffle(&mut rng);
        (idx[0], idx[n_sub.saturating_sub(1).min(1)])
    } else {
        (0, n_sub - 1)
    };

    let dims = ExoDims {
        n_d: io,
        n_z: io,
        n_mu: 1,
        n_zeta: 1,
    };
    let (n_w, n_y) = (n_sub * io, n_sub * io);
    let mut m_c = DMatrix::zeros(n_w + dims.n_z, n_y + dims.n_d);
    for i in 0..n_sub {
        for k in 1..=cfg.neighbors {
            let j = (i + n_sub - k) % n_sub;
            let g = gaussian(&mut rng, io, io);
            let norm = g.singular_values().max();
            let g = g * (cfg.coupling / norm);
            m_c.view_mut((i * io, j * io), (io, io)).copy_from(&g);
        }
    }
    for k in 0..io {
        m_c[(d_at * io + k, n_y + k)] += 1.0;
        m_c[(n_w + k, z_at * io + k)] = 1.0;
    }

    // chain: u_0 = μ, u_i = p_{i−1}, ζ = p_{N−1}
    let mut m_d = DMatrix::zeros(n_sub + 1, n_sub + 1);
    m_d[(0, n_sub)] = 1;
    for i in 1..n_sub {
        m_d[(i, i - 1)] = 1;
    }
    m_d[(n_sub, n_sub - 1)] = 1;
    let mu_alphabet = models[0].dfsm().inputs().to_vec();
    let ic = Interconnection::new(dims, m_c, m_d, mu_alphabet)?;
    HybridSystem::new(models, ic)
}
