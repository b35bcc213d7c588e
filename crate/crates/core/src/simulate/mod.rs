//! Hybrid trajectories of an interconnection and empirical audits of
//! certificates along them.
//!
//! Flows are integrated with fixed-step RK4. Jumps fire every `τ`: all
//! machines step synchronously on the inputs they currently see, then the
//! new outputs and inputs are resolved through the discrete interconnection.

mod audit;

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::model::{Interconnection, SubsystemModel};
use crate::{Error, Result};

pub use audit::{
    audit_dissipation, audit_dissipation_trials, audit_stability, empirical_gain, AuditReport, Check, GainReport,
    GainTrialConfig, Multisine,
};

/// Exogenous inputs: `d` as a function of time, `μ` per jump index
/// (index 0 is the initial value).
pub struct Inputs<'a> {
    pub d: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync + 'a>,
    pub mu: Box<dyn Fn(usize) -> Vec<i64> + Send + Sync + 'a>,
}

impl<'a> Inputs<'a> {
    pub fn new(
        d: impl Fn(f64) -> DVector<f64> + Send + Sync + 'a,
        mu: impl Fn(usize) -> Vec<i64> + Send + Sync + 'a,
    ) -> Self {
        Self {
            d: Box::new(d),
            mu: Box::new(mu),
        }
    }

    /// `d ≡ 0` and `μ` held at the first alphabet symbol.
    pub fn zero(ic: &Interconnection) -> Self {
        let n_d = ic.dims.n_d;
        let mu = vec![ic.mu_alphabet.first().copied().unwrap_or(0); ic.dims.n_mu];
        Self::new(move |_| DVector::zeros(n_d), move |_| mu.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Jumps every `jump_every · dt`.
    pub jump_every: usize,
    /// State norm treated as divergence.
    pub blowup: f64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, jump_every: usize) -> Self {
        Self {
            dt,
            horizon,
            jump_every,
            blowup: 1e12,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt.is_finite() && self.horizon.is_finite()) {
            return Err(Error::InvalidInput("time step and horizon must be positive".into()));
        }
        if self.jump_every == 0 {
            return Err(Error::InvalidInput("jump period must be at least one step".into()));
        }
        Ok(())
    }
}

/// `10⁻³ / max |λ(A_p)|` over all modes.
pub fn default_dt(models: &[SubsystemModel]) -> f64 {
    let rho = models
        .iter()
        .flat_map(|m| m.modes().values())
        .map(|md| md.a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if rho > 0.0 {
        1e-3 / rho
    } else {
        1e-3
    }
}

/// Everything observable at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<DVector<f64>>,
    pub q: Vec<i64>,
    pub p: Vec<i64>,
    pub u: Vec<i64>,
    pub mu: Vec<i64>,
    pub zeta: Vec<i64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub z: DVector<f64>,
}

/// A jump at grid index `step`; `before` is the instant just before it.
#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub step: usize,
    pub before: Sample,
}

#[derive(Clone, Debug)]
pub struct HybridTrajectory {
    pub dt: f64,
    pub jump_every: usize,
    /// Post-jump values at every grid point.
    pub samples: Vec<Sample>,
    pub jumps: Vec<Jump>,
    /// Time at which the state blew up, if it did.
    pub diverged: Option<f64>,
    /// Offsets of each subsystem's block in `w` and `y`.
    pub w_offsets: Vec<usize>,
    pub y_offsets: Vec<usize>,
}

impl HybridTrajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories have an initial sample")
    }

    pub fn w_of<'s>(&self, s: &'s Sample, i: usize) -> nalgebra::DVectorView<'s, f64> {
        s.w.rows(self.w_offsets[i], self.w_offsets[i + 1] - self.w_offsets[i])
    }

    pub fn y_of<'s>(&self, s: &'s Sample, i: usize) -> nalgebra::DVectorView<'s, f64> {
        s.y.rows(self.y_offsets[i], self.y_offsets[i + 1] - self.y_offsets[i])
    }

    /// Pre-jump sample at grid index `j` when a jump happened there,
    /// otherwise the grid sample.
    pub fn left_limit(&self, j: usize) -> &Sample {
        match self.jumps.binary_search_by_key(&j, |jp| jp.step) {
            Ok(k) => &self.jumps[k].before,
            Err(_) => &self.samples[j],
        }
    }

    /// `(z, d)` energies by the trapezoid rule.
    pub fn io_energy(&self) -> (f64, f64) {
        let mut ez = 0.0;
        let mut ed = 0.0;
        for j in 0..self.samples.len().saturating_sub(1) {
            let a = &self.samples[j];
            let b = self.left_limit(j + 1);
            ez += 0.5 * self.dt * (a.z.norm_squared() + b.z.norm_squared());
            ed += 0.5 * self.dt * (a.d.norm_squared() + b.d.norm_squared());
        }
        (ez, ed)
    }

    /// Columns: `t`, states `x{i}_{k}`, machine states `q{i}`, modes `p{i}`,
    /// then `w`, `y`, `d`, `z`, `u`, `mu`, `zeta` entries.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let Some(first) = self.samples.first() else {
            return Ok(());
        };
        let mut header = vec!["t".to_string()];
        for (i, x) in first.x.iter().enumerate() {
            header.extend((0..x.len()).map(|k| format!("x{i}_{k}")));
        }
        header.extend((0..first.q.len()).map(|i| format!("q{i}")));
        header.extend((0..first.p.len()).map(|i| format!("p{i}")));
        for (name, len) in [("w", first.w.len()), ("y", first.y.len()), ("d", first.d.len()), ("z", first.z.len())] {
            header.extend((0..len).map(|k| format!("{name}{k}")));
        }
        for (name, len) in [("u", first.u.len()), ("mu", first.mu.len()), ("zeta", first.zeta.len())] {
            header.extend((0..len).map(|k| format!("{name}{k}")));
        }
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            row.extend(s.x.iter().flat_map(|x| x.iter().map(f64::to_string)));
            row.extend(s.q.iter().chain(&s.p).map(i64::to_string));
            for v in [&s.w, &s.y, &s.d, &s.z] {
                row.extend(v.iter().map(f64::to_string));
            }
            row.extend(s.u.iter().chain(&s.mu).chain(&s.zeta).map(i64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

struct Network<'a> {
    models: &'a [SubsystemModel],
    ic: &'a Interconnection,
    order: Vec<usize>,
    w_off: Vec<usize>,
    y_off: Vec<usize>,
}

impl Network<'_> {
    /// Continuous signals `(w, y, z)` for states `x` in modes `p`.
    fn signals(&self, x: &[DVector<f64>], p: &[i64], d: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut y = DVector::zeros(*self.y_off.last().unwrap());
        for (i, m) in self.models.iter().enumerate() {
            let c = &m.mode(p[i]).expect("resolved modes exist").c;
            y.rows_mut(self.y_off[i], m.n_y()).copy_from(&(c * &x[i]));
        }
        let (w, z) = self.ic.continuous(&y, d);
        (w, y, z)
    }

    fn derivative(&self, x: &[DVector<f64>], p: &[i64], d: &DVector<f64>) -> Vec<DVector<f64>> {
        let (w, _, _) = self.signals(x, p, d);
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let md = m.mode(p[i]).expect("resolved modes exist");
                &md.a * &x[i] + &md.b * w.rows(self.w_off[i], m.n_w())
            })
            .collect()
    }

    /// Outputs `p`, inputs `u` and `ζ` for machine states `q` and `μ`.
    /// `p_prev` seeds outputs not yet resolved.
    fn resolve(&self, q: &[i64], mu: &[i64], p_prev: &[i64]) -> Result<(Vec<i64>, Vec<i64>, Vec<i64>)> {
        let n = self.models.len();
        let mut p = p_prev.to_vec();
        for &i in &self.order {
            let u = self.ic.discrete_row(i, &p, mu);
            p[i] = self.models[i].dfsm().step(q[i], u)?.1;
        }
        let u: Vec<i64> = (0..n).map(|i| self.ic.discrete_row(i, &p, mu)).collect();
        for i in 0..n {
            if self.models[i].dfsm().step(q[i], u[i])?.1 != p[i] {
                return Err(Error::InvalidInput(format!(
                    "discrete signals of subsystem {i} do not settle in one pass"
                )));
            }
        }
        let zeta = (0..self.ic.dims.n_zeta).map(|r| self.ic.discrete_row(n + r, &p, mu)).collect();
        Ok((p, u, zeta))
    }
}

fn rk4(net: &Network, x: &[DVector<f64>], p: &[i64], inputs: &Inputs, t: f64, h: f64) -> Vec<DVector<f64>> {
    let axpy = |x: &[DVector<f64>], k: &[DVector<f64>], a: f64| -> Vec<DVector<f64>> {
        x.iter().zip(k).map(|(xi, ki)| xi + ki * a).collect()
    };
    let d0 = (inputs.d)(t);
    let dm = (inputs.d)(t + 0.5 * h);
    let d1 = (inputs.d)(t + h);
    let k1 = net.derivative(x, p, &d0);
    let k2 = net.derivative(&axpy(x, &k1, 0.5 * h), p, &dm);
    let k3 = net.derivative(&axpy(x, &k2, 0.5 * h), p, &dm);
    let k4 = net.derivative(&axpy(x, &k3, h), p, &d1);
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0))
        .collect()
}

/// Simulates the interconnection from `(x0, q0)`.
pub fn simulate(
    models: &[SubsystemModel],
    ic: &Interconnection,
    inputs: &Inputs,
    x0: &[DVector<f64>],
    q0: &[i64],
    cfg: &SimConfig,
) -> Result<HybridTrajectory> {
    cfg.validate()?;
    let n = models.len();
    if x0.len() != n || q0.len() != n {
        return Err(Error::Dimension("initial condition does not cover every subsystem".into()));
    }
    for (i, m) in models.iter().enumerate() {
        if x0[i].len() != m.n() {
            return Err(Error::Dimension(format!("x0 of subsystem {i} has length {}", x0[i].len())));
        }
        m.dfsm().state_index(q0[i])?;
    }
    let net = Network {
        models,
        ic,
        order: ic.discrete_order(models)?,
        w_off: offsets(models.iter().map(SubsystemModel::n_w)),
        y_off: offsets(models.iter().map(SubsystemModel::n_y)),
    };
    let check_mu = |mu: Vec<i64>| -> Result<Vec<i64>> {
        if mu.len() != ic.dims.n_mu {
            return Err(Error::Dimension(format!("mu has length {}, expected {}", mu.len(), ic.dims.n_mu)));
        }
        if let Some(&bad) = mu.iter().find(|v| !ic.mu_alphabet.contains(v)) {
            return Err(Error::Alphabet {
                alphabet: "mu",
                value: bad,
            });
        }
        Ok(mu)
    };
    let sample = |t: f64, x: Vec<DVector<f64>>, q: Vec<i64>, p: Vec<i64>, u: Vec<i64>, mu: Vec<i64>, zeta: Vec<i64>| {
        let d = (inputs.d)(t);
        let (w, y, z) = net.signals(&x, &p, &d);
        Sample {
            t,
            x,
            q,
            p,
            u,
            mu,
            zeta,
            w,
            y,
            d,
            z,
        }
    };

    let mut jump_index = 0;
    let mu = check_mu((inputs.mu)(0))?;
    let p_seed: Vec<i64> = models.iter().map(|m| m.dfsm().outputs()[0]).collect();
    let (p, u, zeta) = net.resolve(q0, &mu, &p_seed)?;
    if (inputs.d)(0.0).len() != ic.dims.n_d {
        return Err(Error::Dimension("d has the wrong length".into()));
    }
    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut jumps = Vec::new();
    let mut diverged = None;
    samples.push(sample(0.0, x0.to_vec(), q0.to_vec(), p, u, mu, zeta));

    for j in 1..=steps {
        let prev = samples.last().unwrap();
        let t = j as f64 * cfg.dt;
        let x = rk4(&net, &prev.x, &prev.p, inputs, prev.t, cfg.dt);
        let norm = x.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm <= cfg.blowup) {
            diverged = Some(t);
            break;
        }
        let (q, p, u, mu, zeta) = (prev.q.clone(), prev.p.clone(), prev.u.clone(), prev.mu.clone(), prev.zeta.clone());
        if j % cfg.jump_every == 0 {
            let before = sample(t, x.clone(), q.clone(), p.clone(), u.clone(), mu, zeta);
            let q_next = (0..n)
                .map(|i| models[i].dfsm().step(q[i], u[i]).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            jump_index += 1;
            let mu_next = check_mu((inputs.mu)(jump_index))?;
            let (p_next, u_next, zeta_next) = net.resolve(&q_next, &mu_next, &p)?;
            jumps.push(Jump { step: j, before });
            samples.push(sample(t, x, q_next, p_next, u_next, mu_next, zeta_next));
        } else {
            samples.push(sample(t, x, q, p, u, mu, zeta));
        }
    }
    Ok(HybridTrajectory {
        dt: cfg.dt,
        jump_every: cfg.jump_every,
        samples,
        jumps,
        diverged,
        w_offsets: net.w_off,
        y_offsets: net.y_off,
    })
}

/// A single subsystem driven only through its machine input, with `w ≡ 0`.
pub fn isolated(model: &SubsystemModel) -> Result<(Vec<SubsystemModel>, Interconnection)> {
    let m = model.clone().with_id(0);
    let n_w = m.n_w();
    let n_y = m.n_y();
    let dims = crate::model::ExoDims {
        n_d: 0,
        n_z: 0,
        n_mu: 1,
        n_zeta: 0,
    };
    let m_c = nalgebra::DMatrix::zeros(n_w, n_y);
    let m_d = nalgebra::DMatrix::from_row_slice(1, 2, &[0, 1]);
    let ic = Interconnection::new(dims, m_c, m_d, m.dfsm().inputs().to_vec())?;
    Ok((vec![m], ic))
}

#[cfg(test)]
mod tests;
