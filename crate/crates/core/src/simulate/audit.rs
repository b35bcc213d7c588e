use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, HybridTrajectory, Inputs, Sample, SimConfig};
use crate::certificates::{CertificateSet, StorageCertificate, SupplyRate};
use crate::model::{Interconnection, SubsystemModel};
use crate::{Error, Result};

/// One audited inequality `value ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Outcome of the trajectory audits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<Check>,
    /// Largest increase of the Lyapunov function between grid points.
    pub max_lyapunov_increase: Option<f64>,
    /// Worst running dissipation slack per subsystem.
    pub local_slack: Vec<f64>,
    /// Worst running slack of the summed storage against the global supply.
    pub global_slack: Option<f64>,
    pub empirical_gain: Option<f64>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.checks.extend(other.checks);
        self.local_slack.extend(other.local_slack);
        self.max_lyapunov_increase = match (self.max_lyapunov_increase, other.max_lyapunov_increase) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.global_slack = match (self.global_slack, other.global_slack) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.empirical_gain = self.empirical_gain.or(other.empirical_gain);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<6} {:<40} value {:>12.4e}  tolerance {:>10.3e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

fn storage_at(st: &StorageCertificate, s: &Sample, i: usize) -> f64 {
    st.value(s.q[i], s.x[i].as_slice())
}

fn as_f64(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Running dissipation audit of one storage/supply pair:
/// `V(t) − V(0) − ∫₀ᵗ W_c − Σ W_d` at every grid point, trapezoid quadrature.
/// Returns the worst slack and the scale used for the tolerance.
fn running_slack(
    traj: &HybridTrajectory,
    storage: impl Fn(&Sample) -> f64,
    flow: impl Fn(&Sample) -> f64,
    jump: impl Fn(&Sample) -> f64,
) -> (f64, f64) {
    let v0 = storage(&traj.samples[0]);
    let mut integral = 0.0;
    let mut magnitude = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut jumps = traj.jumps.iter().peekable();
    for j in 0..traj.samples.len() - 1 {
        let a = flow(&traj.samples[j]);
        let b = flow(traj.left_limit(j + 1));
        integral += 0.5 * traj.dt * (a + b);
        magnitude += 0.5 * traj.dt * (a.abs() + b.abs());
        if let Some(jp) = jumps.next_if(|jp| jp.step == j + 1) {
            let wd = jump(&jp.before);
            integral += wd;
            magnitude += wd.abs();
        }
        let slack = storage(&traj.samples[j + 1]) - v0 - integral;
        worst = worst.max(slack);
    }
    (worst, 1.0 + v0.abs() + magnitude)
}

/// Checks every local storage against its supply rates and the summed
/// storage against the global supply rates along `traj`. The tolerance of
/// each check is `rel_tol · (1 + |V(0)| + ∫|W_c| + Σ|W_d|)`.
pub fn audit_dissipation(
    models: &[SubsystemModel],
    ic: &Interconnection,
    traj: &HybridTrajectory,
    cert: &CertificateSet,
    rel_tol: f64,
) -> Result<AuditReport> {
    if cert.subsystems.len() != models.len() || traj.samples[0].x.len() != models.len() {
        return Err(Error::Dimension("certificate, trajectory and models disagree".into()));
    }
    let d = ic.dims;
    if cert.global_s.as_ref().is_some_and(|s| s.matrix.dim() != d.n_d + d.n_z)
        || cert.global_r.as_ref().is_some_and(|r| r.matrix.dim() != d.n_mu + d.n_zeta)
    {
        return Err(Error::Dimension("global supply rates do not match the exogenous channels".into()));
    }
    let mut report = AuditReport::default();
    if let Some(t) = traj.diverged {
        report.checks.push(Check::new(format!("trajectory finite (diverged at t = {t})"), 1.0, 0.0));
        return Ok(report);
    }
    for (i, c) in cert.subsystems.iter().enumerate() {
        let (slack, scale) = running_slack(
            traj,
            |s| storage_at(&c.storage, s, i),
            |s| c.s.eval(traj.w_of(s, i).as_slice(), traj.y_of(s, i).as_slice()),
            |s| c.r.eval(&[s.u[i] as f64], &[s.p[i] as f64]),
        );
        report.local_slack.push(slack);
        report.checks.push(Check::new(format!("local dissipation sub{i}"), slack, rel_tol * scale));
    }
    let eval_opt = |rate: &Option<SupplyRate>, a: &[f64], b: &[f64]| rate.as_ref().map_or(0.0, |r| r.eval(a, b));
    let (slack, scale) = running_slack(
        traj,
        |s| cert.subsystems.iter().enumerate().map(|(i, c)| storage_at(&c.storage, s, i)).sum(),
        |s| eval_opt(&cert.global_s, s.d.as_slice(), s.z.as_slice()),
        |s| eval_opt(&cert.global_r, &as_f64(&s.mu), &as_f64(&s.zeta)),
    );
    report.global_slack = Some(slack);
    report.checks.push(Check::new("global dissipation (summed storage)", slack, rel_tol * scale));
    Ok(report)
}

/// Runs [`audit_dissipation`] on `cfg.trials` random trajectories: random
/// initial states with entries in `[−x0_scale, x0_scale]`, random initial
/// DFSM states, multisine `d` and random `μ`. Each check keeps its worst
/// trial (largest `value − tolerance`).
pub fn audit_dissipation_trials(
    models: &[SubsystemModel],
    ic: &Interconnection,
    cert: &CertificateSet,
    cfg: &GainTrialConfig,
    x0_scale: f64,
    rel_tol: f64,
) -> Result<AuditReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("at least one trial is needed".into()));
    }
    let sim = SimConfig::new(cfg.dt, cfg.horizon, cfg.jump_every);
    let n_jumps = sim.steps() / cfg.jump_every + 1;
    let reports = (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
            let x0: Vec<DVector<f64>> = models
                .iter()
                .map(|m| DVector::from_fn(m.n(), |_, _| rng.random_range(-x0_scale..=x0_scale)))
                .collect();
            let q0: Vec<i64> = models
                .iter()
                .map(|m| m.dfsm().states()[rng.random_range(0..m.dfsm().states().len())])
                .collect();
            let d = Multisine::random(&mut rng, ic.dims.n_d, cfg.components, cfg.bandwidth);
            let mu = random_mu(&mut rng, ic, n_jumps);
            let inputs = Inputs::new(|t| d.eval(t), |j| mu[j.min(mu.len() - 1)].clone());
            let traj = simulate(models, ic, &inputs, &x0, &q0, &sim)?;
            audit_dissipation(models, ic, &traj, cert, rel_tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = AuditReport::default();
    for r in reports {
        for c in r.checks {
            match out.checks.iter_mut().find(|o| o.name == c.name) {
                Some(o) if c.value - c.tolerance > o.value - o.tolerance => *o = c,
                Some(_) => {}
                None => out.checks.push(c),
            }
        }
        if out.local_slack.is_empty() {
            out.local_slack = r.local_slack;
        } else {
            for (o, v) in out.local_slack.iter_mut().zip(r.local_slack) {
                *o = o.max(v);
            }
        }
        out.global_slack = match (out.global_slack, r.global_slack) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
    Ok(out)
}

fn random_mu(rng: &mut impl Rng, ic: &Interconnection, n_jumps: usize) -> Vec<Vec<i64>> {
    (0..n_jumps)
        .map(|_| {
            (0..ic.dims.n_mu)
                .map(|_| ic.mu_alphabet[rng.random_range(0..ic.mu_alphabet.len())])
                .collect()
        })
        .collect()
}

/// Lyapunov audit: `V` must not increase between grid points by more than
/// `rel_tol · V(0)`, and `‖x(T)‖ ≤ decay · ‖x(0)‖`.
pub fn audit_stability(traj: &HybridTrajectory, storage: &[StorageCertificate], rel_tol: f64, decay: f64) -> AuditReport {
    let mut report = AuditReport::default();
    if let Some(t) = traj.diverged {
        report.checks.push(Check::new(format!("trajectory finite (diverged at t = {t})"), 1.0, 0.0));
        return report;
    }
    let v = |s: &Sample| -> f64 { storage.iter().enumerate().map(|(i, st)| storage_at(st, s, i)).sum() };
    let v0 = v(&traj.samples[0]);
    let inc = traj
        .samples
        .windows(2)
        .map(|w| v(&w[1]) - v(&w[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    report.max_lyapunov_increase = Some(inc);
    report.checks.push(Check::new("lyapunov non-increasing", inc, rel_tol * v0.abs()));
    let norm = |s: &Sample| s.x.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let ratio = norm(traj.last()) / norm(&traj.samples[0]).max(f64::MIN_POSITIVE);
    report.checks.push(Check::new("state decay |x(T)|/|x(0)|", ratio, decay));
    report
}

/// Sum of sinusoids per channel with frequencies below `bandwidth`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multisine {
    /// `(amplitude, frequency, phase)` per component, per channel.
    pub channels: Vec<Vec<(f64, f64, f64)>>,
}

impl Multisine {
    pub fn random(rng: &mut impl Rng, channels: usize, components: usize, bandwidth: f64) -> Self {
        Self {
            channels: (0..channels)
                .map(|_| {
                    (0..components)
                        .map(|_| {
                            (
                                rng.random_range(-1.0..1.0),
                                rng.random_range(0.0..bandwidth),
                                rng.random_range(0.0..std::f64::consts::TAU),
                            )
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels
                .iter()
                .map(|c| c.iter().map(|&(a, w, ph)| a * (w * t + ph).sin()).sum::<f64>()),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainTrialConfig {
    pub trials: usize,
    pub dt: f64,
    pub horizon: f64,
    pub jump_every: usize,
    pub bandwidth: f64,
    pub components: usize,
    pub seed: u64,
    /// Accepted excess of the empirical ratio over `η`.
    pub allowance: f64,
}

impl Default for GainTrialConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            dt: 1e-3,
            horizon: 10.0,
            jump_every: 1,
            bandwidth: 5.0,
            components: 8,
            seed: 0,
            allowance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub eta: f64,
    /// `‖z‖/‖d‖` of every trial that stayed finite.
    pub ratios: Vec<f64>,
    pub diverged: usize,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Drives the interconnection from rest with random band-limited `d` and
/// random `μ` and compares `‖z‖_{L2}/‖d‖_{L2}` with `η`.
pub fn empirical_gain(
    models: &[SubsystemModel],
    ic: &Interconnection,
    eta: f64,
    cfg: &GainTrialConfig,
) -> Result<GainReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("at least one trial is needed".into()));
    }
    let sim = SimConfig::new(cfg.dt, cfg.horizon, cfg.jump_every);
    let n_jumps = sim.steps() / cfg.jump_every + 1;
    let x0: Vec<DVector<f64>> = models.iter().map(|m| DVector::zeros(m.n())).collect();
    let q0: Vec<i64> = models.iter().map(|m| m.dfsm().initial()).collect();
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|k| -> Result<Option<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
            let d = Multisine::random(&mut rng, ic.dims.n_d, cfg.components, cfg.bandwidth);
            let mu = random_mu(&mut rng, ic, n_jumps);
            let inputs = Inputs::new(|t| d.eval(t), |j| mu[j.min(mu.len() - 1)].clone());
            let traj = simulate(models, ic, &inputs, &x0, &q0, &sim)?;
            if traj.diverged.is_some() {
                return Ok(None);
            }
            let (ez, ed) = traj.io_energy();
            Ok(Some(if ed > 0.0 { (ez / ed).sqrt() } else { 0.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let diverged = outcomes.len() - ratios.len();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(GainReport {
        eta,
        passed: diverged == 0 && max_ratio <= eta * (1.0 + cfg.allowance),
        ratios,
        diverged,
        max_ratio,
    })
}
