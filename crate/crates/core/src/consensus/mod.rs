//! Consensus ADMM over the supply-rate unknowns.
//!
//! Each subsystem owns a local SDP over its storage and its supply rates
//! `(S_i, R_i)`; a single global SDP holds copies of the supply rates, the
//! exogenous supplies and the gain. The two sides are reconciled by scaled
//! ADMM, optionally with Nesterov momentum and fixed-period restarts.

mod layout;
mod trace;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    add_bounds, add_constraints, audit_certificate, global_supplies, lmi_global_continuous, lmi_global_discrete,
    lmi_local_continuous, lmi_local_discrete, storage_positivity, CertOptions, CertificateSet, GainObjective,
    GainTarget, StorageCertificate, StorageExprs, StorageVars, SubsystemCertificate, SupplyKind, SupplyRate,
    SupplyVar,
};
use crate::model::{validate_interconnection, Interconnection, SubsystemModel};
use crate::symla::{solve_sdp, AffineMatrix, ScalarVar, SdpProblem, SdpStatus, SymMatrix};
use crate::{Error, Result};

use layout::{svec_identity, Layout, Segment};
pub use trace::{ResidualTrace, TraceRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Admm,
    FastAdmm,
}

/// Form of the smoothing term `D_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingNorm {
    /// `‖S_i‖²_F + ‖R_i‖²_F + ‖V_i‖²_F`, strongly convex.
    #[default]
    Squared,
    /// `‖S_i‖_F + ‖R_i‖_F + ‖V_i‖_F`.
    Frobenius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub method: Method,
    /// Penalty `ρ`.
    pub rho: f64,
    /// Smoothing weight `ℓ`.
    pub smoothing: f64,
    pub smoothing_norm: SmoothingNorm,
    /// Reset the momentum every `K` iterations.
    pub restart: Option<usize>,
    pub max_iter: usize,
    /// Stop once both residual norms are below this.
    pub tol: f64,
    /// Tolerance of every inner SDP solve and of the final audit.
    pub solver_tol: f64,
    /// Margin of the strict coupling inequalities while iterating. The final
    /// certificate uses `cert.margin`; the difference lets local supply rates
    /// that are only close to the global copies still couple.
    pub coupling_margin: f64,
    /// Also carry the storage matrices in the consensus vectors.
    pub share_storage: bool,
    /// Start the scaled duals at the identity instead of zero.
    pub identity_dual_init: bool,
    pub objective: GainObjective,
    pub cert: CertOptions,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            method: Method::Admm,
            rho: 1.0,
            smoothing: 1.0,
            smoothing_norm: SmoothingNorm::Squared,
            restart: None,
            max_iter: 200,
            tol: 1e-4,
            solver_tol: 1e-8,
            coupling_margin: 1e-3,
            share_storage: false,
            identity_dual_init: false,
            objective: GainObjective::minimize(GainTarget::ContinuousL2),
            cert: CertOptions::default(),
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing must be nonnegative, got {}", self.smoothing)));
        }
        if self.method == Method::FastAdmm && self.smoothing < self.rho {
            return Err(Error::InvalidInput(format!(
                "accelerated ADMM needs smoothing >= rho, got {} < {}",
                self.smoothing, self.rho
            )));
        }
        if self.restart == Some(0) {
            return Err(Error::InvalidInput("restart period must be positive".into()));
        }
        if !(self.coupling_margin >= 0.0 && self.coupling_margin.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coupling margin must be nonnegative, got {}",
                self.coupling_margin
            )));
        }
        if !(self.tol > 0.0 && self.solver_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// `α_{k+1} = (1 + √(1 + 4α_k²)) / 2`.
pub fn next_alpha(alpha: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt())
}

/// Iterates of the splitting. All vectors are per subsystem, in the layout
/// `svec(S_i) ⊕ svec(R_i)` (followed by the storage when it is shared).
#[derive(Clone, Debug)]
pub struct ConsensusState {
    /// Completed iterations.
    pub k: usize,
    pub b: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub v_prev: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub s_prev: Vec<DVector<f64>>,
    /// Primal residual `b^k − v^k` of the last iteration.
    pub r: Vec<DVector<f64>>,
    /// Extrapolated points used by the next accelerated step.
    pub v_bar: Vec<DVector<f64>>,
    pub s_bar: Vec<DVector<f64>>,
    /// `α_{k+1}`, the value the next accelerated step starts from.
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub rho: f64,
    pub ell: f64,
    /// Storage returned by the latest local solves.
    pub storage: Vec<Option<StorageCertificate>>,
    pub global_s: Option<SupplyRate>,
    pub global_r: Option<SupplyRate>,
}

impl ConsensusState {
    pub fn primal_residual(&self) -> f64 {
        stacked_norm(&self.r)
    }

    pub fn dual_residual(&self) -> f64 {
        self.rho * stacked_diff_norm(&self.v, &self.v_prev)
    }
}

fn stacked_norm(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn stacked_diff_norm(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

struct LocalProblem {
    base: SdpProblem,
    storage: StorageVars,
    s: SupplyVar,
    r: SupplyVar,
    layout: Layout,
}

/// Result of one local solve.
#[derive(Clone, Debug)]
pub struct LocalOutcome {
    pub b: DVector<f64>,
    pub storage: StorageCertificate,
    pub status: SdpStatus,
}

struct GlobalProblem {
    base: SdpProblem,
    layouts: Vec<Layout>,
    gamma: Option<ScalarVar>,
    s: AffineMatrix,
    r: AffineMatrix,
}

/// Result of one global solve.
#[derive(Clone, Debug)]
pub struct GlobalOutcome {
    pub v: Vec<DVector<f64>>,
    pub gamma: Option<f64>,
    pub global_s: Option<SupplyRate>,
    pub global_r: Option<SupplyRate>,
    pub status: SdpStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusStatus {
    Converged,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct ConsensusResult {
    pub status: ConsensusStatus,
    /// Assembled certificate with its eigenvalue audit.
    pub certificate: CertificateSet,
    /// Whether every audited inequality holds to the solver tolerance.
    pub certified: bool,
    /// Gain of the certificate (after re-solving the global side with the
    /// local supply rates fixed), or of the last iterate when that fails.
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    /// `γ` of the last global update.
    pub iterate_gamma: Option<f64>,
    pub trace: ResidualTrace,
    pub state: ConsensusState,
}

/// Prebuilt local and global subproblems of one interconnection.
pub struct Consensus {
    models: Vec<SubsystemModel>,
    ic: Interconnection,
    cfg: ConsensusConfig,
    locals: Vec<LocalProblem>,
    global: GlobalProblem,
}

impl Consensus {
    pub fn new(models: &[SubsystemModel], ic: &Interconnection, cfg: &ConsensusConfig) -> Result<Self> {
        cfg.validate()?;
        let v = validate_interconnection(ic, models);
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidInput(msgs.join("; ")));
        }
        let locals = models
            .iter()
            .map(|m| build_local(m, cfg))
            .collect::<Result<Vec<_>>>()?;
        let global = build_global(models, ic, cfg, &locals)?;
        Ok(Self {
            models: models.to_vec(),
            ic: ic.clone(),
            cfg: cfg.clone(),
            locals,
            global,
        })
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.cfg
    }

    /// Length of each subsystem's consensus vector.
    pub fn block_lengths(&self) -> Vec<usize> {
        self.locals.iter().map(|l| l.layout.len()).collect()
    }

    /// Starting point: every supply rate and storage matrix at the identity,
    /// duals at zero (or the identity when configured).
    pub fn initial_state(&self) -> ConsensusState {
        let v0: Vec<DVector<f64>> = self.locals.iter().map(|l| identity_point(&l.layout)).collect();
        let s0: Vec<DVector<f64>> = if self.cfg.identity_dual_init {
            v0.clone()
        } else {
            v0.iter().map(|x| DVector::zeros(x.len())).collect()
        };
        let zeros: Vec<DVector<f64>> = v0.iter().map(|x| DVector::zeros(x.len())).collect();
        ConsensusState {
            k: 0,
            b: v0.clone(),
            v: v0.clone(),
            v_prev: v0.clone(),
            s: s0.clone(),
            s_prev: s0.clone(),
            r: zeros,
            v_bar: v0,
            s_bar: s0,
            alpha: 1.0,
            gamma: None,
            rho: self.cfg.rho,
            ell: self.cfg.smoothing,
            storage: vec![None; self.locals.len()],
            global_s: None,
            global_r: None,
        }
    }

    /// `argmin ℓ·D_i + (ρ/2)‖b_i − center‖²` over the local constraints,
    /// where `center = v_i − s_i`.
    pub fn local_update(&self, i: usize, center: &DVector<f64>, rho: f64) -> Result<LocalOutcome> {
        let lp = &self.locals[i];
        if center.len() != lp.layout.len() {
            return Err(Error::Dimension(format!(
                "subsystem {i}: center has length {}, expected {}",
                center.len(),
                lp.layout.len()
            )));
        }
        let mut p = lp.base.clone();
        lp.layout.add_proximal(&mut p, rho, center);
        let sol = solve_sdp(&p, self.cfg.solver_tol)?;
        match sol.status {
            SdpStatus::Optimal | SdpStatus::MaxIter => Ok(LocalOutcome {
                b: lp.layout.extract(&sol.x),
                storage: lp.storage.value(&sol.x),
                status: sol.status,
            }),
            SdpStatus::Infeasible => Err(Error::LocalInfeasible {
                subsystem: i,
                reason: "no storage and supply rates satisfy the local dissipation inequalities".into(),
            }),
            SdpStatus::Unbounded => Err(Error::Numerical(format!("local problem {i} is unbounded"))),
        }
    }

    /// `argmin γ + (ρ/2)‖target − v‖²` over the global coupling inequalities,
    /// where `target = b + s`.
    pub fn global_update(&self, target: &[DVector<f64>], rho: f64) -> Result<GlobalOutcome> {
        let gp = &self.global;
        if target.len() != gp.layouts.len() {
            return Err(Error::Dimension("target does not cover every subsystem".into()));
        }
        let mut p = gp.base.clone();
        for (lay, t) in gp.layouts.iter().zip(target) {
            if t.len() != lay.len() {
                return Err(Error::Dimension("target block has the wrong length".into()));
            }
            lay.add_proximal(&mut p, rho, t);
        }
        let sol = solve_sdp(&p, self.cfg.solver_tol)?;
        match sol.status {
            SdpStatus::Optimal | SdpStatus::MaxIter => {
                let d = self.ic.dims;
                Ok(GlobalOutcome {
                    v: gp.layouts.iter().map(|l| l.extract(&sol.x)).collect(),
                    gamma: gp.gamma.map(|g| g.value(&sol.x)),
                    global_s: sym_supply(SupplyKind::Continuous, d.n_d, gp.s.eval(&sol.x)),
                    global_r: sym_supply(SupplyKind::Discrete, d.n_mu, gp.r.eval(&sol.x)),
                    status: sol.status,
                })
            }
            SdpStatus::Infeasible => Err(Error::GlobalInfeasible(
                "the coupling inequalities admit no supply rates".into(),
            )),
            SdpStatus::Unbounded => Err(Error::Numerical("global problem is unbounded".into())),
        }
    }

    fn local_all(&self, centers: &[DVector<f64>], rho: f64) -> Result<Vec<LocalOutcome>> {
        centers
            .par_iter()
            .enumerate()
            .map(|(i, c)| self.local_update(i, c, rho))
            .collect()
    }

    /// Local solves at `centers`, then the global solve at `b + s_base`;
    /// returns the new `b`, the global outcome and stall notes.
    fn half_steps(
        &self,
        state: &mut ConsensusState,
        centers: Vec<DVector<f64>>,
        s_base: &[DVector<f64>],
        notes: &mut Vec<String>,
    ) -> Result<GlobalOutcome> {
        let locals = self.local_all(&centers, state.rho)?;
        for (i, lo) in locals.iter().enumerate() {
            if lo.status == SdpStatus::MaxIter {
                notes.push(format!("local {i} stalled"));
            }
        }
        state.b = locals.iter().map(|l| l.b.clone()).collect();
        state.storage = locals.into_iter().map(|l| Some(l.storage)).collect();
        let target: Vec<DVector<f64>> = state.b.iter().zip(s_base).map(|(b, s)| b + s).collect();
        let g = self.global_update(&target, state.rho)?;
        if g.status == SdpStatus::MaxIter {
            notes.push("global stalled".into());
        }
        Ok(g)
    }

    /// One scaled ADMM iteration.
    pub fn step_admm(&self, state: &mut ConsensusState, trace: &mut ResidualTrace) -> Result<()> {
        let t0 = Instant::now();
        let mut notes = Vec::new();
        let centers: Vec<DVector<f64>> = state.v.iter().zip(&state.s).map(|(v, s)| v - s).collect();
        let s_base = state.s.clone();
        let g = self.half_steps(state, centers, &s_base, &mut notes)?;
        state.r = state.b.iter().zip(&g.v).map(|(b, v)| b - v).collect();
        state.s_prev = std::mem::take(&mut state.s);
        state.s = state.s_prev.iter().zip(&state.r).map(|(s, r)| s + r).collect();
        state.v_prev = std::mem::replace(&mut state.v, g.v);
        state.v_bar = state.v.clone();
        state.s_bar = state.s.clone();
        self.finish_step(state, g.gamma, g.global_s, g.global_r, t0, notes, trace);
        Ok(())
    }

    /// One accelerated iteration: ADMM from `(v̄, s̄)` followed by momentum.
    pub fn step_fast_admm(&self, state: &mut ConsensusState, trace: &mut ResidualTrace) -> Result<()> {
        let t0 = Instant::now();
        let mut notes = Vec::new();
        let centers: Vec<DVector<f64>> = state.v_bar.iter().zip(&state.s_bar).map(|(v, s)| v - s).collect();
        let s_base = state.s_bar.clone();
        let g = self.half_steps(state, centers, &s_base, &mut notes)?;
        state.r = state.b.iter().zip(&g.v).map(|(b, v)| b - v).collect();
        let s_new: Vec<DVector<f64>> = s_base.iter().zip(&state.r).map(|(s, r)| s + r).collect();
        state.v_prev = std::mem::replace(&mut state.v, g.v);
        state.s_prev = std::mem::replace(&mut state.s, s_new);

        let k = state.k + 1;
        let mut alpha = state.alpha;
        if self.cfg.restart.is_some_and(|period| k.is_multiple_of(period)) {
            alpha = 1.0;
            notes.push("restart".into());
        }
        let next = next_alpha(alpha);
        let c = (alpha - 1.0) / next;
        state.v_bar = extrapolate(&state.v, &state.v_prev, c);
        state.s_bar = extrapolate(&state.s, &state.s_prev, c);
        state.alpha = next;
        self.finish_step(state, g.gamma, g.global_s, g.global_r, t0, notes, trace);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_step(
        &self,
        state: &mut ConsensusState,
        gamma: Option<f64>,
        global_s: Option<SupplyRate>,
        global_r: Option<SupplyRate>,
        t0: Instant,
        notes: Vec<String>,
        trace: &mut ResidualTrace,
    ) {
        state.k += 1;
        state.gamma = gamma;
        state.global_s = global_s;
        state.global_r = global_r;
        trace.push(
            TraceRow {
                iter: state.k,
                primal_residual: state.primal_residual(),
                dual_residual: state.dual_residual(),
                gamma: gamma.unwrap_or(f64::NAN),
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            },
            notes,
        );
    }

    pub fn step(&self, state: &mut ConsensusState, trace: &mut ResidualTrace) -> Result<()> {
        match self.cfg.method {
            Method::Admm => self.step_admm(state, trace),
            Method::FastAdmm => self.step_fast_admm(state, trace),
        }
    }

    /// Iterates until both residuals are below `tol` or `max_iter` is hit,
    /// then assembles and audits a certificate.
    pub fn run(&self) -> Result<ConsensusResult> {
        self.run_iterations(self.cfg.max_iter, true)
    }

    /// Runs `iters` steps; without `stop_at_tol` all of them are taken even
    /// after both residuals fall below `tol` (the status still records it).
    pub fn run_iterations(&self, iters: usize, stop_at_tol: bool) -> Result<ConsensusResult> {
        let mut state = self.initial_state();
        let mut trace = ResidualTrace::default();
        let mut status = ConsensusStatus::MaxIter;
        for _ in 0..iters {
            self.step(&mut state, &mut trace)?;
            if state.primal_residual().max(state.dual_residual()) <= self.cfg.tol {
                status = ConsensusStatus::Converged;
                if stop_at_tol {
                    break;
                }
            }
        }
        self.finish(state, trace, status)
    }

    fn finish(&self, state: ConsensusState, trace: ResidualTrace, status: ConsensusStatus) -> Result<ConsensusResult> {
        if state.k == 0 {
            return Err(Error::InvalidInput("no iterations were run".into()));
        }
        let subsystems: Vec<SubsystemCertificate> = self
            .locals
            .iter()
            .zip(&state.b)
            .zip(&state.storage)
            .map(|((lp, b), st)| SubsystemCertificate {
                storage: st.clone().expect("local solves ran"),
                s: supply_from_block(SupplyKind::Continuous, lp.s, &b.as_slice()[..lp.s.var.len()]),
                r: supply_from_block(
                    SupplyKind::Discrete,
                    lp.r,
                    &b.as_slice()[lp.s.var.len()..lp.s.var.len() + lp.r.var.len()],
                ),
            })
            .collect();
        let polished = self.polish(&subsystems)?;
        let (gamma, global_s, global_r) = match polished {
            Some(p) => p,
            None => (state.gamma, state.global_s.clone(), state.global_r.clone()),
        };
        let gamma = gamma.map(|g| g.max(0.0));
        let mut certificate = CertificateSet {
            target: self.cfg.objective.target,
            gamma,
            eta: gamma.map(f64::sqrt),
            margin: self.cfg.cert.margin,
            global_s,
            global_r,
            subsystems,
            residuals: Vec::new(),
        };
        certificate.residuals = audit_certificate(&self.models, &self.ic, &certificate, self.cfg.cert.full_product)?;
        let certified = certificate.worst_residual() <= AUDIT_SLACK.max(self.cfg.solver_tol);
        Ok(ConsensusResult {
            status,
            certified,
            gamma,
            eta: gamma.map(f64::sqrt),
            iterate_gamma: state.gamma,
            certificate,
            trace,
            state,
        })
    }

    /// Re-solves the global side with the local supply rates fixed, giving a
    /// certificate that satisfies every inequality at once. `None` when the
    /// fixed rates do not couple.
    fn polish(&self, subs: &[SubsystemCertificate]) -> Result<Option<(Option<f64>, Option<SupplyRate>, Option<SupplyRate>)>> {
        let mut p = SdpProblem::new(self.cfg.cert.margin);
        let g = global_supplies(&mut p, &self.ic, &self.cfg.objective)?;
        let s_loc: Vec<AffineMatrix> = subs.iter().map(|c| constant(&c.s)).collect();
        let r_loc: Vec<AffineMatrix> = subs.iter().map(|c| constant(&c.r)).collect();
        let cs = vec![
            lmi_global_continuous(&self.ic, &self.models, &s_loc, &g.s)?,
            lmi_global_discrete(&self.ic, &self.models, &r_loc, &g.r)?,
        ];
        add_constraints(&mut p, cs)?;
        if let Some((_, v)) = g.free.filter(|(_, v)| v.dim() > 0) {
            let beta = p.add_scalar("beta");
            p.add_linear_objective(beta.id(), self.cfg.cert.bound_weight);
            add_bounds(&mut p, beta, &[v])?;
        }
        let sol = solve_sdp(&p, self.cfg.solver_tol)?;
        if sol.status != SdpStatus::Optimal {
            return Ok(None);
        }
        let d = self.ic.dims;
        Ok(Some((
            g.gamma.map(|v| v.value(&sol.x)),
            sym_supply(SupplyKind::Continuous, d.n_d, g.s.eval(&sol.x)),
            sym_supply(SupplyKind::Discrete, d.n_mu, g.r.eval(&sol.x)),
        )))
    }
}

/// Audit slack accepted on top of the solver tolerance.
const AUDIT_SLACK: f64 = 1e-7;

/// Builds the splitting for `models`/`ic` and runs it.
pub fn run(models: &[SubsystemModel], ic: &Interconnection, cfg: &ConsensusConfig) -> Result<ConsensusResult> {
    Consensus::new(models, ic, cfg)?.run()
}

fn extrapolate(x: &[DVector<f64>], x_prev: &[DVector<f64>], c: f64) -> Vec<DVector<f64>> {
    x.iter().zip(x_prev).map(|(a, b)| a + (a - b) * c).collect()
}

fn identity_point(layout: &Layout) -> DVector<f64> {
    let mut out = Vec::with_capacity(layout.len());
    for seg in &layout.segments {
        match seg {
            Segment::Sym(v) => out.extend(svec_identity(v.dim()).iter()),
            Segment::Scalar(_) => out.push(0.0),
        }
    }
    DVector::from_vec(out)
}

fn supply_from_block(kind: SupplyKind, var: SupplyVar, block: &[f64]) -> SupplyRate {
    let m = SymMatrix::from_svec(var.var.dim(), block).expect("block matches the supply dimension");
    SupplyRate::new(kind, var.partition, m).expect("partition fits")
}

fn sym_supply(kind: SupplyKind, partition: usize, m: DMatrix<f64>) -> Option<SupplyRate> {
    (m.nrows() > 0)
        .then(|| SupplyRate::new(kind, partition, SymMatrix::new(m).expect("finite supply")).expect("partition fits"))
}

fn constant(s: &SupplyRate) -> AffineMatrix {
    AffineMatrix::constant(s.matrix.as_matrix().clone())
}

fn build_local(m: &SubsystemModel, cfg: &ConsensusConfig) -> Result<LocalProblem> {
    let mut p = SdpProblem::new(cfg.cert.margin);
    let storage = StorageVars::new(&mut p, m, cfg.cert.storage, true);
    let s = SupplyVar::new(&mut p, m.n_w(), m.n_y(), &format!("S[{}]", m.id()));
    let r = SupplyVar::new(&mut p, 1, 1, &format!("R[{}]", m.id()));
    let ex = StorageExprs::from(&storage);
    let mut cs = storage_positivity(m, &ex);
    cs.extend(lmi_local_continuous(m, &ex, &s.expr(), cfg.cert.full_product)?);
    cs.extend(lmi_local_discrete(m, &ex, &r.expr())?);
    add_constraints(&mut p, cs)?;

    let storage_layout = Layout {
        segments: storage
            .p_unknowns
            .iter()
            .map(|&v| Segment::Sym(v))
            .chain(storage.lambda_unknowns.iter().map(|&v| Segment::Scalar(v)))
            .collect(),
    };
    let mut layout = Layout {
        segments: vec![Segment::Sym(s.var), Segment::Sym(r.var)],
    };
    if cfg.share_storage {
        layout.segments.extend(storage_layout.segments.iter().copied());
    }
    if cfg.smoothing > 0.0 {
        let parts = [
            Layout {
                segments: vec![Segment::Sym(s.var)],
            },
            Layout {
                segments: vec![Segment::Sym(r.var)],
            },
            storage_layout,
        ];
        for (k, part) in parts.iter().enumerate() {
            match cfg.smoothing_norm {
                SmoothingNorm::Squared => part.add_squared_norm(&mut p, cfg.smoothing),
                SmoothingNorm::Frobenius => part.add_norm(&mut p, cfg.smoothing, &format!("smooth{k}"))?,
            }
        }
    }
    Ok(LocalProblem {
        base: p,
        storage,
        s,
        r,
        layout,
    })
}

fn build_global(
    models: &[SubsystemModel],
    ic: &Interconnection,
    cfg: &ConsensusConfig,
    locals: &[LocalProblem],
) -> Result<GlobalProblem> {
    let mut p = SdpProblem::new(cfg.cert.margin.max(cfg.coupling_margin));
    let mut layouts = Vec::with_capacity(locals.len());
    let mut s_exprs = Vec::new();
    let mut r_exprs = Vec::new();
    for (m, lp) in models.iter().zip(locals) {
        let mut segs = Vec::with_capacity(lp.layout.segments.len());
        for (k, seg) in lp.layout.segments.iter().enumerate() {
            let copy = match seg {
                Segment::Sym(v) => Segment::Sym(p.add_sym(v.dim(), format!("copy[{}].{k}", m.id()))),
                Segment::Scalar(_) => Segment::Scalar(p.add_scalar(format!("copy[{}].{k}", m.id()))),
            };
            segs.push(copy);
        }
        let expr_of = |seg: &Segment| match seg {
            Segment::Sym(v) => v.expr(),
            Segment::Scalar(v) => v.expr(),
        };
        s_exprs.push(expr_of(&segs[0]));
        r_exprs.push(expr_of(&segs[1]));
        layouts.push(Layout { segments: segs });
    }
    let g = global_supplies(&mut p, ic, &cfg.objective)?;
    let cs = vec![
        lmi_global_continuous(ic, models, &s_exprs, &g.s)?,
        lmi_global_discrete(ic, models, &r_exprs, &g.r)?,
    ];
    add_constraints(&mut p, cs)?;
    if let Some((_, v)) = g.free.filter(|(_, v)| v.dim() > 0) {
        let beta = p.add_scalar("beta");
        p.add_linear_objective(beta.id(), cfg.cert.bound_weight);
        add_bounds(&mut p, beta, &[v])?;
    }
    Ok(GlobalProblem {
        base: p,
        layouts,
        gamma: g.gamma,
        s: g.s,
        r: g.r,
    })
}
