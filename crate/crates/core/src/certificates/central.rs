use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::builders::{
    add_constraints, lmi_global_continuous, lmi_global_discrete, lmi_local_continuous, lmi_local_discrete,
    storage_positivity, Constraint,
};
use super::supply::{
    gain_supply, passivity_supply, GainObjective, GainTarget, StorageCertificate, StorageExprs, StorageForm,
    StorageVars, SupplyKind, SupplyRate, SupplyVar,
};
use crate::model::{validate_interconnection, Interconnection, SubsystemModel};
use crate::symla::{
    solve_sdp, AffineMatrix, ScalarVar, SdpProblem, SdpSolution, SdpStatus, SymMatrix, SymVar,
    DEFAULT_STRICTNESS_MARGIN,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertOptions {
    /// Margin realising strict inequalities.
    pub margin: f64,
    /// Enumerate all of `𝒬 × 𝒫` instead of the feasible `(q, l(q, ·))` pairs.
    pub full_product: bool,
    pub storage: StorageForm,
    /// Objective weight on the bound `β` that keeps the supply rates of the
    /// untargeted channel (and the global one) inside `[−βI, βI]`.
    pub bound_weight: f64,
}

impl Default for CertOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_STRICTNESS_MARGIN,
            full_product: false,
            storage: StorageForm::ModeIndexed,
            bound_weight: 1e-3,
        }
    }
}

/// Global supply expressions for a gain target.
pub(crate) struct GlobalSupplies {
    pub s: AffineMatrix,
    pub r: AffineMatrix,
    pub gamma: Option<ScalarVar>,
    /// Free global supply (on the untargeted channel), if any.
    pub free: Option<(SupplyKind, SymVar)>,
}

/// Creates `γ` (unless fixed) and the global `S`, `R` for `objective`; the
/// untargeted one is a free unknown.
pub(crate) fn global_supplies(p: &mut SdpProblem, ic: &Interconnection, objective: &GainObjective) -> Result<GlobalSupplies> {
    let d = ic.dims;
    let gamma = match objective.fixed {
        Some(v) if !(v >= 0.0) => return Err(Error::InvalidInput(format!("fixed gain must be nonnegative, got {v}"))),
        Some(v) => Err(v),
        None if objective.target == GainTarget::Passivity => Err(0.0),
        None => {
            let g = p.add_scalar("gamma");
            p.add_linear_objective(g.id(), 1.0);
            p.add_scalar_le("gamma_nonneg", -g.expr(), false)?;
            Ok(g)
        }
    };
    let free_sym = |p: &mut SdpProblem, n: usize, label: &str| p.add_sym(n, label);
    let out = match objective.target {
        GainTarget::ContinuousL2 | GainTarget::Passivity => {
            let s = if objective.target == GainTarget::Passivity {
                if d.n_d != d.n_z {
                    return Err(Error::Dimension("passivity needs as many d as z channels".into()));
                }
                passivity_supply(d.n_d)
            } else {
                gain_supply(gamma, d.n_d, d.n_z)
            };
            let rv = free_sym(p, d.n_mu + d.n_zeta, "R");
            GlobalSupplies {
                s,
                r: rv.expr(),
                gamma: gamma.ok(),
                free: Some((SupplyKind::Discrete, rv)),
            }
        }
        GainTarget::DiscreteL2 => {
            let sv = free_sym(p, d.n_d + d.n_z, "S");
            GlobalSupplies {
                s: sv.expr(),
                r: gain_supply(gamma, d.n_mu, d.n_zeta),
                gamma: gamma.ok(),
                free: Some((SupplyKind::Continuous, sv)),
            }
        }
    };
    Ok(out)
}

/// `−βI ⪯ X ⪯ βI` for every listed unknown.
pub(crate) fn add_bounds(p: &mut SdpProblem, beta: ScalarVar, vars: &[SymVar]) -> Result<()> {
    for (k, v) in vars.iter().enumerate() {
        let n = v.dim();
        if n == 0 {
            continue;
        }
        let b = beta.times(DMatrix::identity(n, n));
        p.add_lmi(format!("bound{k}.upper"), v.expr() - &b, false)?;
        p.add_lmi(format!("bound{k}.lower"), -v.expr() - &b, false)?;
    }
    Ok(())
}

/// The single SDP containing every local and both global conditions.
pub struct CentralizedProblem {
    pub problem: SdpProblem,
    pub storage: Vec<StorageVars>,
    pub s: Vec<SupplyVar>,
    pub r: Vec<SupplyVar>,
    pub gamma: Option<ScalarVar>,
    pub global_s: AffineMatrix,
    pub global_r: AffineMatrix,
    pub target: GainTarget,
    pub constraints: Vec<Constraint>,
}

pub fn assemble_centralized(
    models: &[SubsystemModel],
    ic: &Interconnection,
    objective: &GainObjective,
    opts: &CertOptions,
) -> Result<CentralizedProblem> {
    let v = validate_interconnection(ic, models);
    if !v.is_empty() {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidInput(msgs.join("; ")));
    }
    let mut p = SdpProblem::new(opts.margin);
    let mut storage = Vec::new();
    let mut s = Vec::new();
    let mut r = Vec::new();
    let mut constraints = Vec::new();
    for m in models {
        let sv = StorageVars::new(&mut p, m, opts.storage, true);
        let si = SupplyVar::new(&mut p, m.n_w(), m.n_y(), &format!("S[{}]", m.id()));
        let ri = SupplyVar::new(&mut p, 1, 1, &format!("R[{}]", m.id()));
        let ex = StorageExprs::from(&sv);
        constraints.extend(storage_positivity(m, &ex));
        constraints.extend(lmi_local_continuous(m, &ex, &si.expr(), opts.full_product)?);
        constraints.extend(lmi_local_discrete(m, &ex, &ri.expr())?);
        storage.push(sv);
        s.push(si);
        r.push(ri);
    }
    let g = global_supplies(&mut p, ic, objective)?;
    let s_exprs: Vec<AffineMatrix> = s.iter().map(SupplyVar::expr).collect();
    let r_exprs: Vec<AffineMatrix> = r.iter().map(SupplyVar::expr).collect();
    constraints.push(lmi_global_continuous(ic, models, &s_exprs, &g.s)?);
    constraints.push(lmi_global_discrete(ic, models, &r_exprs, &g.r)?);

    let mut bounded: Vec<SymVar> = match objective.target {
        GainTarget::DiscreteL2 => s.iter().map(|v| v.var).collect(),
        _ => r.iter().map(|v| v.var).collect(),
    };
    if let Some((_, v)) = g.free {
        bounded.push(v);
    }
    add_constraints(&mut p, constraints.clone())?;
    if !bounded.is_empty() {
        let beta = p.add_scalar("beta");
        p.add_linear_objective(beta.id(), opts.bound_weight);
        add_bounds(&mut p, beta, &bounded)?;
    }
    Ok(CentralizedProblem {
        problem: p,
        storage,
        s,
        r,
        gamma: g.gamma,
        global_s: g.s,
        global_r: g.r,
        target: objective.target,
        constraints,
    })
}

/// Per-subsystem certificate: storage plus local supply rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemCertificate {
    pub storage: StorageCertificate,
    pub s: SupplyRate,
    pub r: SupplyRate,
}

/// Most-positive eigenvalue of one emitted inequality (margin included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub label: String,
    pub max_eigenvalue: f64,
}

/// A complete compositional certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSet {
    pub target: GainTarget,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub margin: f64,
    /// Absent when the interconnection has no exogenous channels of that kind.
    pub global_s: Option<SupplyRate>,
    pub global_r: Option<SupplyRate>,
    #[serde(rename = "subsystem")]
    pub subsystems: Vec<SubsystemCertificate>,
    #[serde(default, rename = "residual")]
    pub residuals: Vec<Residual>,
}

impl CertificateSet {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Largest residual over all audited inequalities.
    pub fn worst_residual(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn storages(&self) -> Vec<StorageCertificate> {
        self.subsystems.iter().map(|s| s.storage.clone()).collect()
    }
}

fn sym_supply(kind: SupplyKind, partition: usize, m: DMatrix<f64>) -> Option<SupplyRate> {
    (m.nrows() > 0)
        .then(|| SupplyRate::new(kind, partition, SymMatrix::new(m).expect("finite supply")).expect("partition fits"))
}

/// Outcome of a centralized solve.
pub struct CentralizedResult {
    pub solution: SdpSolution,
    pub certificate: Option<CertificateSet>,
}

impl CentralizedProblem {
    pub fn solve(&self, models: &[SubsystemModel], ic: &Interconnection, tol: f64) -> Result<CentralizedResult> {
        let sol = solve_sdp(&self.problem, tol)?;
        let certificate = match sol.status {
            SdpStatus::Optimal | SdpStatus::MaxIter => Some(self.extract(models, ic, &sol.x)?),
            _ => None,
        };
        Ok(CentralizedResult {
            solution: sol,
            certificate,
        })
    }

    pub fn extract(&self, models: &[SubsystemModel], ic: &Interconnection, x: &[f64]) -> Result<CertificateSet> {
        let d = ic.dims;
        let gamma = self.gamma.map(|g| g.value(x).max(0.0));
        let mut set = CertificateSet {
            target: self.target,
            gamma,
            eta: gamma.map(f64::sqrt),
            margin: self.problem.strictness_margin(),
            global_s: sym_supply(SupplyKind::Continuous, d.n_d, self.global_s.eval(x)),
            global_r: sym_supply(SupplyKind::Discrete, d.n_mu, self.global_r.eval(x)),
            subsystems: (0..models.len())
                .map(|i| SubsystemCertificate {
                    storage: self.storage[i].value(x),
                    s: self.s[i].value(SupplyKind::Continuous, x),
                    r: self.r[i].value(SupplyKind::Discrete, x),
                })
                .collect(),
            residuals: Vec::new(),
        };
        set.residuals = audit_certificate(models, ic, &set, false)?;
        Ok(set)
    }
}

/// Rebuilds every local and global inequality from the numeric certificate
/// and reports its most-positive eigenvalue. Independent of the solver.
pub fn audit_certificate(
    models: &[SubsystemModel],
    ic: &Interconnection,
    set: &CertificateSet,
    full_product: bool,
) -> Result<Vec<Residual>> {
    if set.subsystems.len() != models.len() {
        return Err(Error::Dimension("certificate does not match the model count".into()));
    }
    let mut cs = Vec::new();
    for (m, c) in models.iter().zip(&set.subsystems) {
        let ex = StorageExprs::from(&c.storage);
        cs.extend(storage_positivity(m, &ex));
        cs.extend(lmi_local_continuous(m, &ex, &constant(&c.s), full_product)?);
        cs.extend(lmi_local_discrete(m, &ex, &constant(&c.r))?);
    }
    let s_loc: Vec<AffineMatrix> = set.subsystems.iter().map(|c| constant(&c.s)).collect();
    let r_loc: Vec<AffineMatrix> = set.subsystems.iter().map(|c| constant(&c.r)).collect();
    cs.push(lmi_global_continuous(ic, models, &s_loc, &optional(&set.global_s))?);
    cs.push(lmi_global_discrete(ic, models, &r_loc, &optional(&set.global_r))?);
    Ok(cs
        .iter()
        .map(|c| Residual {
            label: c.label.clone(),
            max_eigenvalue: c.residual(&[], set.margin),
        })
        .collect())
}

fn constant(s: &SupplyRate) -> AffineMatrix {
    AffineMatrix::constant(s.matrix.as_matrix().clone())
}

fn optional(s: &Option<SupplyRate>) -> AffineMatrix {
    s.as_ref().map_or_else(|| AffineMatrix::zeros(0, 0), constant)
}
