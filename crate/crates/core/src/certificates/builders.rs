use nalgebra::DMatrix;

use super::supply::StorageExprs;
use crate::model::{build_permutations, Interconnection, Permutation, SubsystemModel};
use crate::symla::{AffineMatrix, SdpProblem};
use crate::{Error, Result};

/// One emitted inequality `expr ⪯ 0` (`⪯ −εI` when strict).
#[derive(Clone, Debug)]
pub struct Constraint {
    pub label: String,
    pub expr: AffineMatrix,
    pub strict: bool,
}

impl Constraint {
    fn new(label: String, expr: AffineMatrix, strict: bool) -> Self {
        Self { label, expr, strict }
    }

    pub fn is_scalar(&self) -> bool {
        self.expr.shape() == (1, 1)
    }

    /// `λ_max(expr(x))`, plus `margin` for strict constraints.
    pub fn residual(&self, x: &[f64], margin: f64) -> f64 {
        let m = self.expr.eval(x);
        crate::symla::max_eigenvalue(&m) + if self.strict { margin } else { 0.0 }
    }
}

pub fn add_constraints(p: &mut SdpProblem, cs: Vec<Constraint>) -> Result<()> {
    for c in cs {
        if c.is_scalar() {
            p.add_scalar_le(c.label, c.expr, c.strict)?;
        } else {
            p.add_lmi(c.label, c.expr, c.strict)?;
        }
    }
    Ok(())
}

fn dmat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

/// Flow dissipation for every feasible `(q, p)`:
///
/// ```text
/// [ AᵀP_q + P_q A − Cᵀ S₂₂ C   P_q B − Cᵀ S₁₂ᵀ ]
/// [ Bᵀ P_q − S₁₂ C             −S₁₁           ]  ⪯ 0
/// ```
///
/// with `S` split as `[S₁₁ S₁₂; S₁₂ᵀ S₂₂]`, `w` first.
pub fn lmi_local_continuous(
    model: &SubsystemModel,
    storage: &StorageExprs,
    s: &AffineMatrix,
    full_product: bool,
) -> Result<Vec<Constraint>> {
    let (n, n_w, n_y) = (model.n(), model.n_w(), model.n_y());
    if s.shape() != (n_w + n_y, n_w + n_y) {
        return Err(Error::Dimension(format!(
            "subsystem {}: continuous supply is {:?}, expected {}x{}",
            model.id(),
            s.shape(),
            n_w + n_y,
            n_w + n_y
        )));
    }
    let s11 = s.view(0, 0, n_w, n_w);
    let s12 = s.view(0, n_w, n_w, n_y);
    let s22 = s.view(n_w, n_w, n_y, n_y);
    let mut out = Vec::new();
    for (q, p) in model.mode_pairs(full_product) {
        let m = model.mode(p)?;
        let pq = &storage.p[&q];
        if pq.shape() != (n, n) {
            return Err(Error::Dimension(format!("storage matrix for state {q} is not {n}x{n}")));
        }
        let tl = pq.lmul(&m.a.transpose()) + pq.rmul(&m.a) - s22.congruence(&m.c);
        let tr = pq.rmul(&m.b) - s12.transpose().lmul(&m.c.transpose());
        let bl = tr.transpose();
        let lmi = AffineMatrix::block(&[vec![tl, tr], vec![bl, -s11.clone()]])?;
        out.push(Constraint::new(format!("sub{}.flow[q={q},p={p}]", model.id()), lmi, false));
    }
    Ok(out)
}

/// Jump dissipation for every `(q, u)`: `P_{q⁺} − P_q ⪯ 0` and
/// `λ_{q⁺} − λ_q ≤ [u; p]ᵀ R [u; p]`.
pub fn lmi_local_discrete(model: &SubsystemModel, storage: &StorageExprs, r: &AffineMatrix) -> Result<Vec<Constraint>> {
    if r.shape() != (2, 2) {
        return Err(Error::Dimension(format!(
            "subsystem {}: discrete supply must be 2x2, got {:?}",
            model.id(),
            r.shape()
        )));
    }
    let mut out = Vec::new();
    for (q, u, qn, p) in model.dfsm().transitions() {
        let i = model.id();
        let dp = storage.p[&qn].clone() - &storage.p[&q];
        out.push(Constraint::new(format!("sub{i}.jump[q={q},u={u}]"), dp, false));
        let up = dmat(2, 1, &[u as f64, p as f64]);
        let supply = r.congruence(&up);
        let offset = match &storage.lambda {
            Some(l) => l[&qn].clone() - &l[&q],
            None => AffineMatrix::zeros(1, 1),
        };
        out.push(Constraint::new(format!("sub{i}.jump_offset[q={q},u={u}]"), offset - supply, false));
    }
    Ok(out)
}

/// `P_q ⪰ εI` (strict) and `λ_q ≥ 0`. States sharing one storage matrix
/// yield a single constraint.
pub fn storage_positivity(model: &SubsystemModel, storage: &StorageExprs) -> Vec<Constraint> {
    let i = model.id();
    let mut out: Vec<Constraint> = Vec::new();
    let mut seen: Vec<&AffineMatrix> = Vec::new();
    for (q, p) in &storage.p {
        if seen.contains(&p) {
            continue;
        }
        seen.push(p);
        out.push(Constraint::new(format!("sub{i}.storage_pd[q={q}]"), -p.clone(), true));
    }
    if let Some(l) = &storage.lambda {
        let mut seen: Vec<&AffineMatrix> = Vec::new();
        for (q, v) in l {
            if !seen.contains(&v) {
                seen.push(v);
                out.push(Constraint::new(format!("sub{i}.offset_nonneg[q={q}]"), -v.clone(), false));
            }
        }
    }
    out
}

/// Lyapunov conditions: `P_q ⪰ εI`, `A_pᵀP_q + P_q A_p ⪯ −εI` for feasible
/// `(q, p)`, and `P_{g(q,u)} ⪯ P_q`, `λ_{g(q,u)} ≤ λ_q` on every transition.
pub fn lmi_stability(model: &SubsystemModel, storage: &StorageExprs, full_product: bool) -> Result<Vec<Constraint>> {
    let i = model.id();
    let mut out = storage_positivity(model, storage);
    for (q, p) in model.mode_pairs(full_product) {
        let a = &model.mode(p)?.a;
        let pq = &storage.p[&q];
        let lyap = pq.lmul(&a.transpose()) + pq.rmul(a);
        out.push(Constraint::new(format!("sub{i}.decay[q={q},p={p}]"), lyap, true));
    }
    for (q, u, qn, _) in model.dfsm().transitions() {
        let dp = storage.p[&qn].clone() - &storage.p[&q];
        out.push(Constraint::new(format!("sub{i}.jump[q={q},u={u}]"), dp, false));
        if let Some(l) = &storage.lambda {
            let dl = l[&qn].clone() - &l[&q];
            out.push(Constraint::new(format!("sub{i}.jump_offset[q={q},u={u}]"), dl, false));
        }
    }
    Ok(out)
}

/// `P [M; I]` split into per-subsystem row blocks and the exogenous block.
fn coupling_rows(perm: &Permutation, m: &DMatrix<f64>, io: &[usize], n_exo: usize) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let k = m.ncols();
    let mut stacked = DMatrix::zeros(m.nrows() + k, k);
    stacked.view_mut((0, 0), (m.nrows(), k)).copy_from(m);
    stacked.view_mut((m.nrows(), 0), (k, k)).fill_with_identity();
    let src = perm.sources();
    let permuted = DMatrix::from_fn(src.len(), k, |r, c| stacked[(src[r], c)]);
    let mut blocks = Vec::with_capacity(io.len());
    let mut r0 = 0;
    for &sz in io {
        blocks.push(permuted.rows(r0, sz).into_owned());
        r0 += sz;
    }
    (blocks, permuted.rows(r0, n_exo).into_owned())
}

/// `Σᵢ Tᵢᵀ Xᵢ Tᵢ − T_eᵀ X T_e`, the congruence of `diag(X₁, …, X_N, −X)`.
fn coupled_form(
    label: &str,
    perm: &Permutation,
    m: &DMatrix<f64>,
    io: &[usize],
    locals: &[AffineMatrix],
    global: &AffineMatrix,
) -> Result<Constraint> {
    let n_exo = global.shape().0;
    if perm.len() != m.nrows() + m.ncols() {
        return Err(Error::Dimension(format!("{label}: interconnection matrix does not fit the permutation")));
    }
    if locals.len() != io.len() {
        return Err(Error::Dimension(format!("{label}: {} local supplies for {} subsystems", locals.len(), io.len())));
    }
    let (blocks, exo) = coupling_rows(perm, m, io, n_exo);
    let k = m.ncols();
    let mut g = AffineMatrix::zeros(k, k);
    for (i, (t, x)) in blocks.iter().zip(locals).enumerate() {
        if x.shape() != (t.nrows(), t.nrows()) {
            return Err(Error::Dimension(format!("{label}: supply {i} has shape {:?}", x.shape())));
        }
        g = g + x.congruence(t);
    }
    g = g - global.congruence(&exo);
    Ok(Constraint::new(label.to_string(), g, true))
}

/// `[M_c; I]ᵀ P_cᵀ diag(S₁, …, S_N, −S) P_c [M_c; I] ⪯ −εI`.
pub fn lmi_global_continuous(
    ic: &Interconnection,
    models: &[SubsystemModel],
    s_locals: &[AffineMatrix],
    s: &AffineMatrix,
) -> Result<Constraint> {
    let (pc, _) = build_permutations(models, &ic.dims);
    let io: Vec<usize> = models.iter().map(|m| m.n_w() + m.n_y()).collect();
    if s.shape().0 != ic.dims.n_d + ic.dims.n_z {
        return Err(Error::Dimension("global continuous supply must cover (d, z)".into()));
    }
    coupled_form("global.continuous", &pc, &ic.m_c, &io, s_locals, s)
}

/// `[M_d; I]ᵀ P_dᵀ diag(R₁, …, R_N, −R) P_d [M_d; I] ⪯ −εI`.
pub fn lmi_global_discrete(
    ic: &Interconnection,
    models: &[SubsystemModel],
    r_locals: &[AffineMatrix],
    r: &AffineMatrix,
) -> Result<Constraint> {
    let (_, pd) = build_permutations(models, &ic.dims);
    let io = vec![2; models.len()];
    if r.shape().0 != ic.dims.n_mu + ic.dims.n_zeta {
        return Err(Error::Dimension("global discrete supply must cover (μ, ζ)".into()));
    }
    let m_d = ic.m_d.map(|v| v as f64);
    coupled_form("global.discrete", &pd, &m_d, &io, r_locals, r)
}
