//! Homogeneous self-dual interior-point method for
//!
//! ```text
//!   minimize    ½ xᵀ H x + qᵀ x
//!   subject to  A x + s = b,   s ∈ K = S₊^{m₁} × … × S₊^{m_K}
//! ```
//!
//! where every block of `A x` is `Σⱼ xⱼ Fₖⱼ` for symmetric coefficient
//! matrices. The embedding carries `(x, z, s, τ, κ)` so that infeasibility and
//! unboundedness show up as `τ → 0` with a certificate in the limit. Search
//! directions use Nesterov–Todd scaling and a Mehrotra predictor–corrector,
//! and the Newton system is reduced to a dense Schur complement in `x`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use super::eig::{max_eigenvalue, min_eigenvalue};
use super::problem::SdpProblem;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    /// Objective unbounded below on the feasible set.
    Unbounded,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SdpSettings {
    /// Relative tolerance on primal residual, dual residual and duality gap.
    pub tol: f64,
    /// Certificate ratio used to declare infeasibility or unboundedness.
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary.
    pub step_fraction: f64,
    /// When progress stalls or the linear algebra breaks down, the best
    /// iterate is still reported optimal if its residuals are within
    /// `relaxed_factor · tol`.
    pub relaxed_factor: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tol_infeas: 1e-8,
            max_iter: 120,
            step_fraction: 0.99,
            relaxed_factor: 100.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Values of all scalar unknowns (symmetric unknowns by upper triangle).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Relative primal residual `‖Ax + s − b‖`.
    pub primal_infeas: f64,
    /// Relative dual residual `‖Hx + Aᵀz + q‖`.
    pub dual_infeas: f64,
    /// Absolute duality gap.
    pub gap: f64,
    /// Largest `λ_max` of any constraint at `x` (margin included), clipped at 0.
    pub max_violation: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

pub fn solve_sdp(p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("solver tolerance must be positive, got {tol}")));
    }
    solve_sdp_with(
        p,
        &SdpSettings {
            tol,
            ..SdpSettings::default()
        },
    )
}

pub fn solve_sdp_with(p: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    let n = p.num_vars();
    let conic = match ConicForm::from_problem(p)? {
        Ok(c) => c,
        Err(trivial) => {
            let x = vec![0.0; n];
            return Ok(finish(p, trivial, x, f64::INFINITY, f64::INFINITY, f64::INFINITY, 0));
        }
    };
    let q = DVector::from_column_slice(p.linear_objective());
    let h = DVector::from_column_slice(p.quadratic_diagonal());

    // Unknowns that appear nowhere: free at zero, or unbounded if priced.
    let mut used = vec![false; n];
    for blk in &conic.blocks {
        for c in &blk.coeffs {
            used[c.var] = true;
        }
    }
    if (0..n).any(|j| !used[j] && h[j] == 0.0 && q[j] != 0.0) {
        return Ok(finish(p, SdpStatus::Unbounded, vec![0.0; n], f64::INFINITY, 0.0, f64::INFINITY, 0));
    }

    let mut solver = Hsd::new(conic, h, q, settings.clone());
    solver.run(p)
}

/// Iterations without a 10% improvement before a stall is declared.
const STALL_ITERS: usize = 5;

struct Best {
    score: f64,
    x: Vec<f64>,
    res: (f64, f64, f64),
    iter: usize,
}

impl Default for Best {
    fn default() -> Self {
        Self {
            score: f64::INFINITY,
            x: Vec::new(),
            res: (f64::INFINITY, f64::INFINITY, f64::INFINITY),
            iter: 0,
        }
    }
}

fn finish(
    p: &SdpProblem,
    status: SdpStatus,
    x: Vec<f64>,
    pres: f64,
    dres: f64,
    gap: f64,
    iterations: usize,
) -> SdpSolution {
    let objective = match status {
        SdpStatus::Infeasible => f64::INFINITY,
        SdpStatus::Unbounded => f64::NEG_INFINITY,
        _ => p.objective_value(&x),
    };
    let max_violation = p.max_violation(&x);
    SdpSolution {
        status,
        x,
        objective,
        primal_infeas: pres,
        dual_infeas: dres,
        gap,
        max_violation,
        iterations,
    }
}

struct Coeff {
    var: usize,
    mat: DMatrix<f64>,
    /// Upper-triangle nonzeros `(i, j, v)` with `i ≤ j`.
    nz: Vec<(usize, usize, f64)>,
}

struct Block {
    dim: usize,
    b: DMatrix<f64>,
    coeffs: Vec<Coeff>,
}

struct ConicForm {
    blocks: Vec<Block>,
    n: usize,
    degree: usize,
}

impl ConicForm {
    /// Builds the cone blocks. Constant constraints are dropped when they hold
    /// and reported as `Err(Infeasible)` when they do not.
    fn from_problem(p: &SdpProblem) -> Result<std::result::Result<Self, SdpStatus>> {
        let eps = p.strictness_margin();
        let mut blocks = Vec::new();
        let exprs = p
            .lmis()
            .iter()
            .map(|l| (&l.expr, l.strict))
            .chain(p.scalar_constraints().iter().map(|s| (&s.expr, s.strict)));
        for (expr, strict) in exprs {
            let m = expr.shape().0;
            let mut c0 = expr.constant_part().clone();
            if strict {
                for i in 0..m {
                    c0[(i, i)] += eps;
                }
            }
            if expr.is_constant() {
                let lmax = max_eigenvalue(&c0);
                if lmax > 1e-12 * (1.0 + c0.amax()) {
                    return Ok(Err(SdpStatus::Infeasible));
                }
                continue;
            }
            let coeffs = expr
                .terms()
                .map(|(var, f)| {
                    let mut nz = Vec::new();
                    for j in 0..m {
                        for i in 0..=j {
                            if f[(i, j)] != 0.0 {
                                nz.push((i, j, f[(i, j)]));
                            }
                        }
                    }
                    Coeff {
                        var,
                        mat: f.clone(),
                        nz,
                    }
                })
                .collect();
            blocks.push(Block {
                dim: m,
                b: -c0,
                coeffs,
            });
        }
        let degree = blocks.iter().map(|b| b.dim).sum();
        if p.num_vars() == 0 && !blocks.is_empty() {
            return Err(Error::InvalidInput("constraints without unknowns".into()));
        }
        Ok(Ok(Self {
            blocks,
            n: p.num_vars(),
            degree,
        }))
    }

    fn a_mul(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut m = DMatrix::zeros(blk.dim, blk.dim);
                for c in &blk.coeffs {
                    let xv = x[c.var];
                    if xv == 0.0 {
                        continue;
                    }
                    for &(i, j, v) in &c.nz {
                        m[(i, j)] += xv * v;
                        if i != j {
                            m[(j, i)] += xv * v;
                        }
                    }
                }
                m
            })
            .collect()
    }

    fn at_mul(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (blk, zk) in self.blocks.iter().zip(z) {
            for c in &blk.coeffs {
                out[c.var] += coeff_inner(c, zk);
            }
        }
        out
    }

    fn b_inner(&self, z: &[DMatrix<f64>]) -> f64 {
        self.blocks.iter().zip(z).map(|(blk, zk)| blk.b.dot(zk)).sum()
    }

    fn b_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.b.norm_squared()).sum::<f64>().sqrt()
    }
}

fn coeff_inner(c: &Coeff, z: &DMatrix<f64>) -> f64 {
    c.nz
        .iter()
        .map(|&(i, j, v)| if i == j { v * z[(i, j)] } else { v * (z[(i, j)] + z[(j, i)]) })
        .sum()
}

fn bv_inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn bv_norm(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn bv_scale(a: &[DMatrix<f64>], s: f64) -> Vec<DMatrix<f64>> {
    a.iter().map(|m| m * s).collect()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Moves a symmetric block into the interior of the PSD cone.
fn shift_to_cone(m: &mut DMatrix<f64>) {
    let lmin = min_eigenvalue(m);
    if lmin < 1e-8 {
        let shift = 1.0 - lmin;
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
    }
}

/// Nesterov–Todd scaling of one block: `Rᵀ Z R = R⁻¹ S R⁻ᵀ = diag(λ)`.
struct BlockScaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: DVector<f64>,
    /// Columns are `vec(R⁻¹ Fⱼ R⁻ᵀ)` for the block's coefficients.
    tilde: DMatrix<f64>,
}

impl BlockScaling {
    fn new(blk: &Block, s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let m = blk.dim;
        let ls = Cholesky::new(sym(s))?.unpack();
        let lz = Cholesky::new(sym(z))?.unpack();
        let svd = SVD::new(lz.transpose() * &ls, true, true);
        let u = svd.u?;
        let sig = svd.singular_values;
        if sig.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return None;
        }
        // R = L_z⁻ᵀ U Σ^{1/2},  R⁻¹ = Σ^{-1/2} Uᵀ L_zᵀ
        let sqrt_sig = sig.map(f64::sqrt);
        let isqrt_sig = sqrt_sig.map(|v| 1.0 / v);
        let rinv = DMatrix::from_diagonal(&isqrt_sig) * u.transpose() * lz.transpose();
        let lzt_inv = lz.transpose().try_inverse()?;
        let r = lzt_inv * &u * DMatrix::from_diagonal(&sqrt_sig);
        let k = blk.coeffs.len();
        let mut tilde = DMatrix::zeros(m * m, k);
        for (col, c) in blk.coeffs.iter().enumerate() {
            let ft = if c.nz.len() <= 2 * m {
                let mut acc = DMatrix::zeros(m, m);
                for &(i, j, v) in &c.nz {
                    let ri = rinv.column(i);
                    let rj = rinv.column(j);
                    if i == j {
                        acc += v * (ri * ri.transpose());
                    } else {
                        let outer = ri * rj.transpose();
                        acc += v * (&outer + outer.transpose());
                    }
                }
                acc
            } else {
                &rinv * &c.mat * rinv.transpose()
            };
            tilde.set_column(col, &DVector::from_column_slice(ft.as_slice()));
        }
        Some(Self {
            r,
            rinv,
            lambda: sig,
            tilde,
        })
    }

    /// `R⁻¹ V R⁻ᵀ`
    fn to_scaled_s(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        &self.rinv * v * self.rinv.transpose()
    }

    /// `Rᵀ V R`
    fn to_scaled_z(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.r.transpose() * v * &self.r
    }

    /// Solves `λ ∘ U = D` for symmetric `U` (Jordan product with diagonal λ).
    fn lambda_solve(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let m = d.nrows();
        DMatrix::from_fn(m, m, |i, j| 2.0 * d[(i, j)] / (self.lambda[i] + self.lambda[j]))
    }

    /// Largest step `α ≤ cap` keeping `Λ + α·D` positive semidefinite.
    fn max_step(&self, d_scaled: &DMatrix<f64>) -> f64 {
        let m = d_scaled.nrows();
        let isq = self.lambda.map(|v| 1.0 / v.sqrt());
        let t = DMatrix::from_fn(m, m, |i, j| isq[i] * d_scaled[(i, j)] * isq[j]);
        let lmin = if m == 1 {
            t[(0, 0)]
        } else {
            SymmetricEigen::new(sym(&t)).eigenvalues.min()
        };
        if lmin < 0.0 {
            -1.0 / lmin
        } else {
            f64::INFINITY
        }
    }
}

struct Hsd {
    cone: ConicForm,
    h: DVector<f64>,
    q: DVector<f64>,
    settings: SdpSettings,
    x: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dtau: f64,
    dkappa: f64,
    /// Scaled `W⁻ᵀΔs` and `WΔz`, kept for the Mehrotra correction.
    ds_scaled: Vec<DMatrix<f64>>,
    dz_scaled: Vec<DMatrix<f64>>,
}

impl Hsd {
    fn new(cone: ConicForm, h: DVector<f64>, q: DVector<f64>, settings: SdpSettings) -> Self {
        let n = cone.n;
        let nb = cone.blocks.len();
        Self {
            x: DVector::zeros(n),
            s: Vec::with_capacity(nb),
            z: Vec::with_capacity(nb),
            cone,
            h,
            q,
            settings,
            tau: 1.0,
            kappa: 1.0,
        }
    }

    /// Dense Schur complement `diag(h) + Aᵀ H⁻¹ A` from the block scalings.
    fn schur(&self, sc: &[BlockScaling]) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&self.h);
        for (blk, bs) in self.cone.blocks.iter().zip(sc) {
            let g = bs.tilde.transpose() * &bs.tilde;
            for (a, ca) in blk.coeffs.iter().enumerate() {
                for (b, cb) in blk.coeffs.iter().enumerate() {
                    m[(ca.var, cb.var)] += g[(a, b)];
                }
            }
        }
        m
    }

    fn identity_scalings(&self) -> Vec<BlockScaling> {
        let eye: Vec<DMatrix<f64>> = self
            .cone
            .blocks
            .iter()
            .map(|b| DMatrix::identity(b.dim, b.dim))
            .collect();
        self.cone
            .blocks
            .iter()
            .zip(&eye)
            .map(|(blk, e)| BlockScaling::new(blk, e, e).expect("identity scaling"))
            .collect()
    }

    fn initialize(&mut self) -> Result<()> {
        let sc = self.identity_scalings();
        // identity scaling turns the Schur complement into H + AᵀA
        let m = self.schur(&sc);
        let fact = Factor::new(&m)?;
        let bvec: Vec<DMatrix<f64>> = self.cone.blocks.iter().map(|b| b.b.clone()).collect();
        // primal: min ½xᵀHx + ½‖Ax − b‖², s = b − Ax
        let x = fact.solve(&m, &self.cone.at_mul(&bvec));
        let ax = self.cone.a_mul(&x);
        let mut s: Vec<DMatrix<f64>> = bvec.iter().zip(&ax).map(|(b, a)| b - a).collect();
        // dual: z = A w with (H + AᵀA) w = −q
        let w = fact.solve(&m, &(-&self.q));
        let mut z = self.cone.a_mul(&w);
        for blk in s.iter_mut().chain(z.iter_mut()) {
            shift_to_cone(blk);
        }
        self.x = x;
        self.s = s;
        self.z = z;
        self.tau = 1.0;
        self.kappa = 1.0;
        Ok(())
    }

    fn residuals(&self) -> (DVector<f64>, Vec<DMatrix<f64>>, f64) {
        let hx = self.h.component_mul(&self.x);
        let rx = &hx + self.cone.at_mul(&self.z) + &self.q * self.tau;
        let ax = self.cone.a_mul(&self.x);
        let rz: Vec<DMatrix<f64>> = ax
            .iter()
            .zip(&self.s)
            .zip(&self.cone.blocks)
            .map(|((a, s), blk)| a + s - &blk.b * self.tau)
            .collect();
        let rtau = self.q.dot(&self.x) + self.cone.b_inner(&self.z) + self.kappa + self.x.dot(&hx) / self.tau;
        (rx, rz, rtau)
    }

    fn run(&mut self, p: &SdpProblem) -> Result<SdpSolution> {
        let tol = self.settings.tol;
        let tol_inf = self.settings.tol_infeas;
        let nu = self.cone.degree as f64;
        let bnorm = self.cone.b_norm();
        let qnorm = self.q.norm();

        if self.cone.blocks.is_empty() {
            // Unconstrained separable quadratic.
            let x: Vec<f64> = (0..self.cone.n)
                .map(|j| if self.h[j] > 0.0 { -self.q[j] / self.h[j] } else { 0.0 })
                .collect();
            return Ok(finish(p, SdpStatus::Optimal, x, 0.0, 0.0, 0.0, 0));
        }

        self.initialize()?;
        let mut best = Best::default();
        let mut stalled = 0;

        for iter in 0..self.settings.max_iter {
            let (rx, rz, rtau) = self.residuals();
            let mu = (bv_inner(&self.s, &self.z) + self.tau * self.kappa) / (nu + 1.0);

            // convergence on the normalised iterate
            let xh = &self.x / self.tau;
            let zh = bv_scale(&self.z, 1.0 / self.tau);
            let sh = bv_scale(&self.s, 1.0 / self.tau);
            let hxh = self.h.component_mul(&xh);
            let quad = xh.dot(&hxh);
            let pobj = 0.5 * quad + self.q.dot(&xh);
            let dobj = -0.5 * quad - self.cone.b_inner(&zh);
            let pres = bv_norm(&rz) / self.tau / (1.0 + bnorm + xh.norm() + bv_norm(&sh));
            let dres = rx.norm() / self.tau / (1.0 + qnorm + xh.norm() + bv_norm(&zh));
            let gap = (pobj - dobj).abs();
            let gap_rel = gap / pobj.abs().min(dobj.abs()).max(1.0);
            if pres <= tol && dres <= tol && (gap <= tol || gap_rel <= tol) {
                return Ok(finish(p, SdpStatus::Optimal, xh.as_slice().to_vec(), pres, dres, gap, iter));
            }
            let score = pres.max(dres).max(gap.min(gap_rel));
            if score < 0.9 * best.score {
                stalled = 0;
            } else {
                stalled += 1;
            }
            if score < best.score {
                best = Best {
                    score,
                    x: xh.as_slice().to_vec(),
                    res: (pres, dres, gap),
                    iter,
                };
            }
            // no progress while the barrier parameter is negligible
            if stalled >= STALL_ITERS && mu < tol * tol {
                return Ok(self.give_up(p, best));
            }

            // infeasibility certificates on the unnormalised iterate
            let bz = self.cone.b_inner(&self.z);
            if bz < 0.0 {
                let atz = self.cone.at_mul(&self.z).norm();
                if atz <= tol_inf * (-bz) {
                    return Ok(finish(p, SdpStatus::Infeasible, xh.as_slice().to_vec(), pres, dres, gap, iter));
                }
            }
            let qx = self.q.dot(&self.x);
            if qx < 0.0 {
                let hxn = self.h.component_mul(&self.x).norm();
                let axs: Vec<DMatrix<f64>> = self
                    .cone
                    .a_mul(&self.x)
                    .iter()
                    .zip(&self.s)
                    .map(|(a, s)| a + s)
                    .collect();
                if hxn <= tol_inf * (-qx) && bv_norm(&axs) <= tol_inf * (-qx) {
                    return Ok(finish(p, SdpStatus::Unbounded, xh.as_slice().to_vec(), pres, dres, gap, iter));
                }
            }

            let sc: Option<Vec<BlockScaling>> = self
                .cone
                .blocks
                .iter()
                .zip(self.s.iter().zip(&self.z))
                .map(|(blk, (s, z))| BlockScaling::new(blk, s, z))
                .collect();
            let Some(sc) = sc else {
                return Ok(self.give_up(p, best));
            };
            let m = self.schur(&sc);
            let Ok(fact) = Factor::new(&m) else {
                return Ok(self.give_up(p, best));
            };

            let bmat: Vec<DMatrix<f64>> = self.cone.blocks.iter().map(|b| b.b.clone()).collect();
            let (dx2, dz2) = self.kkt_solve(&sc, &fact, &m, &(-&self.q), &bmat);

            // predictor
            let d_s_aff: Vec<DMatrix<f64>> = sc
                .iter()
                .map(|bs| -DMatrix::from_diagonal(&bs.lambda.map(|l| l * l)))
                .collect();
            let d_k_aff = -self.tau * self.kappa;
            let aff = self.direction(&sc, &fact, &m, (&rx, &rz, rtau), 1.0, &d_s_aff, d_k_aff, (&dx2, &dz2));
            let alpha_aff = self.step_length(&sc, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);

            // corrector
            let d_s: Vec<DMatrix<f64>> = sc
                .iter()
                .zip(aff.ds_scaled.iter().zip(&aff.dz_scaled))
                .map(|(bs, (dsa, dza))| {
                    let m = bs.lambda.len();
                    let mut d = -DMatrix::from_diagonal(&bs.lambda.map(|l| l * l));
                    for i in 0..m {
                        d[(i, i)] += sigma * mu;
                    }
                    let prod = dsa * dza;
                    d - (&prod + prod.transpose()) * 0.5
                })
                .collect();
            let d_k = -self.tau * self.kappa + sigma * mu - aff.dtau * aff.dkappa;
            let dir = self.direction(&sc, &fact, &m, (&rx, &rz, rtau), 1.0 - sigma, &d_s, d_k, (&dx2, &dz2));
            let alpha = (self.settings.step_fraction * self.step_length(&sc, &dir)).min(1.0);

            self.x += &dir.dx * alpha;
            for (s, d) in self.s.iter_mut().zip(&dir.ds) {
                *s += d * alpha;
                *s = sym(s);
            }
            for (z, d) in self.z.iter_mut().zip(&dir.dz) {
                *z += d * alpha;
                *z = sym(z);
            }
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;
            if !(self.tau > 0.0 && self.kappa > 0.0) || !self.x.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical("interior-point iterate left the cone".into()));
            }
        }
        Ok(self.give_up(p, best))
    }

    /// Best iterate seen, optimal if it meets the relaxed tolerance.
    fn give_up(&self, p: &SdpProblem, best: Best) -> SdpSolution {
        let status = if best.score <= self.settings.relaxed_factor * self.settings.tol {
            SdpStatus::Optimal
        } else {
            SdpStatus::MaxIter
        };
        let x = if best.x.is_empty() {
            (&self.x / self.tau).as_slice().to_vec()
        } else {
            best.x
        };
        finish(p, status, x, best.res.0, best.res.1, best.res.2, best.iter)
    }

    /// Solves `[H Aᵀ; A −W²][Δx; Δz] = [r1; r2]` through the Schur complement.
    fn kkt_solve(
        &self,
        sc: &[BlockScaling],
        fact: &Factor,
        m: &DMatrix<f64>,
        r1: &DVector<f64>,
        r2: &[DMatrix<f64>],
    ) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let scaled: Vec<DMatrix<f64>> = sc.iter().zip(r2).map(|(bs, r)| bs.to_scaled_s(r)).collect();
        let mut rhs = r1.clone();
        for ((blk, bs), t) in self.cone.blocks.iter().zip(sc).zip(&scaled) {
            let tv = DVector::from_column_slice(t.as_slice());
            let g = bs.tilde.transpose() * tv;
            for (a, c) in blk.coeffs.iter().enumerate() {
                rhs[c.var] += g[a];
            }
        }
        let dx = fact.solve(m, &rhs);
        let dz = self
            .cone
            .blocks
            .iter()
            .zip(sc)
            .zip(&scaled)
            .map(|((blk, bs), t)| {
                let sub = DVector::from_iterator(blk.coeffs.len(), blk.coeffs.iter().map(|c| dx[c.var]));
                let u = &bs.tilde * sub;
                let um = DMatrix::from_column_slice(blk.dim, blk.dim, u.as_slice()) - t;
                sym(&(bs.rinv.transpose() * um * &bs.rinv))
            })
            .collect();
        (dx, dz)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sc: &[BlockScaling],
        fact: &Factor,
        m: &DMatrix<f64>,
        (rx, rz, rtau): (&DVector<f64>, &[DMatrix<f64>], f64),
        eta: f64,
        d_s: &[DMatrix<f64>],
        d_k: f64,
        (dx2, dz2): (&DVector<f64>, &Vec<DMatrix<f64>>),
    ) -> Direction {
        let us: Vec<DMatrix<f64>> = sc.iter().zip(d_s).map(|(bs, d)| bs.lambda_solve(d)).collect();
        let r1 = -(rx * eta);
        let r2: Vec<DMatrix<f64>> = rz
            .iter()
            .zip(sc.iter().zip(&us))
            .map(|(r, (bs, u))| -(r * eta) - &bs.r * u * bs.r.transpose())
            .collect();
        let (dx1, dz1) = self.kkt_solve(sc, fact, m, &r1, &r2);

        let hx = self.h.component_mul(&self.x);
        let qt = &self.q + &hx * (2.0 / self.tau);
        let xhx = self.x.dot(&hx);
        let num = -eta * rtau - d_k / self.tau - qt.dot(&dx1) - self.cone.b_inner(&dz1);
        let den = qt.dot(dx2) + self.cone.b_inner(dz2) - xhx / (self.tau * self.tau) - self.kappa / self.tau;
        let dtau = num / den;

        let dx = dx1 + dx2 * dtau;
        let dz: Vec<DMatrix<f64>> = dz1.iter().zip(dz2).map(|(a, b)| a + b * dtau).collect();
        let dz_scaled: Vec<DMatrix<f64>> = sc.iter().zip(&dz).map(|(bs, d)| bs.to_scaled_z(d)).collect();
        let ds_scaled: Vec<DMatrix<f64>> = us.iter().zip(&dz_scaled).map(|(u, d)| sym(&(u - d))).collect();
        let ds: Vec<DMatrix<f64>> = sc
            .iter()
            .zip(&ds_scaled)
            .map(|(bs, d)| sym(&(&bs.r * d * bs.r.transpose())))
            .collect();
        let dkappa = (d_k - self.kappa * dtau) / self.tau;
        Direction {
            dx,
            dz,
            ds,
            dtau,
            dkappa,
            ds_scaled,
            dz_scaled,
        }
    }

    fn step_length(&self, sc: &[BlockScaling], d: &Direction) -> f64 {
        let mut alpha = f64::INFINITY;
        for (bs, (dsv, dzv)) in sc.iter().zip(d.ds_scaled.iter().zip(&d.dz_scaled)) {
            alpha = alpha.min(bs.max_step(dsv)).min(bs.max_step(dzv));
        }
        if d.dtau < 0.0 {
            alpha = alpha.min(-self.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / d.dkappa);
        }
        alpha
    }
}

/// Regularised Cholesky with iterative refinement against the exact matrix.
struct Factor {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl Factor {
    fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0, f64::max);
        let mut delta = 1e-13 * scale;
        for _ in 0..8 {
            let mut reg = m.clone();
            for i in 0..n {
                reg[(i, i)] += delta;
            }
            if let Some(chol) = Cholesky::new(reg) {
                return Ok(Self { chol });
            }
            delta *= 100.0;
        }
        Err(Error::Numerical("Schur complement is not positive definite".into()))
    }

    fn solve(&self, m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        for _ in 0..3 {
            let r = rhs - m * &x;
            if r.norm() <= 1e-15 * (1.0 + rhs.norm()) {
                break;
            }
            x += self.chol.solve(&r);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symla::AffineMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn lmax2(m: &DMatrix<f64>) -> f64 {
        let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()
    }

    #[test]
    fn scalar_gain_matches_bisection() {
        let mut p = SdpProblem::new(0.0);
        let g = p.add_scalar("gamma");
        let expr = AffineMatrix::constant(m2(0.0, 1.0, 1.0, 0.0)) + g.times(m2(-2.0, 0.0, 0.0, -1.0));
        p.add_lmi("gain", expr, false).unwrap();
        p.add_linear_objective(g.id(), 1.0);
        let sol = solve_sdp(&p, 1e-9).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);

        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if lmax2(&m2(-2.0 * mid, 1.0, 1.0, -mid)) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((sol.x[0] - hi).abs() < 1e-6, "{} vs {}", sol.x[0], hi);
        assert!((hi - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_feasible_for_stable_matrix() {
        let mut p = SdpProblem::default();
        let pv = p.add_sym(2, "P");
        let a = -DMatrix::<f64>::identity(2, 2);
        p.add_lmi("pos", AffineMatrix::identity(2) - pv.expr(), false).unwrap();
        let lyap = pv.expr().lmul(&a.transpose()) + pv.expr().rmul(&a) + AffineMatrix::identity(2);
        p.add_lmi("decay", lyap, false).unwrap();
        let sol = solve_sdp(&p, 1e-8).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.max_violation <= 1e-8);
    }

    #[test]
    fn lyapunov_infeasible_for_unstable_matrix() {
        let mut p = SdpProblem::default();
        let pv = p.add_sym(1, "P");
        p.add_lmi("pos", -pv.expr(), true).unwrap();
        p.add_lmi("decay", pv.expr() * 2.0, true).unwrap();
        let sol = solve_sdp(&p, 1e-8).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn constant_violation_is_infeasible() {
        let mut p = SdpProblem::default();
        let _ = p.add_scalar("t");
        p.add_lmi("bad", AffineMatrix::identity(3), false).unwrap();
        assert_eq!(solve_sdp(&p, 1e-8).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = SdpProblem::default();
        let t = p.add_scalar("t");
        p.add_lmi("upper", t.expr() - AffineMatrix::identity(1), false).unwrap();
        p.add_linear_objective(t.id(), 1.0);
        assert_eq!(solve_sdp(&p, 1e-8).unwrap().status, SdpStatus::Unbounded);
    }

    #[test]
    fn max_eigenvalue_by_epigraph() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 3, 6, 10] {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let c = (&g + g.transpose()) * 0.5;
            let mut p = SdpProblem::new(0.0);
            let t = p.add_scalar("t");
            p.add_lmi("epi", AffineMatrix::constant(c.clone()) - t.times(DMatrix::identity(n, n)), false)
                .unwrap();
            p.add_linear_objective(t.id(), 1.0);
            let sol = solve_sdp(&p, 1e-9).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            assert!((sol.x[0] - max_eigenvalue(&c)).abs() < 1e-6);
        }
    }

    #[test]
    fn proximal_projection_onto_psd() {
        // min ½‖X − C‖² s.t. X ⪰ 0 is the PSD projection of C
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = (&g + g.transpose()) * 0.5;
        let mut p = SdpProblem::new(0.0);
        let x = p.add_sym(n, "X");
        p.add_proximal_sym(x, 1.0, &c);
        p.add_lmi("psd", -x.expr(), false).unwrap();
        let sol = solve_sdp(&p, 1e-10).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let proj = crate::symla::project_psd(&crate::symla::SymMatrix::new(c).unwrap()).unwrap();
        assert!((x.value(&sol.x) - proj.as_matrix()).amax() < 1e-6);
    }

    #[test]
    fn larger_margin_never_lowers_optimum() {
        let solve = |eps: f64| {
            let mut p = SdpProblem::new(eps);
            let g = p.add_scalar("gamma");
            let expr = AffineMatrix::constant(m2(0.0, 1.0, 1.0, 0.0)) + g.times(m2(-2.0, 0.0, 0.0, -1.0));
            p.add_lmi("gain", expr, true).unwrap();
            p.add_linear_objective(g.id(), 1.0);
            solve_sdp(&p, 1e-9).unwrap().objective
        };
        let vals: Vec<f64> = [0.0, 1e-6, 1e-3, 1e-1].iter().map(|&e| solve(e)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{vals:?}");
    }
}
