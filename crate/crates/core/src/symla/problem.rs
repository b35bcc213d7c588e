use nalgebra::DMatrix;

use super::expr::{AffineMatrix, ScalarVar, SymVar, VarId};
use crate::{Error, Result};

/// Default margin realising strict matrix inequalities as `⪯ -ε·I`.
pub const DEFAULT_STRICTNESS_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum UnknownKind {
    Sym(SymVar),
    Scalar(ScalarVar),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unknown {
    pub label: String,
    pub kind: UnknownKind,
}

/// `expr ⪯ 0`, or `expr ⪯ -ε·I` when `strict`.
#[derive(Clone, Debug)]
pub struct Lmi {
    pub label: String,
    pub expr: AffineMatrix,
    pub strict: bool,
}

/// Scalar `expr ≤ 0` (or `≤ -ε` when `strict`); `expr` is 1×1.
#[derive(Clone, Debug)]
pub struct ScalarConstraint {
    pub label: String,
    pub expr: AffineMatrix,
    pub strict: bool,
}

/// Minimise `½·Σ hⱼ xⱼ² + cᵀx + c₀` subject to LMIs and scalar inequalities.
///
/// The quadratic part is diagonal, which covers the Frobenius smoothing and
/// proximal terms used by the splitting methods.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    unknowns: Vec<Unknown>,
    n_vars: usize,
    linear: Vec<f64>,
    quad_diag: Vec<f64>,
    offset: f64,
    lmis: Vec<Lmi>,
    scalars: Vec<ScalarConstraint>,
    strictness_margin: f64,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new(DEFAULT_STRICTNESS_MARGIN)
    }
}

impl SdpProblem {
    pub fn new(strictness_margin: f64) -> Self {
        assert!(strictness_margin >= 0.0, "strictness margin must be nonnegative");
        Self {
            unknowns: Vec::new(),
            n_vars: 0,
            linear: Vec::new(),
            quad_diag: Vec::new(),
            offset: 0.0,
            lmis: Vec::new(),
            scalars: Vec::new(),
            strictness_margin,
        }
    }

    fn grow(&mut self, k: usize) -> VarId {
        let first = self.n_vars;
        self.n_vars += k;
        self.linear.resize(self.n_vars, 0.0);
        self.quad_diag.resize(self.n_vars, 0.0);
        first
    }

    pub fn add_sym(&mut self, dim: usize, label: impl Into<String>) -> SymVar {
        let v = SymVar::new(self.n_vars, dim);
        self.grow(v.len());
        self.unknowns.push(Unknown {
            label: label.into(),
            kind: UnknownKind::Sym(v),
        });
        v
    }

    pub fn add_scalar(&mut self, label: impl Into<String>) -> ScalarVar {
        let v = ScalarVar(self.grow(1));
        self.unknowns.push(Unknown {
            label: label.into(),
            kind: UnknownKind::Scalar(v),
        });
        v
    }

    pub fn add_lmi(&mut self, label: impl Into<String>, expr: AffineMatrix, strict: bool) -> Result<()> {
        let label = label.into();
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Dimension(format!("LMI '{label}' is {r}x{c}, not square")));
        }
        let scale = expr.constant_part().amax().max(1.0);
        if expr.asymmetry() > 1e-9 * scale {
            return Err(Error::InvalidInput(format!("LMI '{label}' is not symmetric")));
        }
        self.check_vars(&expr, &label)?;
        if r > 0 {
            self.lmis.push(Lmi { label, expr, strict });
        }
        Ok(())
    }

    pub fn add_scalar_le(&mut self, label: impl Into<String>, expr: AffineMatrix, strict: bool) -> Result<()> {
        let label = label.into();
        if expr.shape() != (1, 1) {
            return Err(Error::Dimension(format!("scalar constraint '{label}' is not 1x1")));
        }
        self.check_vars(&expr, &label)?;
        self.scalars.push(ScalarConstraint { label, expr, strict });
        Ok(())
    }

    fn check_vars(&self, expr: &AffineMatrix, label: &str) -> Result<()> {
        match expr.max_var() {
            Some(k) if k >= self.n_vars => Err(Error::InvalidInput(format!(
                "constraint '{label}' references unknown {k} of {}",
                self.n_vars
            ))),
            _ => Ok(()),
        }
    }

    pub fn add_linear_objective(&mut self, var: VarId, coef: f64) {
        self.linear[var] += coef;
    }

    /// Adds `(w/2)·(x - c)²`.
    pub fn add_proximal_scalar(&mut self, var: VarId, w: f64, center: f64) {
        self.quad_diag[var] += w;
        self.linear[var] -= w * center;
        self.offset += 0.5 * w * center * center;
    }

    /// Adds `(w/2)·‖X - C‖_F²` for a symmetric unknown.
    pub fn add_proximal_sym(&mut self, var: SymVar, w: f64, center: &DMatrix<f64>) {
        for b in 0..var.dim() {
            for a in 0..=b {
                // off-diagonal entries appear twice in the Frobenius norm
                let mult = if a == b { 1.0 } else { 2.0 };
                self.add_proximal_scalar(var.id(a, b), mult * w, 0.5 * (center[(a, b)] + center[(b, a)]));
            }
        }
    }

    pub fn unknowns(&self) -> &[Unknown] {
        &self.unknowns
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn linear_objective(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic_diagonal(&self) -> &[f64] {
        &self.quad_diag
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }

    pub fn scalar_constraints(&self) -> &[ScalarConstraint] {
        &self.scalars
    }

    pub fn strictness_margin(&self) -> f64 {
        self.strictness_margin
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.linear.iter().zip(&self.quad_diag))
            .map(|(&xi, (&c, &h))| c * xi + 0.5 * h * xi * xi)
            .sum::<f64>()
            + self.offset
    }

    /// Largest violation `λ_max(F(x)) (+ε)` over all constraints, clipped at 0.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraint_residuals(x)
            .into_iter()
            .map(|(_, v)| v)
            .fold(0.0, f64::max)
    }

    /// `(label, λ_max(F(x)) + margin)` for every constraint; nonpositive means satisfied.
    pub fn constraint_residuals(&self, x: &[f64]) -> Vec<(String, f64)> {
        let eps = self.strictness_margin;
        let mut out = Vec::with_capacity(self.lmis.len() + self.scalars.len());
        for l in &self.lmis {
            let m = l.expr.eval(x);
            let v = super::eig::max_eigenvalue(&m) + if l.strict { eps } else { 0.0 };
            out.push((l.label.clone(), v));
        }
        for s in &self.scalars {
            let v = s.expr.eval(x)[(0, 0)] + if s.strict { eps } else { 0.0 };
            out.push((s.label.clone(), v));
        }
        out
    }
}
