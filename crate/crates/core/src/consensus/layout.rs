use nalgebra::{DMatrix, DVector};

use crate::symla::{svec, unsvec, ScalarVar, SdpProblem, SymVar};

/// One piece of a consensus vector.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Segment {
    /// `svec` of a symmetric unknown (off-diagonals scaled by √2).
    Sym(SymVar),
    Scalar(ScalarVar),
}

impl Segment {
    pub fn len(&self) -> usize {
        match self {
            Segment::Sym(v) => v.len(),
            Segment::Scalar(_) => 1,
        }
    }
}

/// Ordered unknowns whose stacked values form a consensus vector.
#[derive(Clone, Debug, Default)]
pub(crate) struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn extract(&self, x: &[f64]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        for seg in &self.segments {
            match seg {
                Segment::Sym(v) => out.extend(svec(&v.value(x)).iter()),
                Segment::Scalar(v) => out.push(v.value(x)),
            }
        }
        DVector::from_vec(out)
    }

    /// Adds `(w/2)‖vec − center‖²`.
    pub fn add_proximal(&self, p: &mut SdpProblem, w: f64, center: &DVector<f64>) {
        let mut off = 0;
        for seg in &self.segments {
            let k = seg.len();
            let c = &center.as_slice()[off..off + k];
            match seg {
                Segment::Sym(v) => p.add_proximal_sym(*v, w, &unsvec(v.dim(), c)),
                Segment::Scalar(v) => p.add_proximal_scalar(v.id(), w, c[0]),
            }
            off += k;
        }
    }

    /// Adds `ℓ‖vec‖²`.
    pub fn add_squared_norm(&self, p: &mut SdpProblem, ell: f64) {
        let zero = DVector::zeros(self.len());
        self.add_proximal(p, 2.0 * ell, &zero);
    }

    /// Adds `ℓ‖vec‖` through an epigraph variable `t ≥ ‖vec‖` written as the
    /// arrow inequality `[t I, vec; vecᵀ, t] ⪰ 0`.
    pub fn add_norm(&self, p: &mut SdpProblem, ell: f64, label: &str) -> crate::Result<()> {
        let m = self.len();
        if m == 0 {
            return Ok(());
        }
        let t = p.add_scalar(format!("{label}.epigraph"));
        p.add_linear_objective(t.id(), ell);
        let mut arrow = t.times(DMatrix::identity(m + 1, m + 1));
        let mut row = 0;
        for seg in &self.segments {
            let entries: Vec<(usize, f64)> = match seg {
                Segment::Sym(v) => {
                    let n = v.dim();
                    let mut e = Vec::with_capacity(v.len());
                    for j in 0..n {
                        for i in 0..=j {
                            let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                            e.push((v.id(i, j), w));
                        }
                    }
                    // svec order is the packed upper triangle
                    e.sort_by_key(|&(id, _)| id);
                    e
                }
                Segment::Scalar(v) => vec![(v.id(), 1.0)],
            };
            for (id, w) in entries {
                let mut coef = DMatrix::zeros(m + 1, m + 1);
                coef[(row, m)] = w;
                coef[(m, row)] = w;
                arrow = arrow + ScalarVar(id).times(coef);
                row += 1;
            }
        }
        p.add_lmi(format!("{label}.norm"), -arrow, false)
    }
}

/// `svec(I)` for a `dim × dim` identity.
pub(crate) fn svec_identity(dim: usize) -> DVector<f64> {
    svec(&DMatrix::identity(dim, dim))
}
