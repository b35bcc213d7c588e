//! Matrix expressions affine in the scalar unknowns of an SDP.
//!
//! An [`AffineMatrix`] is `C + Σⱼ xⱼ·Fⱼ` with constant `C` and coefficient
//! matrices `Fⱼ` keyed by unknown index. The usual products with constant
//! matrices, block assembly and congruences are closed on this form, which is
//! all the LMI builders need.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use super::sym::packed_index;
use crate::{Error, Result};

pub type VarId = usize;

/// A symmetric matrix unknown occupying `dim(dim+1)/2` consecutive scalar
/// unknowns, one per upper-triangle entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SymVar {
    offset: VarId,
    dim: usize,
}

impl SymVar {
    pub(crate) fn new(offset: VarId, dim: usize) -> Self {
        Self { offset, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn ids(&self) -> std::ops::Range<VarId> {
        self.offset..self.offset + self.len()
    }

    /// Unknown holding entry `(a, b)` (and `(b, a)`).
    pub fn id(&self, a: usize, b: usize) -> VarId {
        self.offset + packed_index(a, b)
    }

    pub fn expr(&self) -> AffineMatrix {
        let n = self.dim;
        let mut e = AffineMatrix::zeros(n, n);
        for b in 0..n {
            for a in 0..=b {
                let mut f = DMatrix::zeros(n, n);
                f[(a, b)] = 1.0;
                f[(b, a)] = 1.0;
                e.terms.insert(self.id(a, b), f);
            }
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| x[self.id(i, j)])
    }

    /// Writes `m` (assumed symmetric) into the unknown vector.
    pub fn store(&self, m: &DMatrix<f64>, x: &mut [f64]) {
        for b in 0..self.dim {
            for a in 0..=b {
                x[self.id(a, b)] = m[(a, b)];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScalarVar(pub(crate) VarId);

impl ScalarVar {
    pub fn id(&self) -> VarId {
        self.0
    }

    /// `coef·x` as a matrix expression.
    pub fn times(&self, coef: DMatrix<f64>) -> AffineMatrix {
        let mut e = AffineMatrix::zeros(coef.nrows(), coef.ncols());
        e.terms.insert(self.0, coef);
        e
    }

    pub fn expr(&self) -> AffineMatrix {
        self.times(DMatrix::from_element(1, 1, 1.0))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x[self.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    rows: usize,
    cols: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<VarId, DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: DMatrix::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, &DMatrix<f64>)> {
        self.terms.iter().map(|(&k, v)| (k, v))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest unknown index referenced, if any.
    pub fn max_var(&self) -> Option<VarId> {
        self.terms.keys().next_back().copied()
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        let constant = f(&self.constant);
        let terms = self.terms.iter().map(|(&k, v)| (k, f(v))).collect();
        let mut out = Self {
            rows: constant.nrows(),
            cols: constant.ncols(),
            constant,
            terms,
        };
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.terms.retain(|_, m| m.iter().any(|&v| v != 0.0));
    }

    /// `m · self`.
    pub fn lmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows, "lmul shape");
        self.map(|v| m * v)
    }

    /// `self · m`.
    pub fn rmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, m.nrows(), "rmul shape");
        self.map(|v| v * m)
    }

    /// `tᵀ · self · t`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Self {
        let tt = t.transpose();
        self.map(|v| &tt * v * t)
    }

    pub fn transpose(&self) -> Self {
        self.map(|v| v.transpose())
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| v * a)
    }

    /// Sub-block `[r0, r0+nr) × [c0, c0+nc)`.
    pub fn view(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        self.map(|v| v.view((r0, c0), (nr, nc)).into_owned())
    }

    /// Assembles a block matrix. Every row of blocks must share a row count
    /// and every column of blocks a column count.
    pub fn block(grid: &[Vec<AffineMatrix>]) -> Result<Self> {
        let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |b| b.rows)).collect();
        let ncols = grid.first().map_or(0, Vec::len);
        let widths: Vec<usize> = (0..ncols).map(|j| grid[0][j].cols).collect();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Dimension("ragged block grid".into()));
            }
            for (j, b) in row.iter().enumerate() {
                if b.rows != heights[i] || b.cols != widths[j] {
                    return Err(Error::Dimension(format!(
                        "block ({i},{j}) is {}x{}, expected {}x{}",
                        b.rows, b.cols, heights[i], widths[j]
                    )));
                }
            }
        }
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                out.constant
                    .view_mut((r0, c0), (heights[i], widths[j]))
                    .copy_from(&b.constant);
                for (&k, m) in &b.terms {
                    let entry = out
                        .terms
                        .entry(k)
                        .or_insert_with(|| DMatrix::zeros(rows, cols));
                    entry.view_mut((r0, c0), (heights[i], widths[j])).copy_from(m);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    /// Block-diagonal assembly of square or rectangular pieces.
    pub fn block_diag(parts: &[AffineMatrix]) -> Self {
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            out.constant.view_mut((r0, c0), (p.rows, p.cols)).copy_from(&p.constant);
            for (&k, m) in &p.terms {
                let entry = out.terms.entry(k).or_insert_with(|| DMatrix::zeros(rows, cols));
                entry.view_mut((r0, c0), (p.rows, p.cols)).copy_from(m);
            }
            r0 += p.rows;
            c0 += p.cols;
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (&k, f) in &self.terms {
            m += f * x[k];
        }
        m
    }

    /// Largest `|F - Fᵀ|` entry over the constant and every coefficient.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        std::iter::once(&self.constant)
            .chain(self.terms.values())
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    fn zip(mut self, rhs: &AffineMatrix, sign: f64) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "affine add shape");
        self.constant += &rhs.constant * sign;
        for (&k, m) in &rhs.terms {
            match self.terms.get_mut(&k) {
                Some(e) => *e += m * sign,
                None => {
                    self.terms.insert(k, m * sign);
                }
            }
        }
        self.prune();
        self
    }
}

impl Add for AffineMatrix {
    type Output = AffineMatrix;
    fn add(self, rhs: AffineMatrix) -> AffineMatrix {
        self.zip(&rhs, 1.0)
    }
}

impl Add<&AffineMatrix> for AffineMatrix {
    type Output = AffineMatrix;
    fn add(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.zip(rhs, 1.0)
    }
}

impl Sub for AffineMatrix {
    type Output = AffineMatrix;
    fn sub(self, rhs: AffineMatrix) -> AffineMatrix {
        self.zip(&rhs, -1.0)
    }
}

impl Sub<&AffineMatrix> for AffineMatrix {
    type Output = AffineMatrix;
    fn sub(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.zip(rhs, -1.0)
    }
}

impl Neg for AffineMatrix {
    type Output = AffineMatrix;
    fn neg(self) -> AffineMatrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for AffineMatrix {
    type Output = AffineMatrix;
    fn mul(self, a: f64) -> AffineMatrix {
        self.scale(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_var_roundtrip() {
        let v = SymVar::new(3, 3);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut x = vec![0.0; 10];
        v.store(&m, &mut x);
        assert_eq!(v.value(&x), m);
        assert_eq!(v.expr().eval(&x), m);
        assert_eq!(v.ids(), 3..9);
    }

    #[test]
    fn algebra_matches_evaluation() {
        let p = SymVar::new(0, 2);
        let g = ScalarVar(3);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let e = p.expr().lmul(&a.transpose()) + p.expr().rmul(&a) - g.times(DMatrix::identity(2, 2));
        let x = [1.0, 0.3, 2.0, 0.7];
        let pv = p.value(&x);
        let expect = a.transpose() * &pv + &pv * &a - DMatrix::<f64>::identity(2, 2) * 0.7;
        assert!((e.eval(&x) - expect).amax() < 1e-14);
        assert!(e.asymmetry() < 1e-15);
    }

    #[test]
    fn block_assembly() {
        let p = SymVar::new(0, 1);
        let b = AffineMatrix::block(&[
            vec![p.expr(), AffineMatrix::constant(DMatrix::from_element(1, 2, 1.0))],
            vec![
                AffineMatrix::constant(DMatrix::from_element(2, 1, 1.0)),
                AffineMatrix::identity(2),
            ],
        ])
        .unwrap();
        let m = b.eval(&[5.0]);
        assert_eq!(m[(0, 0)], 5.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(0, 2)], 1.0);
        assert!(AffineMatrix::block(&[vec![p.expr()], vec![AffineMatrix::identity(2)]]).is_err());
    }

    #[test]
    fn cancellation_prunes_terms() {
        let p = SymVar::new(0, 2);
        let e = p.expr() - p.expr();
        assert!(e.is_constant());
    }
}
