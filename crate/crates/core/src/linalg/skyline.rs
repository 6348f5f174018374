//! Envelope (skyline) Cholesky factorization `A = L Lᵀ`.
//!
//! Row `i` of `L` is stored densely from its first structural nonzero to the
//! diagonal. Fill stays inside that envelope, which for the lexicographically
//! numbered box meshes is a band of width ≈ 3 (nx+1)(ny+1).

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.triplets() {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            first[r] = first[r].min(c);
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (i, j, v) in a.triplets() {
            if j <= i {
                data[offset[i] + j - first[i]] = v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[offset[j]..offset[j + 1]];
                let start = fi.max(fj);
                let li = &row_i[start - fi..j - fi];
                let lj = &row_j[start - fj..j - fj];
                let s: f64 = li.iter().zip(lj).map(|(a, b)| a * b).sum();
                let diag_j = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / diag_j;
            }
            let s: f64 = row_i[..i - fi].iter().map(|v| v * v).sum();
            let d = row_i[i - fi] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Definiteness(format!("non-positive pivot {d:e} at row {i}")));
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self { n, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offset[i]..self.offset[i + 1]]
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.row(i);
            let s: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / row[i - fi];
        }
        // Lᵀ x = y, column sweep over the rows of L
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            b[i] /= row[i - fi];
            let xi = b[i];
            for (bj, l) in b[fi..i].iter_mut().zip(&row[..i - fi]) {
                *bj -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
