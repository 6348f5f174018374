//! Symmetric functions of clustered eigenvalues, their derivatives, branch
//! slopes of split clusters and finite-difference estimates.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::eigensolve::{cluster_ranges, gram_error};
use crate::error::{invalid, Error, Result};
use crate::linalg::CsrMatrix;

/// Elementary symmetric polynomial `e_s` of `values`.
pub fn symmetric_function(values: &[f64], s: usize) -> Result<f64> {
    if s == 0 || s > values.len() {
        return Err(invalid(format!("degree {s} outside 1..={}", values.len())));
    }
    let mut e = vec![0.0; s + 1];
    e[0] = 1.0;
    for &v in values {
        for d in (1..=s).rev() {
            e[d] += v * e[d - 1];
        }
    }
    Ok(e[s])
}

/// Partition of an index set `F` into blocks of (numerically) equal
/// eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    blocks: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl ClusterPartition {
    /// Blocks must be disjoint and non-empty.
    pub fn new(blocks: Vec<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        if blocks.len() != values.len() || blocks.is_empty() {
            return Err(invalid("one common value per non-empty block required"));
        }
        let mut seen: Vec<usize> = blocks.iter().flatten().copied().collect();
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != total || blocks.iter().any(|b| b.is_empty()) {
            return Err(invalid("partition blocks must be disjoint and non-empty"));
        }
        Ok(Self { blocks, values })
    }

    /// Groups sorted `values` (indexed `0..n`) by relative gap and uses the
    /// block means as common values.
    pub fn from_values(values: &[f64], cluster_tol: f64) -> Result<Self> {
        let ranges = cluster_ranges(values, cluster_tol);
        let means = ranges.iter().map(|r| values[r.clone()].iter().sum::<f64>() / r.len() as f64).collect();
        Self::new(ranges.into_iter().map(|r| r.collect()).collect(), means)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// The multiset `{λ_{F_k}}` with multiplicities.
    pub fn expanded_values(&self) -> Vec<f64> {
        self.blocks.iter().zip(&self.values).flat_map(|(b, &v)| std::iter::repeat_n(v, b.len())).collect()
    }

    /// `Λ_{F,s}`
    pub fn symmetric_function(&self, s: usize) -> Result<f64> {
        symmetric_function(&self.expanded_values(), s)
    }
}

fn poly_mul(a: &[f64], b: &[f64], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; (a.len() + b.len() - 1).min(cap + 1)];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if i + j <= cap {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Coefficients of `(1 + λz)^m`, truncated to degree `cap`.
fn binomial_poly(lambda: f64, m: usize, cap: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..m {
        p = poly_mul(&p, &[1.0, lambda], cap);
    }
    p
}

/// `g_k = ∂Λ_{F,s}/∂λ` for one eigenvalue of block `k`, i.e. `e_{s−1}` of
/// the multiset with one copy of `λ_{F_k}` removed.
pub fn symmetric_weights(partition: &ClusterPartition, s: usize) -> Result<Vec<f64>> {
    let n = partition.size();
    if s == 0 || s > n {
        return Err(invalid(format!("degree {s} outside 1..={n}")));
    }
    let blocks = partition.blocks();
    let values = partition.values();
    (0..blocks.len())
        .map(|k| {
            let mut p = vec![0.0, 1.0];
            for (j, (b, &v)) in blocks.iter().zip(values).enumerate() {
                let m = if j == k { b.len() - 1 } else { b.len() };
                p = poly_mul(&p, &binomial_poly(v, m, s), s);
            }
            Ok(p.get(s).copied().unwrap_or(0.0))
        })
        .collect()
}

/// `c_k = Σ binom(|F_k|−1, s_k−1) λ_k^{s_k} Π_{j≠k} binom(|F_j|, s_j) λ_j^{s_j}`
/// over `s_1 + … + s_n = s`, `s_k ≥ 1`; equals `λ_{F_k} g_k`.
pub fn symmetric_coefficients(partition: &ClusterPartition, s: usize) -> Result<Vec<f64>> {
    Ok(symmetric_weights(partition, s)?.iter().zip(partition.values()).map(|(g, v)| g * v).collect())
}

fn check_basis(m: &CsrMatrix, basis: &[Vec<f64>], tol: f64) -> Result<()> {
    let err = gram_error(m, basis);
    if !(err <= tol) {
        return Err(Error::Precondition(format!("basis is not M-orthonormal: Gram error {err:e}")));
    }
    Ok(())
}

fn check_bases(partition: &ClusterPartition, bases: &[Vec<Vec<f64>>], m: &CsrMatrix, tol: f64) -> Result<()> {
    if bases.len() != partition.blocks().len() {
        return Err(invalid("one basis per partition block required"));
    }
    for (b, basis) in partition.blocks().iter().zip(bases) {
        if b.len() != basis.len() {
            return Err(invalid(format!("block of size {} with {} basis vectors", b.len(), basis.len())));
        }
        check_basis(m, basis, tol)?;
    }
    Ok(())
}

/// `dΛ_{F,s}[η] = −Σ_k c_k Σ_{l∈F_k} ∫ η E_l·E_l`, where `m_eta` assembles
/// `∫ η φ·φ` and the bases are M-orthonormal per block.
pub fn symmetric_function_derivative(
    partition: &ClusterPartition,
    bases: &[Vec<Vec<f64>>],
    m: &CsrMatrix,
    m_eta: &CsrMatrix,
    s: usize,
    tol: f64,
) -> Result<f64> {
    check_bases(partition, bases, m, tol)?;
    let c = symmetric_coefficients(partition, s)?;
    Ok(-c.iter().zip(bases).map(|(ck, basis)| ck * basis.iter().map(|u| m_eta.quad_form(u)).sum::<f64>()).sum::<f64>())
}

/// `σ'[η] = uᵀ(τP'[η] − σM'[η])u` for an M-normalized eigenpair `(σ, u)`.
pub fn discrete_eigenvalue_derivative(tau: f64, sigma: f64, u: &[f64], dp: &CsrMatrix, dm: &CsrMatrix) -> f64 {
    tau * dp.quad_form(u) - sigma * dm.quad_form(u)
}

/// Derivative of `Λ_{F,s}` for the discrete pencil: block traces of
/// `τP' − σM'` weighted by `g_k`.
pub fn discrete_symmetric_derivative(
    partition: &ClusterPartition,
    bases: &[Vec<Vec<f64>>],
    sigmas: &[Vec<f64>],
    tau: f64,
    dp: &CsrMatrix,
    dm: &CsrMatrix,
    s: usize,
) -> Result<f64> {
    let g = symmetric_weights(partition, s)?;
    Ok(g.iter()
        .zip(bases.iter().zip(sigmas))
        .map(|(gk, (basis, sig))| {
            gk * basis
                .iter()
                .zip(sig)
                .map(|(u, &sigma)| discrete_eigenvalue_derivative(tau, sigma, u, dp, dm))
                .sum::<f64>()
        })
        .sum())
}

fn symmetric_gram(basis: &[Vec<f64>], a: &CsrMatrix, scale: f64) -> DMatrix<f64> {
    let av: Vec<Vec<f64>> = basis.iter().map(|u| a.mul_vec(u)).collect();
    let n = basis.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    DMatrix::from_fn(n, n, |i, j| scale * 0.5 * (dot(&basis[i], &av[j]) + dot(&basis[j], &av[i])))
}

/// `B_ij = −λ̃ ∫ η E_i·E_j` for an M-orthonormal basis of one cluster.
pub fn rellich_nagy_matrix(
    lambda: f64,
    basis: &[Vec<f64>],
    m: &CsrMatrix,
    m_eta: &CsrMatrix,
    tol: f64,
) -> Result<DMatrix<f64>> {
    if basis.is_empty() {
        return Err(invalid("empty cluster basis"));
    }
    check_basis(m, basis, tol)?;
    Ok(symmetric_gram(basis, m_eta, -lambda))
}

/// `uᵢᵀ(τP' − λ̃M')uⱼ`, the first-order matrix of the discrete pencil on
/// an exactly degenerate cluster.
pub fn discrete_cluster_matrix(
    tau: f64,
    lambda: f64,
    basis: &[Vec<f64>],
    dp: &CsrMatrix,
    dm: &CsrMatrix,
) -> DMatrix<f64> {
    symmetric_gram(basis, dp, tau) + symmetric_gram(basis, dm, -lambda)
}

/// Eigenvalues of a symmetric slope matrix, ascending.
pub fn branch_slopes(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Richardson-extrapolated central differences at a coarse and a fine
/// step, and how far the two disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdEstimate {
    pub t_coarse: f64,
    pub t_fine: f64,
    /// Plain central difference at `t_fine`.
    pub raw: f64,
    /// `(4D(t/2) − D(t))/3` at `t = t_coarse`.
    pub coarse: f64,
    /// The same at `t = t_fine`; the reported derivative.
    pub fine: f64,
    /// `|coarse − fine| / max(|fine|, floor)`
    pub disagreement: f64,
}

impl FdEstimate {
    /// The two estimates agree to the relative tolerance.
    pub fn is_consistent(&self, rel: f64) -> bool {
        self.disagreement <= rel
    }
}

/// Componentwise estimates for a vector-valued `f`, from evaluations at
/// `±t_coarse`, `±t_coarse/2`, `±t_fine` and `±t_fine/2`.
pub fn central_differences<F>(mut f: F, t_coarse: f64, t_fine: f64, floor: f64) -> Result<Vec<FdEstimate>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if !(t_coarse > t_fine && t_fine > 0.0) {
        return Err(invalid("need t_coarse > t_fine > 0"));
    }
    let mut d = |t: f64| -> Result<Vec<f64>> {
        let (p, m) = (f(t)?, f(-t)?);
        if p.len() != m.len() {
            return Err(invalid("evaluations changed length"));
        }
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * t)).collect())
    };
    let (c1, c2, f1, f2) = (d(t_coarse)?, d(0.5 * t_coarse)?, d(t_fine)?, d(0.5 * t_fine)?);
    if c1.len() != f1.len() {
        return Err(invalid("evaluations changed length"));
    }
    Ok((0..c1.len())
        .map(|i| {
            let coarse = (4.0 * c2[i] - c1[i]) / 3.0;
            let fine = (4.0 * f2[i] - f1[i]) / 3.0;
            FdEstimate {
                t_coarse,
                t_fine,
                raw: f1[i],
                coarse,
                fine,
                disagreement: (coarse - fine).abs() / fine.abs().max(floor),
            }
        })
        .collect())
}

/// Scalar form of [`central_differences`].
pub fn central_difference<F>(mut f: F, t_coarse: f64, t_fine: f64, floor: f64) -> Result<FdEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok(central_differences(|t| Ok(vec![f(t)?]), t_coarse, t_fine, floor)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(values: &[f64], s: usize) -> f64 {
        let n = values.len();
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == s)
            .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).map(|i| values[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn symmetric_functions_of_a_triple() {
        let v = [2.0, 2.0, 2.0];
        assert_eq!(symmetric_function(&v, 1).unwrap(), 6.0);
        assert_eq!(symmetric_function(&v, 2).unwrap(), 12.0);
        assert_eq!(symmetric_function(&v, 3).unwrap(), 8.0);
        assert!(symmetric_function(&v, 0).is_err());
        assert!(symmetric_function(&v, 4).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_function_matches_subset_enumeration(values in prop::collection::vec(-3.0f64..3.0, 1..=8), pick in 0usize..8) {
            let s = pick % values.len() + 1;
            let fast = symmetric_function(&values, s).unwrap();
            let slow = brute_force(&values, s);
            prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
            let all = symmetric_function(&values, values.len()).unwrap();
            let prod: f64 = values.iter().product();
            prop_assert!((all - prod).abs() <= 1e-12 * prod.abs().max(1.0));
        }

        #[test]
        fn weights_are_partial_derivatives(a in 0.5f64..4.0, b in 0.5f64..4.0, c in 0.5f64..4.0, s in 1usize..=6) {
            // blocks of sizes 3, 2, 1; d/dλ of e_s at one member by central differences
            let part = ClusterPartition::new(vec![vec![0, 1, 2], vec![3, 4], vec![5]], vec![a, b, c]).unwrap();
            let g = symmetric_weights(&part, s).unwrap();
            let vals = part.expanded_values();
            let h = 1e-5;
            for (k, first) in [(0usize, 0usize), (1, 3), (2, 5)] {
                let mut p = vals.clone();
                let mut m = vals.clone();
                p[first] += h;
                m[first] -= h;
                let fd = (symmetric_function(&p, s).unwrap() - symmetric_function(&m, s).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "k={} fd={} g={}", k, fd, g[k]);
            }
        }
    }

    #[test]
    fn coefficients_for_uniform_scaling() {
        // η = I on one cluster: every integral is 1, dΛ_{F,s} = −s Λ_{F,s}
        let part = ClusterPartition::new(vec![vec![0, 1, 2]], vec![2.0]).unwrap();
        for s in 1..=3 {
            let c = symmetric_coefficients(&part, s).unwrap();
            let lam = part.symmetric_function(s).unwrap();
            assert!((c[0] * 3.0 - s as f64 * lam).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(ClusterPartition::new(vec![vec![0, 1], vec![1]], vec![1.0, 2.0]).is_err());
        assert!(ClusterPartition::new(vec![vec![0]], vec![]).is_err());
        let p = ClusterPartition::from_values(&[2.0, 2.0, 3.0, 5.0, 5.0], 1e-3).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2], vec![3, 4]]);
        assert_eq!(p.size(), 5);
    }

    #[test]
    fn slope_matrices_reject_non_orthonormal_bases() {
        let m = CsrMatrix::identity(3);
        let basis = vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]];
        assert!(matches!(rellich_nagy_matrix(2.0, &basis, &m, &m, 1e-10), Err(Error::Precondition(_))));
        let good = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let b = rellich_nagy_matrix(2.0, &good, &m, &m, 1e-10).unwrap();
        assert_eq!(branch_slopes(&b), vec![-2.0, -2.0]);
    }

    #[test]
    fn richardson_removes_the_quadratic_error() {
        let f = |t: f64| -> Result<f64> { Ok((1.0 + t).powi(3)) };
        let fd = central_difference(f, 1e-2, 1e-3, 1.0).unwrap();
        assert!((fd.raw - 3.0).abs() > 1e-7);
        assert!((fd.fine - 3.0).abs() < 1e-12);
        assert!((fd.coarse - 3.0).abs() < 1e-12);
        assert!(fd.is_consistent(1e-10));
    }
}
