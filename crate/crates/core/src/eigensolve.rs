//! Generalized symmetric-definite eigensolver for the few smallest pairs of
//! `A u = σ M u`.
//!
//! Small problems go through a dense Cholesky reduction. Larger ones run a
//! restarted block Krylov iteration on `S = (A + M)⁻¹ M`, whose dominant
//! eigenvalues `μ = 1/(σ + 1)` belong to the smallest `σ`; the shifted
//! matrix is factored once by envelope Cholesky. Everything is sequential
//! and seeded, so identical inputs give bitwise identical output.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::assemble_scalar_pencil;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Mesh, QuadratureRule};
use crate::linalg::{CsrMatrix, SkylineCholesky};
use crate::material::PermittivityField;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_restarts: usize,
    /// Block size beyond `k`; must exceed the largest multiplicity near the
    /// top of the wanted window for clusters to converge together.
    pub extra_block: usize,
    /// Number of blocks in the Krylov basis `X, SX, …, S^{q−1}X`.
    pub krylov_depth: usize,
    pub seed: u64,
    /// Problems of at most this dimension are solved densely.
    pub dense_threshold: usize,
    /// Relative gap below which computed values are re-orthonormalized as
    /// one cluster.
    pub cluster_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_restarts: 300,
            extra_block: 10,
            krylov_depth: 6,
            seed: 0x5eed,
            dense_threshold: 500,
            cluster_tol: 1e-3,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSolution {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    /// `‖(A − σM)u‖₂ / max(‖Au‖₂, |σ|‖Mu‖₂)`
    pub residuals: Vec<f64>,
    /// `max |VᵀMV − I|`
    pub gram_error: f64,
    pub iterations: usize,
}

/// `μ = 1/(σ + 1)`
pub fn sigma_to_mu(sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("σ must be a finite non-negative number, got {sigma}")));
    }
    Ok(1.0 / (sigma + 1.0))
}

/// `σ = 1/μ − 1`
pub fn mu_to_sigma(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(invalid(format!("μ must lie in (0, 1], got {mu}")));
    }
    Ok(1.0 / mu - 1.0)
}

fn check_inputs(a: &CsrMatrix, m: &CsrMatrix, k: usize, tol: f64) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(invalid(format!(
            "dimension mismatch: A is {}x{}, M is {}x{}",
            a.nrows(),
            a.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    if k == 0 || k > n {
        return Err(invalid(format!("requested {k} eigenpairs of a {n}-dimensional pencil")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// The `k` algebraically smallest eigenpairs of `A u = σ M u`, with
/// M-orthonormal vectors.
pub fn solve_gsym(a: &CsrMatrix, m: &CsrMatrix, k: usize, tol: f64) -> Result<EigenSolution> {
    solve_gsym_with(a, m, k, &SolverOptions::with_tol(tol))
}

pub fn solve_gsym_with(a: &CsrMatrix, m: &CsrMatrix, k: usize, opts: &SolverOptions) -> Result<EigenSolution> {
    check_inputs(a, m, k, opts.tol)?;
    let n = a.nrows();
    let mut sol = if n <= opts.dense_threshold { solve_dense(a, m, k)? } else { solve_krylov(a, m, k, opts)? };
    finish(a, m, &mut sol, opts);
    let worst = sol.residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol || sol.gram_error > opts.tol {
        return Err(Error::Convergence {
            iterations: sol.iterations,
            worst: worst.max(sol.gram_error),
            residuals: sol.residuals,
        });
    }
    Ok(sol)
}

fn solve_dense(a: &CsrMatrix, m: &CsrMatrix, k: usize) -> Result<EigenSolution> {
    let ad = a.to_dense();
    let md = m.to_dense();
    let chol =
        md.clone().cholesky().ok_or_else(|| Error::Definiteness("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let x = l.solve_lower_triangular(&ad).expect("nonsingular factor");
    let c = l.solve_lower_triangular(&x.transpose()).expect("nonsingular factor");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        values.push(eig.eigenvalues[i]);
        let y = eig.eigenvectors.column(i).into_owned();
        let u = lt.solve_upper_triangular(&y).expect("nonsingular factor");
        vectors.push(u.as_slice().to_vec());
    }
    Ok(EigenSolution { values, vectors, residuals: vec![], gram_error: 0.0, iterations: 1 })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// M-orthonormal basis kept together with its image under M.
struct Basis {
    v: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
}

impl Basis {
    /// Two passes of classical Gram–Schmidt in the M inner product. Returns
    /// false when `w` is numerically dependent on the basis.
    fn push(&mut self, mut w: Vec<f64>, m: &CsrMatrix) -> Result<bool> {
        let mut mw = m.mul_vec(&w);
        let before = dot(&w, &mw);
        if !(before > 0.0) {
            if before == 0.0 && norm(&w) == 0.0 {
                return Ok(false);
            }
            return Err(Error::Definiteness(format!("non-positive M-norm² {before:e}")));
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.mv.iter().map(|mv| dot(mv, &w)).collect();
            for (c, v) in coeffs.iter().zip(&self.v) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        m.mul_vec_into(&w, &mut mw);
        let after = dot(&w, &mw);
        if !(after > 1e-20 * before) {
            if after < 0.0 && after.abs() > 1e-12 * before {
                return Err(Error::Definiteness(format!("non-positive M-norm² {after:e}")));
            }
            return Ok(false);
        }
        let s = 1.0 / after.sqrt();
        w.iter_mut().for_each(|x| *x *= s);
        mw.iter_mut().for_each(|x| *x *= s);
        self.v.push(w);
        self.mv.push(mw);
        Ok(true)
    }

    fn len(&self) -> usize {
        self.v.len()
    }
}

fn combine(vectors: &[Vec<f64>], coeffs: nalgebra::DVectorView<f64>) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, &c) in vectors.iter().zip(coeffs.iter()) {
        if c != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
    }
    out
}

fn solve_krylov(a: &CsrMatrix, m: &CsrMatrix, k: usize, opts: &SolverOptions) -> Result<EigenSolution> {
    let n = a.nrows();
    SkylineCholesky::factor(m).map_err(|e| match e {
        Error::Definiteness(msg) => Error::Definiteness(format!("mass matrix: {msg}")),
        other => other,
    })?;
    let t = SkylineCholesky::factor(&a.add_scaled(1.0, m))?;
    let p = (k + opts.extra_block).min(n);
    let depth = opts.krylov_depth.max(2);
    let max_basis = (p * depth).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut best: Option<EigenSolution> = None;

    for iter in 1..=opts.max_restarts.max(1) {
        let mut basis = Basis { v: Vec::with_capacity(max_basis), mv: Vec::with_capacity(max_basis) };
        let mut current: Vec<usize> = Vec::new();
        // Start from S·X rather than X: restarting from the Ritz vectors
        // themselves would freeze their high-σ rounding components.
        for mut w in block.drain(..) {
            w = m.mul_vec(&w);
            t.solve_in_place(&mut w);
            if basis.len() < max_basis && basis.push(w, m)? {
                current.push(basis.len() - 1);
            }
        }
        while basis.len() < max_basis && !current.is_empty() {
            let mut next = Vec::new();
            for &j in &current {
                if basis.len() >= max_basis {
                    break;
                }
                let mut w = basis.mv[j].clone();
                t.solve_in_place(&mut w);
                if basis.push(w, m)? {
                    next.push(basis.len() - 1);
                }
            }
            current = next;
        }

        let dim = basis.len();
        let av: Vec<Vec<f64>> = basis.v.iter().map(|v| a.mul_vec(v)).collect();
        let h = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (dot(&basis.v[i], &av[j]) + dot(&basis.v[j], &av[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let keep = p.min(dim);
        let mut values = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        let mut residuals = Vec::with_capacity(k);
        for (rank, &i) in order.iter().take(keep).enumerate() {
            let y = eig.eigenvectors.column(i);
            let u = combine(&basis.v, y);
            if rank < k {
                let au = combine(&av, y);
                let mu = combine(&basis.mv, y);
                let s = eig.eigenvalues[i];
                let r: Vec<f64> = au.iter().zip(&mu).map(|(x, y)| x - s * y).collect();
                let scale = norm(&au).max(s.abs() * norm(&mu)).max(f64::MIN_POSITIVE);
                residuals.push(norm(&r) / scale);
            }
            values.push(eig.eigenvalues[i]);
            vectors.push(u);
        }
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        let done = worst <= 0.5 * opts.tol || dim == n;
        if done || iter == opts.max_restarts.max(1) {
            values.truncate(k);
            vectors.truncate(k);
            return Ok(EigenSolution { values, vectors, residuals, gram_error: 0.0, iterations: iter });
        }
        let improved = best.as_ref().is_none_or(|b| worst < b.residuals.iter().cloned().fold(0.0, f64::max));
        if improved {
            best = Some(EigenSolution {
                values: values[..k].to_vec(),
                vectors: vectors[..k].to_vec(),
                residuals,
                gram_error: 0.0,
                iterations: iter,
            });
        }
        block = vectors;
    }
    Ok(best.expect("at least one restart"))
}

fn residual(a: &CsrMatrix, m: &CsrMatrix, s: f64, u: &[f64]) -> f64 {
    let au = a.mul_vec(u);
    let mu = m.mul_vec(u);
    let r: Vec<f64> = au.iter().zip(&mu).map(|(x, y)| x - s * y).collect();
    norm(&r) / norm(&au).max(s.abs() * norm(&mu)).max(f64::MIN_POSITIVE)
}

/// Clusters of consecutive values closer than `tol · max(1, |σ|)`.
pub(crate) fn cluster_ranges(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || (values[i] - values[i - 1]).abs() >= tol * values[i].abs().max(1.0);
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Löwdin re-orthonormalization inside clusters, sign convention, residuals
/// and Gram error.
fn finish(a: &CsrMatrix, m: &CsrMatrix, sol: &mut EigenSolution, opts: &SolverOptions) {
    for range in cluster_ranges(&sol.values, opts.cluster_tol) {
        if range.len() < 2 {
            let u = &mut sol.vectors[range.start];
            let s = 1.0 / m.quad_form(u).sqrt();
            u.iter_mut().for_each(|x| *x *= s);
            continue;
        }
        let vs = &sol.vectors[range.clone()];
        let mvs: Vec<Vec<f64>> = vs.iter().map(|v| m.mul_vec(v)).collect();
        let c = range.len();
        let g = DMatrix::from_fn(c, c, |i, j| 0.5 * (dot(&vs[i], &mvs[j]) + dot(&vs[j], &mvs[i])));
        let e = SymmetricEigen::new(g);
        let inv_sqrt = DVector::from_iterator(c, e.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
        let w = &e.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * e.eigenvectors.transpose();
        let rotated: Vec<Vec<f64>> = (0..c).map(|j| combine(vs, w.column(j))).collect();
        for (slot, v) in sol.vectors[range].iter_mut().zip(rotated) {
            *slot = v;
        }
    }
    for u in sol.vectors.iter_mut() {
        let mut imax = 0;
        for (i, x) in u.iter().enumerate() {
            if x.abs() > u[imax].abs() {
                imax = i;
            }
        }
        if u[imax] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
    sol.residuals = sol.values.iter().zip(&sol.vectors).map(|(&s, u)| residual(a, m, s, u)).collect();
    sol.gram_error = gram_error(m, &sol.vectors);
}

/// `max |VᵀMV − I|`
pub fn gram_error(m: &CsrMatrix, vectors: &[Vec<f64>]) -> f64 {
    let mv: Vec<Vec<f64>> = vectors.iter().map(|v| m.mul_vec(v)).collect();
    let mut err = 0.0f64;
    for i in 0..vectors.len() {
        for j in 0..vectors.len() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((dot(&vectors[i], &mv[j]) - target).abs());
        }
    }
    err
}

/// The `k` smallest eigenvalues `ρ` of `−div(ε∇f) = ρf` with `f = 0` on ∂Ω.
pub fn solve_dirichlet_scalar(
    mesh: &Mesh,
    rule: &QuadratureRule,
    eps: &PermittivityField,
    k: usize,
    opts: &SolverOptions,
) -> Result<EigenSolution> {
    let pencil = assemble_scalar_pencil(mesh, rule, eps);
    if pencil.free_nodes.is_empty() {
        return Err(invalid("mesh has no interior nodes"));
    }
    let k = k.min(pencil.free_nodes.len());
    solve_gsym_with(&pencil.k, &pencil.m, k, opts)
}
