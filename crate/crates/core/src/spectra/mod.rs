//! Spectrum of the penalized problem split into its Maxwell and gradient
//! families, and the perturbation analysis built on it.
//!
//! For a box the penalized eigenvalues are the Maxwell eigenvalues `λ`
//! together with `τρ` for the Dirichlet eigenvalues `ρ` of `−div(ε∇·)`.
//! A computed pair is labeled by two observables: whether `σ/τ` matches a
//! computed `ρ`, and the ε-divergence residual `r = ‖div(εu)‖/‖u‖_ε`,
//! which vanishes for Maxwell fields and equals `√ρ` for gradients.

mod lipschitz;
mod sensitivity;
mod splitting;
mod tracking;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use lipschitz::{lipschitz_ratio, penalized_eigenvalue};
pub use sensitivity::{
    branch_slopes, central_difference, central_differences, discrete_cluster_matrix, discrete_eigenvalue_derivative,
    discrete_symmetric_derivative, rellich_nagy_matrix, symmetric_coefficients, symmetric_function,
    symmetric_function_derivative, symmetric_weights, ClusterPartition, FdEstimate,
};
pub use splitting::{
    candidate_directions, genericity_search, scalar_directions, split_cluster, split_cluster_with, GenericityResult,
    GenericityStep, SplitCandidate, SplitOptions, SplitResult,
};
pub use tracking::{track_branches, BranchCurves, LinearPath, TrackOptions};

use crate::assembly::{assemble_pencil, assemble_pencil_derivative, OperatorPencil};
use crate::eigensolve::{cluster_ranges, solve_dirichlet_scalar, solve_gsym_with, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_box_mesh, Mesh, QuadratureRule};
use crate::linalg::CsrMatrix;
use crate::material::{audit_admissibility, PermittivityField};

/// Mesh, quadrature, permittivity and penalty parameter of one discrete
/// problem.
#[derive(Debug, Clone)]
pub struct CavityProblem {
    pub mesh: Mesh,
    pub rule: QuadratureRule,
    pub eps: PermittivityField,
    pub tau: f64,
}

impl CavityProblem {
    /// Checks `τ > 0` and audits the coercivity of ε.
    pub fn new(mesh: Mesh, rule: QuadratureRule, eps: PermittivityField, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        audit_admissibility(&eps, &mesh, &rule)?;
        Ok(Self { mesh, rule, eps, tau })
    }

    pub fn with_eps(&self, eps: PermittivityField) -> Result<Self> {
        Self::new(self.mesh.clone(), self.rule.clone(), eps, self.tau)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.mesh.clone(), self.rule.clone(), self.eps.clone(), tau)
    }

    pub fn pencil(&self) -> Result<OperatorPencil> {
        assemble_pencil(&self.mesh, &self.rule, &self.eps, self.tau)
    }

    /// Reduced `(P'[η], M'[η])` at the current ε.
    pub fn perturbation(&self, eta: &PermittivityField, pencil: &OperatorPencil) -> Result<(CsrMatrix, CsrMatrix)> {
        assemble_pencil_derivative(&self.mesh, &self.rule, &self.eps, eta, &pencil.dof_map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Maxwell,
    Gradient,
    Ambiguous,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Maxwell => "maxwell",
            Family::Gradient => "gradient",
            Family::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOptions {
    pub k: usize,
    pub solver: SolverOptions,
    /// Consecutive values with relative gap below this form one cluster.
    pub cluster_tol: f64,
    /// Largest ε-divergence residual of a Maxwell pair.
    pub r_max: f64,
    /// Relative tolerance of `|σ − τρ| ≤ match_tol·σ`.
    pub match_tol: f64,
    /// τ multiplier of the disambiguation re-run.
    pub tau_shift: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { k: 12, solver: SolverOptions::default(), cluster_tol: 1e-3, r_max: 0.1, match_tol: 0.02, tau_shift: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub sigma: f64,
    pub label: Family,
    pub div_residual: f64,
    /// Dirichlet value with `|σ − τρ| ≤ match_tol·σ`, if any.
    pub matched_rho: Option<f64>,
    pub cluster_id: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub tau: f64,
    pub entries: Vec<SpectrumEntry>,
    /// M-orthonormal reduced eigenvectors, aligned with `entries`.
    pub vectors: Vec<Vec<f64>>,
    pub clusters: Vec<Vec<usize>>,
    pub dirichlet: Vec<f64>,
    /// True when `dirichlet` holds every discrete Dirichlet value.
    pub dirichlet_complete: bool,
    pub gram_error: f64,
    pub pencil: Arc<OperatorPencil>,
}

/// JSON view of a spectrum with fixed field names.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub tau: f64,
    pub values: Vec<f64>,
    pub labels: Vec<Family>,
    pub div_residuals: Vec<f64>,
    pub residuals: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub dirichlet: Vec<f64>,
    pub gram_error: f64,
}

/// One cluster of Maxwell-labeled pairs.
#[derive(Debug, Clone)]
pub struct MaxwellCluster {
    /// Mean of the member values.
    pub value: f64,
    /// Positions in the Maxwell subsequence.
    pub maxwell_indices: Vec<usize>,
    /// Positions in `Spectrum::entries`.
    pub entry_indices: Vec<usize>,
}

impl MaxwellCluster {
    pub fn multiplicity(&self) -> usize {
        self.maxwell_indices.len()
    }
}

impl Spectrum {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.sigma).collect()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            tau: self.tau,
            values: self.values(),
            labels: self.entries.iter().map(|e| e.label).collect(),
            div_residuals: self.entries.iter().map(|e| e.div_residual).collect(),
            residuals: self.entries.iter().map(|e| e.residual).collect(),
            clusters: self.clusters.clone(),
            dirichlet: self.dirichlet.clone(),
            gram_error: self.gram_error,
        }
    }

    pub fn ambiguous(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].label == Family::Ambiguous).collect()
    }

    /// Entry positions of the Maxwell-labeled pairs.
    pub fn maxwell_positions(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].label == Family::Maxwell).collect()
    }

    pub fn gradient_values(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| e.label == Family::Gradient).map(|e| e.sigma).collect()
    }

    /// Maxwell pairs grouped by relative gap `< cluster_tol·max(1, λ)`.
    pub fn maxwell_clusters(&self, cluster_tol: f64) -> Vec<MaxwellCluster> {
        let pos = self.maxwell_positions();
        let values: Vec<f64> = pos.iter().map(|&i| self.entries[i].sigma).collect();
        cluster_ranges(&values, cluster_tol)
            .into_iter()
            .map(|r| MaxwellCluster {
                value: values[r.clone()].iter().sum::<f64>() / r.len() as f64,
                maxwell_indices: r.clone().collect(),
                entry_indices: pos[r].to_vec(),
            })
            .collect()
    }

    pub fn vectors_of(&self, entry_indices: &[usize]) -> Vec<Vec<f64>> {
        entry_indices.iter().map(|&i| self.vectors[i].clone()).collect()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `k` smallest penalized pairs, classified, with enough Dirichlet values
/// computed to cover `σ_max/τ`.
pub fn compute_spectrum(problem: &CavityProblem, opts: &SpectrumOptions) -> Result<Spectrum> {
    let pencil = problem.pencil()?;
    let k = opts.k.min(pencil.dim());
    let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, k, &opts.solver)?;
    let sigma_max = sol.values.last().copied().unwrap_or(0.0);
    let (dirichlet, dirichlet_complete) =
        dirichlet_cover(problem, sigma_max / problem.tau * (1.0 + opts.match_tol), k, &opts.solver)?;
    let mut spectrum = Spectrum {
        tau: problem.tau,
        entries: sol
            .values
            .iter()
            .zip(&sol.residuals)
            .map(|(&sigma, &residual)| SpectrumEntry {
                sigma,
                label: Family::Ambiguous,
                div_residual: f64::NAN,
                matched_rho: None,
                cluster_id: 0,
                residual,
            })
            .collect(),
        vectors: sol.vectors,
        clusters: Vec::new(),
        dirichlet,
        dirichlet_complete,
        gram_error: sol.gram_error,
        pencil: Arc::new(pencil),
    };
    classify(&mut spectrum, opts)?;
    Ok(spectrum)
}

/// Dirichlet eigenvalues up to at least `rho_needed` (or all of them, in
/// which case the flag is set).
fn dirichlet_cover(
    problem: &CavityProblem,
    rho_needed: f64,
    start: usize,
    solver: &SolverOptions,
) -> Result<(Vec<f64>, bool)> {
    let interior: usize = problem.mesh.subdivisions().iter().map(|&n| n.saturating_sub(1)).product();
    if interior == 0 {
        return Ok((Vec::new(), true));
    }
    let mut kd = start.clamp(4, interior);
    loop {
        let d = solve_dirichlet_scalar(&problem.mesh, &problem.rule, &problem.eps, kd, solver)?;
        let top = d.values.last().copied().unwrap_or(0.0);
        if top >= rho_needed || kd == interior {
            return Ok((d.values, kd == interior));
        }
        kd = (2 * kd).min(interior);
    }
}

/// Relative spread below which a computed cluster counts as one eigenspace.
const DEGENERATE_TOL: f64 = 1e-8;

/// Fills labels, residuals and clusters. Inside a cluster whose penalty
/// form separates small and large residuals the vectors are first rotated
/// to diagonalize that form, so mixed Maxwell/gradient eigenspaces are
/// split into their families; the labels do not depend on the basis the
/// solver happened to return. Clusters of distinct values keep their
/// vectors.
pub fn classify(spectrum: &mut Spectrum, opts: &SpectrumOptions) -> Result<()> {
    let values = spectrum.values();
    let tau = spectrum.tau;
    if let Some(&sigma_max) = values.last() {
        let covered = spectrum.dirichlet.last().copied().unwrap_or(0.0);
        let needed = sigma_max / tau;
        if covered * (1.0 + opts.match_tol) < needed && !spectrum.dirichlet_complete {
            return Err(Error::Coverage { covered, needed });
        }
    }
    let p = &spectrum.pencil.p;
    spectrum.clusters.clear();
    for (cid, range) in cluster_ranges(&values, opts.cluster_tol).into_iter().enumerate() {
        let c = range.len();
        let vs = &spectrum.vectors[range.clone()];
        let pv: Vec<Vec<f64>> = vs.iter().map(|v| p.mul_vec(v)).collect();
        let form = DMatrix::from_fn(c, c, |i, j| 0.5 * (dot(&vs[i], &pv[j]) + dot(&vs[j], &pv[i])));
        let diag: Vec<f64> = (0..c).map(|i| form[(i, i)].max(0.0).sqrt()).collect();
        let eig = SymmetricEigen::new(form.clone());
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rotated_r: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        // only an exactly degenerate eigenspace may be rotated without
        // losing the eigenvector property
        let degenerate =
            values[range.end - 1] - values[range.start] <= DEGENERATE_TOL * values[range.start].abs().max(1.0);
        let mixed = c > 1 && degenerate && rotated_r[0] <= opts.r_max && rotated_r[c - 1] > opts.r_max;
        let residuals = if mixed {
            let new: Vec<Vec<f64>> = order
                .iter()
                .map(|&col| {
                    let y = eig.eigenvectors.column(col);
                    let mut out = vec![0.0; vs[0].len()];
                    for (v, &w) in vs.iter().zip(y.iter()) {
                        for (o, x) in out.iter_mut().zip(v) {
                            *o += w * x;
                        }
                    }
                    out
                })
                .collect();
            for (slot, v) in spectrum.vectors[range.clone()].iter_mut().zip(new) {
                *slot = v;
            }
            rotated_r
        } else {
            diag
        };
        for (offset, i) in range.clone().enumerate() {
            let e = &mut spectrum.entries[i];
            e.cluster_id = cid;
            e.div_residual = residuals[offset];
            e.matched_rho = spectrum
                .dirichlet
                .iter()
                .copied()
                .filter(|&rho| (e.sigma - tau * rho).abs() <= opts.match_tol * e.sigma.abs())
                .min_by(|a, b| (e.sigma - tau * a).abs().total_cmp(&(e.sigma - tau * b).abs()));
            let small = e.div_residual <= opts.r_max;
            let matched = e.matched_rho.is_some();
            e.label = match (matched, small) {
                (true, false) => Family::Gradient,
                (false, true) => Family::Maxwell,
                _ => Family::Ambiguous,
            };
        }
        spectrum.clusters.push(range.collect());
    }
    Ok(())
}

/// Re-runs with `τ·tau_shift` (up to three times) and relabels ambiguous
/// entries: Maxwell values stay put when τ changes, gradient values move.
pub fn resolve_ambiguity(problem: &CavityProblem, spectrum: &Spectrum, opts: &SpectrumOptions) -> Result<Spectrum> {
    let mut out = spectrum.clone();
    let mut tau = problem.tau;
    for _ in 0..3 {
        let pending = out.ambiguous();
        if pending.is_empty() {
            break;
        }
        tau *= opts.tau_shift;
        let shifted_problem = problem.with_tau(tau)?;
        let sigma_max = out.entries.last().map(|e| e.sigma).unwrap_or(0.0);
        let reach = sigma_max * (1.0 + opts.match_tol);
        let (rho, _) = dirichlet_cover(&shifted_problem, reach / tau, opts.k, &opts.solver)?;
        let extra = rho.iter().filter(|&&r| tau * r <= reach).count();
        let shifted_opts = SpectrumOptions { k: out.entries.len() + extra + 3, ..opts.clone() };
        let shifted = compute_spectrum(&shifted_problem, &shifted_opts)?;
        let top = shifted.entries.last().map(|e| e.sigma).unwrap_or(0.0);
        let exhausted = shifted.entries.len() == shifted.pencil.dim();
        let mut clusters: Vec<usize> = pending.iter().map(|&i| out.entries[i].cluster_id).collect();
        clusters.dedup();
        for cid in clusters {
            let members = out.clusters[cid].clone();
            let center = members.iter().map(|&i| out.entries[i].sigma).sum::<f64>() / members.len() as f64;
            let window = 0.5 * opts.match_tol * center.abs();
            if top < center + window && !exhausted {
                continue;
            }
            // gradient values move with τ and keep a large residual, so a
            // nearby small-residual value of the shifted run is a Maxwell pair
            // even where its own τρ match is ambiguous
            let near = |e: &&SpectrumEntry| (e.sigma - center).abs() <= window;
            let persistent = shifted.entries.iter().filter(near).filter(|e| e.div_residual <= opts.r_max).count();
            let known = members.iter().filter(|&&i| out.entries[i].label == Family::Maxwell).count();
            let mut budget = persistent.saturating_sub(known);
            let mut ambiguous: Vec<usize> =
                members.iter().copied().filter(|&i| out.entries[i].label == Family::Ambiguous).collect();
            ambiguous.sort_by(|&a, &b| out.entries[a].div_residual.total_cmp(&out.entries[b].div_residual));
            for i in ambiguous {
                out.entries[i].label = if budget > 0 && out.entries[i].div_residual <= opts.r_max {
                    budget -= 1;
                    Family::Maxwell
                } else {
                    Family::Gradient
                };
            }
        }
    }
    Ok(out)
}

/// `compute_spectrum` followed by `resolve_ambiguity`.
pub fn compute_resolved_spectrum(problem: &CavityProblem, opts: &SpectrumOptions) -> Result<Spectrum> {
    let s = compute_spectrum(problem, opts)?;
    if s.ambiguous().is_empty() {
        return Ok(s);
    }
    resolve_ambiguity(problem, &s, opts)
}

/// Resolved spectrum whose window holds at least `count` Maxwell pairs,
/// doubling `k` as needed (or all pairs of a small pencil).
pub fn compute_maxwell_window(problem: &CavityProblem, count: usize, opts: &SpectrumOptions) -> Result<Spectrum> {
    let mut o = opts.clone();
    loop {
        let s = compute_resolved_spectrum(problem, &o)?;
        if s.maxwell_positions().len() >= count || s.entries.len() < o.k {
            return Ok(s);
        }
        o.k *= 2;
    }
}

/// The Maxwell-labeled subsequence, in nondecreasing order.
pub fn maxwell_eigenvalues(spectrum: &Spectrum) -> Result<Vec<f64>> {
    let amb = spectrum.ambiguous();
    if !amb.is_empty() {
        return Err(Error::NeedsTauShift(amb));
    }
    Ok(spectrum.maxwell_positions().iter().map(|&i| spectrum.entries[i].sigma).collect())
}

/// `λ = m₁² + m₂² + m₃²` over mode triples of the cube `(0,π)³` with at most
/// one zero index, each counted with its number of independent fields.
pub fn cube_maxwell_oracle(count: usize) -> Vec<f64> {
    box_maxwell_oracle([std::f64::consts::PI; 3], count)
}

/// Maxwell eigenvalues `Σ (m_i π / L_i)²` of a box: triples with one zero
/// index carry one field, triples without zeros carry two.
pub fn box_maxwell_oracle(extent: [f64; 3], count: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let top = 2 * count + 4;
    for a in 0..=top {
        for b in 0..=top {
            for c in 0..=top {
                let zeros = [a, b, c].iter().filter(|&&m| m == 0).count();
                let mult = match zeros {
                    0 => 2,
                    1 => 1,
                    _ => 0,
                };
                let lam: f64 =
                    [a, b, c].iter().zip(extent).map(|(&m, l)| (m as f64 * std::f64::consts::PI / l).powi(2)).sum();
                out.extend(std::iter::repeat_n(lam, mult));
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.truncate(count);
    out
}

/// Dirichlet eigenvalues `Σ (m_i π / L_i)²`, `m_i ≥ 1`.
pub fn box_dirichlet_oracle(extent: [f64; 3], count: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let top = count + 2;
    for a in 1..=top {
        for b in 1..=top {
            for c in 1..=top {
                out.push(
                    [a, b, c].iter().zip(extent).map(|(&m, l)| (m as f64 * std::f64::consts::PI / l).powi(2)).sum(),
                );
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.truncate(count);
    out
}

/// Five times the median ε-divergence residual of the three lowest Maxwell
/// pairs of the unit cube `(0,π)³`, ε = I, on the given subdivisions.
///
/// Many low cube modes are solenoidal exactly on the grid (their residual
/// is rounding noise); those are skipped, so the median is taken over the
/// three lowest pairs with a residual above `1e-6`.
pub fn calibrate_r_max(subdivisions: [usize; 3], rule: &QuadratureRule, solver: &SolverOptions) -> Result<f64> {
    let mesh = build_box_mesh([std::f64::consts::PI; 3], subdivisions)?;
    // τ = 3 keeps every gradient value (≥ 9) above the 17 lowest Maxwell ones
    let problem = CavityProblem::new(mesh, rule.clone(), PermittivityField::identity(), 3.0)?;
    let opts = SpectrumOptions { k: 17, solver: solver.clone(), r_max: f64::INFINITY, ..SpectrumOptions::default() };
    let s = compute_spectrum(&problem, &opts)?;
    let mut r: Vec<f64> = s.entries.iter().map(|e| e.div_residual).filter(|&r| r > 1e-6).collect();
    r.truncate(3);
    if r.is_empty() {
        return Ok(SpectrumOptions::default().r_max);
    }
    r.sort_by(f64::total_cmp);
    Ok(5.0 * r[r.len() / 2])
}
