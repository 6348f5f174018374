//! Eigenvalue branches along a straight permittivity path.

use nalgebra::DMatrix;
use serde::Serialize;

use super::sensitivity::{branch_slopes, discrete_cluster_matrix, discrete_eigenvalue_derivative};
use super::CavityProblem;
use crate::eigensolve::{cluster_ranges, solve_gsym_with, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::material::PermittivityField;

/// `t ↦ base + t·direction`
#[derive(Debug, Clone)]
pub struct LinearPath {
    pub base: PermittivityField,
    pub direction: PermittivityField,
}

impl LinearPath {
    pub fn new(base: PermittivityField, direction: PermittivityField) -> Self {
        Self { base, direction }
    }

    pub fn at(&self, t: f64) -> PermittivityField {
        if t == 0.0 {
            self.base.clone()
        } else {
            self.base.plus(t, &self.direction)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    /// Sorted positions (from 0) of the tracked pairs at the first grid point.
    pub window: std::ops::Range<usize>,
    pub solver: SolverOptions,
    /// Relative spread below which values share one first-order matrix;
    /// anything wider is resolved by the solver and differentiated singly.
    pub degenerate_tol: f64,
    /// Largest accepted prediction error as a fraction of the local gap.
    pub safety: f64,
}

impl TrackOptions {
    pub fn new(window: std::ops::Range<usize>) -> Self {
        Self { window, solver: SolverOptions::default(), degenerate_tol: 1e-8, safety: 0.4 }
    }
}

/// Values and slopes of each branch on the grid; `values[b][i]` is branch
/// `b` at `t[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchCurves {
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
    /// The window of sorted values at each grid point.
    pub sorted: Vec<Vec<f64>>,
}

impl BranchCurves {
    pub fn branch_count(&self) -> usize {
        self.values.len()
    }

    /// Central difference of branch `b` between grid points `i − 1` and `i + 1`.
    pub fn central_slope(&self, b: usize, i: usize) -> Option<f64> {
        if i == 0 || i + 1 >= self.t.len() {
            return None;
        }
        Some((self.values[b][i + 1] - self.values[b][i - 1]) / (self.t[i + 1] - self.t[i - 1]))
    }
}

/// Sorted window values and their slopes at one grid point. Slopes of a
/// cluster are the eigenvalues of its first-order matrix, so they are only
/// known as a sorted set.
struct Sample {
    values: Vec<f64>,
    clusters: Vec<std::ops::Range<usize>>,
    cluster_slopes: Vec<Vec<f64>>,
}

fn sample(problem: &CavityProblem, path: &LinearPath, t: f64, opts: &TrackOptions) -> Result<Sample> {
    let p = problem.with_eps(path.at(t))?;
    let pencil = p.pencil()?;
    let k = (opts.window.end + 1).min(pencil.dim());
    let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, k, &opts.solver)?;
    let (dp, dm) = p.perturbation(&path.direction, &pencil)?;
    let values = sol.values[opts.window.clone()].to_vec();
    let vectors = &sol.vectors[opts.window.clone()];
    let clusters = cluster_ranges(&values, opts.degenerate_tol);
    let cluster_slopes = clusters
        .iter()
        .map(|r| {
            if r.len() == 1 {
                vec![discrete_eigenvalue_derivative(p.tau, values[r.start], &vectors[r.start], &dp, &dm)]
            } else {
                let mean = values[r.clone()].iter().sum::<f64>() / r.len() as f64;
                let m: DMatrix<f64> = discrete_cluster_matrix(p.tau, mean, &vectors[r.clone()], &dp, &dm);
                branch_slopes(&m)
            }
        })
        .collect();
    Ok(Sample { values, clusters, cluster_slopes })
}

fn sorted_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx
}

/// Slopes for each sorted position; inside a cluster the sorted set is
/// handed out in the order of the `incoming` slopes of the branches that
/// occupy the cluster.
fn assign_slopes(s: &Sample, incoming: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; s.values.len()];
    for (r, slopes) in s.clusters.iter().zip(&s.cluster_slopes) {
        match incoming {
            Some(inc) if r.len() > 1 => {
                let order = sorted_order(&inc[r.clone()]);
                for (rank, &local) in order.iter().enumerate() {
                    out[r.start + local] = slopes[rank];
                }
            }
            _ => out[r.clone()].copy_from_slice(slopes),
        }
    }
    out
}

/// Follows the window of sorted pairs along `grid` (increasing). Each step
/// predicts `g_b(t_{i+1}) = g_b(t_i) + g_b'(t_i)Δt` and matches sorted
/// predictions to sorted values, so branches may cross between grid points.
/// A prediction off by more than `safety` times the local gap aborts.
pub fn track_branches(
    problem: &CavityProblem,
    path: &LinearPath,
    grid: &[f64],
    opts: &TrackOptions,
) -> Result<BranchCurves> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("t-grid needs at least two strictly increasing points"));
    }
    if opts.window.is_empty() {
        return Err(invalid("empty branch window"));
    }
    let nb = opts.window.len();
    let first = sample(problem, path, grid[0], opts)?;
    let mut values: Vec<Vec<f64>> = first.values.iter().map(|&v| vec![v]).collect();
    let mut slope_now = assign_slopes(&first, None);
    let mut slopes: Vec<Vec<f64>> = slope_now.iter().map(|&s| vec![s]).collect();
    let mut sorted = vec![first.values.clone()];
    // position[b] = sorted position of branch b at the current grid point
    let mut position: Vec<usize> = (0..nb).collect();
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let s = sample(problem, path, w[1], opts)?;
        let pred: Vec<f64> = (0..nb).map(|b| values[b].last().unwrap() + slope_now[position[b]] * dt).collect();
        let order = sorted_order(&pred);
        let scale = s.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (rank, &b) in order.iter().enumerate() {
            let v = s.values[rank];
            let gap = [rank.checked_sub(1).map(|j| s.values[j]), s.values.get(rank + 1).copied()]
                .into_iter()
                .flatten()
                .map(|u| (u - v).abs())
                .filter(|g| *g > opts.degenerate_tol * scale)
                .fold(f64::INFINITY, f64::min);
            let miss = (pred[b] - v).abs();
            if gap.is_finite() && miss > opts.safety * gap {
                return Err(Error::Tracking {
                    t: w[1],
                    reason: format!("branch {b} predicted {:.6e}, nearest value {v:.6e}, local gap {gap:.3e}", pred[b]),
                });
            }
            position[b] = rank;
        }
        let mut incoming = vec![0.0; nb];
        for b in 0..nb {
            incoming[position[b]] = slopes[b].last().copied().unwrap();
        }
        slope_now = assign_slopes(&s, Some(&incoming));
        for b in 0..nb {
            values[b].push(s.values[position[b]]);
            slopes[b].push(slope_now[position[b]]);
        }
        sorted.push(s.values);
    }
    Ok(BranchCurves { t: grid.to_vec(), values, slopes, sorted })
}
