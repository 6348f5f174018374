//! Splitting multiple Maxwell eigenvalues by small diagonal perturbations,
//! and the iterated search for a nearby permittivity with simple spectrum.

use serde::Serialize;

use super::sensitivity::{branch_slopes, rellich_nagy_matrix};
use super::{compute_maxwell_window, CavityProblem, MaxwellCluster, Spectrum, SpectrumOptions};
use crate::eigensolve::{solve_gsym_with, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::BoxDomain;
use crate::material::{
    make_diagonal_direction, make_splitting_direction, w1inf_distance, Bump, PermittivityField, PerturbationDirection,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOptions {
    /// Largest admissible step `T`; the returned `t` is strictly below it.
    pub t_max: f64,
    /// Required pairwise gap, relative to `λ̃`.
    pub gap_min: f64,
    pub solver: SolverOptions,
    /// Gram error accepted for the cluster basis.
    pub gram_tol: f64,
    /// Step doublings tried when the first-order step falls short.
    pub max_doublings: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { t_max: 0.1, gap_min: 1e-3, solver: SolverOptions::default(), gram_tol: 1e-8, max_doublings: 6 }
    }
}

/// One dictionary direction with its first-order branch slopes.
#[derive(Debug, Clone, Serialize)]
pub struct SplitCandidate {
    pub index: usize,
    pub label: String,
    /// Ascending eigenvalues of `−λ̃ ∫ η E_i·E_j`.
    pub slopes: Vec<f64>,
    /// Smallest difference of consecutive slopes.
    pub min_slope_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitResult {
    pub candidate: SplitCandidate,
    #[serde(skip)]
    pub direction: PerturbationDirection,
    pub t: f64,
    #[serde(skip)]
    pub eps: PermittivityField,
    pub lambda: f64,
    /// `λ̃ + t·slope`, ascending.
    pub predicted: Vec<f64>,
    pub realized: Vec<f64>,
    pub predicted_gaps: Vec<f64>,
    pub realized_gaps: Vec<f64>,
    /// Realized values just below and above the cluster, when computed.
    pub neighbors: [Option<f64>; 2],
    pub candidates_tried: usize,
}

impl SplitResult {
    /// `max |realized gap / predicted gap − 1|`
    pub fn prediction_error(&self) -> f64 {
        self.predicted_gaps.iter().zip(&self.realized_gaps).map(|(p, r)| (r / p - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn centered_bump(domain: &BoxDomain) -> Bump {
    let e = domain.extent();
    Bump::new(e.map(|x| 0.5 * x), e.map(|x| 0.45 * x))
}

fn corner_bumps(domain: &BoxDomain) -> [Bump; 3] {
    let e = domain.extent();
    let at = |f: [f64; 3]| Bump::new(std::array::from_fn(|d| f[d] * e[d]), e.map(|x| 0.3 * x));
    [at([0.35, 0.35, 0.35]), at([0.65, 0.35, 0.35]), at([0.35, 0.65, 0.35])]
}

/// Deterministic dictionary: `η_h` (h = 1, 2, 3) with a centered bump, then
/// `η_h` with three corner-offset bumps, then diagonal directions with
/// unequal weights `(1, 0.6, 0.3)` on the same bumps. The weighted ones
/// split clusters whose fields live in different components, where a single
/// diagonal entry leaves the untouched fields degenerate.
pub fn candidate_directions(domain: &BoxDomain) -> Result<Vec<PerturbationDirection>> {
    let center = centered_bump(domain);
    let corners = corner_bumps(domain);
    let mut out = Vec::new();
    for h in 1..=3 {
        out.push(make_splitting_direction(h, center, domain)?);
    }
    for b in corners {
        for h in 1..=3 {
            out.push(make_splitting_direction(h, b, domain)?);
        }
    }
    for b in std::iter::once(center).chain(corners) {
        out.push(make_diagonal_direction([1.0, 0.6, 0.3], b, domain)?);
    }
    Ok(out)
}

/// Scalar directions `ξ I` on the centered and corner bumps. Nothing
/// guarantees these split a cluster; they exist to probe that question.
pub fn scalar_directions(domain: &BoxDomain) -> Result<Vec<PerturbationDirection>> {
    std::iter::once(centered_bump(domain))
        .chain(corner_bumps(domain))
        .map(|b| {
            let mut d = make_diagonal_direction([1.0; 3], b, domain)?;
            d.label = format!("scalar bump at {:?}", b.center);
            Ok(d)
        })
        .collect()
}

fn gaps(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Finds `(η, t)` from the dictionary and `t < T` such that the cluster
/// separates into simple eigenvalues with pairwise gaps above
/// `gap_min·λ̃` and stays clear of its neighbors. The first-order step is
/// `t = 2·gap_min·λ̃ / (smallest slope gap)`, verified by a solve and
/// doubled while the realized gaps fall short.
pub fn split_cluster(
    problem: &CavityProblem,
    spectrum: &Spectrum,
    cluster: &MaxwellCluster,
    opts: &SplitOptions,
) -> Result<SplitResult> {
    split_cluster_with(problem, spectrum, cluster, candidate_directions(&problem.mesh.domain())?, opts)
}

/// `split_cluster` over a caller-supplied dictionary, tried in order.
pub fn split_cluster_with(
    problem: &CavityProblem,
    spectrum: &Spectrum,
    cluster: &MaxwellCluster,
    directions: Vec<PerturbationDirection>,
    opts: &SplitOptions,
) -> Result<SplitResult> {
    let m = cluster.multiplicity();
    if m < 2 {
        return Err(Error::Precondition(format!("cluster at {} is simple", cluster.value)));
    }
    let lambda = cluster.value;
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("cluster value {lambda} is not positive")));
    }
    if !(opts.t_max > 0.0 && opts.gap_min > 0.0) {
        return Err(invalid("t_max and gap_min must be positive"));
    }
    let first = *cluster.entry_indices.first().unwrap();
    let last = *cluster.entry_indices.last().unwrap();
    if cluster.entry_indices.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Precondition("cluster is interleaved with non-Maxwell pairs".into()));
    }
    let basis = spectrum.vectors_of(&cluster.entry_indices);
    let pencil = &spectrum.pencil;
    let below = first.checked_sub(1).map(|i| spectrum.entries[i].sigma);
    let above = spectrum.entries.get(last + 1).map(|e| e.sigma);
    let room = [below.map(|v| lambda - v), above.map(|v| v - lambda)];

    let need = opts.gap_min * lambda;
    let mut best: Option<(String, f64)> = None;
    let mut tried = 0;
    for (index, dir) in directions.into_iter().enumerate() {
        tried += 1;
        let (_, dm) = problem.perturbation(&dir.field, pencil)?;
        let slopes = branch_slopes(&rellich_nagy_matrix(lambda, &basis, &pencil.m, &dm, opts.gram_tol)?);
        let min_slope_gap = gaps(&slopes).into_iter().fold(f64::INFINITY, f64::min);
        let candidate = SplitCandidate { index, label: dir.label.clone(), slopes: slopes.clone(), min_slope_gap };
        if !(min_slope_gap > 0.0) {
            continue;
        }
        let mut t = 2.0 * need / min_slope_gap;
        for _ in 0..=opts.max_doublings {
            if t >= opts.t_max {
                break;
            }
            // first-order motion must leave half the room to each neighbor
            let lo = -slopes[0].min(0.0) * t;
            let hi = slopes[m - 1].max(0.0) * t;
            if room[0].is_some_and(|r| lo > 0.5 * r) || room[1].is_some_and(|r| hi > 0.5 * r) {
                break;
            }
            let eps = problem.eps.plus(t, &dir.field);
            let p = problem.with_eps(eps.clone())?.pencil()?;
            let k = (last + 2).min(p.dim());
            let sol = solve_gsym_with(&p.lhs(), &p.m, k, &opts.solver)?;
            let realized = sol.values[first..=last].to_vec();
            let realized_gaps = gaps(&realized);
            let neighbors = [first.checked_sub(1).map(|i| sol.values[i]), sol.values.get(last + 1).copied()];
            let achieved = realized_gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let clear = neighbors[0].is_none_or(|v| realized[0] - v > need)
                && neighbors[1].is_none_or(|v| v - realized[m - 1] > need);
            if best.as_ref().is_none_or(|b| achieved / lambda > b.1) {
                best = Some((dir.label.clone(), achieved / lambda));
            }
            if achieved > need && clear {
                let predicted: Vec<f64> = slopes.iter().map(|s| lambda + t * s).collect();
                return Ok(SplitResult {
                    predicted_gaps: gaps(&predicted),
                    candidate,
                    direction: dir,
                    t,
                    eps,
                    lambda,
                    predicted,
                    realized,
                    realized_gaps,
                    neighbors,
                    candidates_tried: tried,
                });
            }
            t *= 2.0;
        }
    }
    let (best_candidate, best_gap) = best.unwrap_or_else(|| ("none with distinct slopes".into(), 0.0));
    Err(Error::NoSplitFound { best_candidate, best_gap })
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityStep {
    pub cluster_value: f64,
    pub multiplicity: usize,
    /// Step cap `δ/2^k` of this step.
    pub t_cap: f64,
    pub split: SplitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityResult {
    #[serde(skip)]
    pub eps: PermittivityField,
    pub steps: Vec<GenericityStep>,
    /// `‖ε − ε̃‖_{W^{1,∞}}` over the audit points.
    pub distance: f64,
    /// Leading Maxwell values, at least `n`, of the final field.
    pub maxwell_values: Vec<f64>,
    /// Consecutive relative gaps of `maxwell_values`.
    pub relative_gaps: Vec<f64>,
    /// Number of leading Maxwell values separated from both neighbors.
    pub reached: usize,
    pub complete: bool,
    /// Reason the search stopped early, if it did.
    pub stopped: Option<String>,
}

fn leading_simple(values: &[f64], n: usize, gap_min: f64) -> usize {
    let ok = |i: usize| {
        let v = values[i];
        let lo = i == 0 || v - values[i - 1] > gap_min * v;
        let hi = values.get(i + 1).is_none_or(|&w| w - v > gap_min * v);
        lo && hi
    };
    (0..n.min(values.len())).take_while(|&i| ok(i)).count()
}

/// Splits the lowest multiple cluster among the first `n` Maxwell values,
/// step `k` capped by `δ/2^k`, for at most `budget` steps. Total distance
/// stays below `δ` because the caps telescope and each direction has unit
/// norm. Stops with a partial result when a split fails or the budget runs
/// out.
pub fn genericity_search(
    problem: &CavityProblem,
    n: usize,
    delta: f64,
    budget: usize,
    spectrum_opts: &SpectrumOptions,
    split_opts: &SplitOptions,
) -> Result<GenericityResult> {
    if n == 0 || !(delta > 0.0) {
        return Err(invalid("need n ≥ 1 and δ > 0"));
    }
    let gap_min = split_opts.gap_min;
    let cluster_opts = SpectrumOptions { cluster_tol: gap_min, ..spectrum_opts.clone() };
    let mut current = problem.clone();
    let mut steps = Vec::new();
    let mut stopped = None;
    let mut spectrum = compute_maxwell_window(&current, n + 1, &cluster_opts)?;
    loop {
        let target =
            spectrum.maxwell_clusters(gap_min).into_iter().find(|c| c.multiplicity() > 1 && c.maxwell_indices[0] < n);
        let Some(cluster) = target else { break };
        if steps.len() == budget {
            stopped = Some(format!("step budget {budget} exhausted"));
            break;
        }
        let t_cap = delta / 2f64.powi(steps.len() as i32 + 1);
        let opts = SplitOptions { t_max: t_cap, ..split_opts.clone() };
        match split_cluster(&current, &spectrum, &cluster, &opts) {
            Ok(split) => {
                current = current.with_eps(split.eps.clone())?;
                steps.push(GenericityStep {
                    cluster_value: cluster.value,
                    multiplicity: cluster.multiplicity(),
                    t_cap,
                    split,
                });
                spectrum = compute_maxwell_window(&current, n + 1, &cluster_opts)?;
            }
            Err(Error::NoSplitFound { best_candidate, best_gap }) => {
                stopped = Some(format!(
                    "no split of the cluster at {} (best `{best_candidate}`, gap {best_gap:e})",
                    cluster.value
                ));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let maxwell_values: Vec<f64> = spectrum.maxwell_positions().iter().map(|&i| spectrum.entries[i].sigma).collect();
    let reached = leading_simple(&maxwell_values, n, gap_min);
    Ok(GenericityResult {
        distance: w1inf_distance(&current.eps, &problem.eps, &problem.mesh, &problem.rule),
        eps: current.eps,
        steps,
        relative_gaps: maxwell_values.windows(2).map(|w| (w[1] - w[0]) / w[1]).collect(),
        maxwell_values,
        complete: reached >= n,
        reached,
        stopped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dictionary_order_and_norms() {
        let d = BoxDomain::new([PI; 3]).unwrap();
        let c = candidate_directions(&d).unwrap();
        assert_eq!(c.len(), 16);
        assert!(c[0].label.starts_with("e11"));
        assert!(c[5].label.starts_with("e33"));
        assert!(c[12].label.starts_with("diag"));
        assert!(c.iter().all(|x| x.norm_estimate == 1.0));
    }

    #[test]
    fn leading_simple_counts() {
        assert_eq!(leading_simple(&[1.0, 2.0, 2.0, 3.0], 4, 1e-3), 1);
        assert_eq!(leading_simple(&[1.0, 1.5, 2.0, 2.0], 2, 1e-3), 2);
        assert_eq!(leading_simple(&[1.0, 1.0], 2, 1e-3), 0);
    }
}
