//! One function per experiment kind; each composes the core modules and
//! returns result JSON plus tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use cavity_spectra::eigensolve::solve_gsym_with;
use cavity_spectra::geometry::build_box_mesh;
use cavity_spectra::linalg::CsrMatrix;
use cavity_spectra::material::{
    make_diagonal_direction, make_splitting_direction, w1inf_distance, Bump, PermittivityField, PerturbationDirection,
    SamplePoints,
};
use cavity_spectra::spectra::*;

use crate::config::*;
use crate::error::{Context, LabError, LabResult};
use crate::output::{line_chart_svg, Table};

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub tables: Vec<Table>,
    /// `(file name, svg document)`
    pub charts: Vec<(String, String)>,
    /// Short human-readable lines for the terminal.
    pub summary: Vec<String>,
}

struct Setup {
    problem: CavityProblem,
    opts: SpectrumOptions,
}

fn setup(r: &Resolved) -> LabResult<Setup> {
    let c = &r.config;
    let mesh = build_box_mesh(r.extent, c.mesh.subdivisions).context("mesh")?;
    let problem = CavityProblem::new(mesh, r.rule.clone(), r.eps.clone(), c.tau).map_err(|e| match e {
        cavity_spectra::Error::NotAdmissible { .. } => LabError::config("/permittivity", e.to_string()),
        e => LabError::Numerical { context: "problem setup".into(), source: e },
    })?;
    let solver = r.solver();
    let r_max = match c.tolerances.r_max {
        RMax::Value(v) => v,
        RMax::Named(_) => calibrate_r_max(c.mesh.subdivisions, &r.rule, &solver).context("r_max calibration")?,
    };
    let opts = SpectrumOptions {
        k: c.k,
        solver,
        cluster_tol: c.tolerances.cluster_tol,
        r_max,
        match_tol: c.tolerances.match_tol,
        ..SpectrumOptions::default()
    };
    Ok(Setup { problem, opts })
}

fn default_bump(extent: [f64; 3]) -> Bump {
    Bump::new(extent.map(|e| 0.5 * e), extent.map(|e| 0.45 * e))
}

fn bump(extent: [f64; 3], center: Option<[f64; 3]>, radius: Option<[f64; 3]>) -> Bump {
    match (center, radius) {
        (Some(c), Some(r)) => Bump::new(c, r),
        _ => default_bump(extent),
    }
}

fn direction(
    spec: &DirectionSpec,
    problem: &CavityProblem,
    rng: &mut ChaCha8Rng,
    pointer: &str,
) -> LabResult<PermittivityField> {
    let domain = problem.mesh.domain();
    let extent = domain.extent();
    let cfg = |e: cavity_spectra::Error| LabError::config(pointer, e.to_string());
    Ok(match spec {
        DirectionSpec::Identity => PermittivityField::identity(),
        DirectionSpec::Constant { matrix } => PermittivityField::constant(*matrix).map_err(cfg)?,
        DirectionSpec::AxisBump { axis, center, radius } => {
            make_splitting_direction(*axis, bump(extent, *center, *radius), &domain).map_err(cfg)?.field
        }
        DirectionSpec::DiagonalBump { weights, center, radius } => {
            make_diagonal_direction(*weights, bump(extent, *center, *radius), &domain).map_err(cfg)?.field
        }
        DirectionSpec::Expressions { entries } => {
            let refs: [[&str; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| entries[i][j].as_str()));
            PermittivityField::from_sources(&refs).map_err(cfg)?
        }
        DirectionSpec::RandomConstant => {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in i..3 {
                    m[i][j] = rng.random_range(-1.0..1.0);
                    m[j][i] = m[i][j];
                }
            }
            PerturbationDirection::constant(m).and_then(|d| d.normalized()).map_err(cfg)?.field
        }
        DirectionSpec::Dictionary { index } => {
            let mut all = candidate_directions(&domain).map_err(cfg)?;
            if *index >= all.len() {
                return Err(LabError::config(
                    format!("{pointer}/index"),
                    format!("dictionary has {} entries, got index {index}", all.len()),
                ));
            }
            all.swap_remove(*index).field
        }
    })
}

fn spectrum_table(s: &Spectrum) -> Table {
    let mut t = Table::new("spectrum.csv", &["index", "sigma", "label", "div_residual", "cluster_id"]);
    for (i, e) in s.entries.iter().enumerate() {
        t.push(vec![i.into(), e.sigma.into(), e.label.as_str().into(), e.div_residual.into(), e.cluster_id.into()]);
    }
    t
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn validate(r: &Resolved) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let s = compute_resolved_spectrum(&problem, &opts).context("validate: spectrum")?;
    let lam = maxwell_eigenvalues(&s).context("validate: labels")?;
    let grad = s.gradient_values();
    let mo = box_maxwell_oracle(r.extent, lam.len());
    let go: Vec<f64> = box_dirichlet_oracle(r.extent, grad.len()).iter().map(|rho| problem.tau * rho).collect();
    let mut t = Table::new("validation.csv", &["family", "index", "computed", "oracle", "rel_err"]);
    let mut worst = [0.0f64; 2];
    for (family, (values, oracle), w) in
        [("maxwell", (&lam, &mo)), ("gradient", (&grad, &go))].into_iter().zip(0..).map(|((f, v), w)| (f, v, w))
    {
        for (j, (v, o)) in values.iter().zip(oracle.iter()).enumerate() {
            let e = rel_err(*v, *o);
            worst[w] = worst[w].max(e);
            t.push(vec![family.into(), (j + 1).into(), (*v).into(), (*o).into(), e.into()]);
        }
    }
    Ok(Outcome {
        summary: vec![
            format!("{} Maxwell values, worst relative error {:.3e}", lam.len(), worst[0]),
            format!("{} gradient values, worst relative error {:.3e}", grad.len(), worst[1]),
        ],
        results: json!({
            "r_max": opts.r_max,
            "maxwell": lam,
            "maxwell_oracle": mo,
            "gradient": grad,
            "gradient_oracle": go,
            "maxwell_max_rel_err": worst[0],
            "gradient_max_rel_err": worst[1],
            "spectrum": s.summary(),
        }),
        tables: vec![t, spectrum_table(&s)],
        charts: Vec::new(),
    })
}

pub fn spectrum(r: &Resolved, p: &SpectrumParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let s = if p.resolve { compute_resolved_spectrum(&problem, &opts) } else { compute_spectrum(&problem, &opts) }
        .context("spectrum")?;
    let maxwell: Vec<f64> = s.maxwell_positions().iter().map(|&i| s.entries[i].sigma).collect();
    Ok(Outcome {
        summary: vec![format!(
            "{} values: {} Maxwell, {} gradient, {} ambiguous",
            s.entries.len(),
            maxwell.len(),
            s.gradient_values().len(),
            s.ambiguous().len()
        )],
        results: json!({ "r_max": opts.r_max, "maxwell": maxwell, "gradient": s.gradient_values(), "spectrum": s.summary() }),
        tables: vec![spectrum_table(&s)],
        charts: Vec::new(),
    })
}

/// Values of the `m` perturbed pairs whose vectors project most strongly
/// onto `span(basis)`, ascending. Follows a cluster through crossings with
/// other families.
fn follow(
    problem: &CavityProblem,
    basis: &[Vec<f64>],
    m: &CsrMatrix,
    k: usize,
    opts: &SpectrumOptions,
) -> cavity_spectra::Result<Vec<f64>> {
    let pencil = problem.pencil()?;
    let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, k.min(pencil.dim()), &opts.solver)?;
    let mb: Vec<Vec<f64>> = basis.iter().map(|u| m.mul_vec(u)).collect();
    let weight =
        |v: &Vec<f64>| mb.iter().map(|w| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum::<f64>();
    let mut order: Vec<usize> = (0..sol.values.len()).collect();
    order.sort_by(|&a, &b| weight(&sol.vectors[b]).total_cmp(&weight(&sol.vectors[a])));
    let mut out: Vec<f64> = order[..basis.len()].iter().map(|&i| sol.values[i]).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn set_label(indices: &[usize]) -> String {
    let s: Vec<String> = indices.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", s.join(","))
}

pub fn derivative_check(r: &Resolved, p: &DerivativeParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
    let eta = direction(&p.direction, &problem, &mut rng, "/params/direction")?;
    let s = compute_maxwell_window(&problem, p.count, &opts).context("derivative-check: spectrum")?;
    let clusters: Vec<MaxwellCluster> =
        s.maxwell_clusters(opts.cluster_tol).into_iter().filter(|c| c.maxwell_indices[0] < p.count).collect();
    if clusters.is_empty() {
        return Err(LabError::Numerical {
            context: "derivative-check".into(),
            source: cavity_spectra::Error::Precondition("no Maxwell values in the window".into()),
        });
    }
    let (dp, dm) = problem.perturbation(&eta, &s.pencil).context("derivative-check: perturbation")?;
    let last = clusters.iter().flat_map(|c| c.entry_indices.iter()).max().copied().unwrap_or(0);
    // room for other pairs that cross into the window under the perturbation
    let k = last + 7;

    struct Row {
        label: String,
        s: usize,
        value: f64,
        formula: f64,
        discrete: f64,
    }
    let mut rows = Vec::new();
    let mut bases = Vec::new();
    for c in &clusters {
        let values: Vec<f64> = c.entry_indices.iter().map(|&i| s.entries[i].sigma).collect();
        let basis = s.vectors_of(&c.entry_indices);
        // exactly coincident values share a block; resolved ones get their own
        let part = ClusterPartition::from_values(&values, 1e-8).context("derivative-check: partition")?;
        let block_bases: Vec<Vec<Vec<f64>>> =
            part.blocks().iter().map(|b| b.iter().map(|&i| basis[i].clone()).collect()).collect();
        let block_sigmas: Vec<Vec<f64>> =
            part.blocks().iter().map(|b| b.iter().map(|&i| values[i]).collect()).collect();
        for deg in 1..=c.multiplicity() {
            rows.push(Row {
                label: set_label(&c.maxwell_indices),
                s: deg,
                value: symmetric_function(&values, deg).context("derivative-check")?,
                formula: symmetric_function_derivative(&part, &block_bases, &s.pencil.m, &dm, deg, 1e-8)
                    .context("derivative-check: formula")?,
                discrete: discrete_symmetric_derivative(&part, &block_bases, &block_sigmas, problem.tau, &dp, &dm, deg)
                    .context("derivative-check: discrete derivative")?,
            });
        }
        bases.push(basis);
    }
    let fd = central_differences(
        |t| {
            let q = problem.with_eps(problem.eps.plus(t, &eta))?;
            let mut out = Vec::new();
            for (c, basis) in clusters.iter().zip(&bases) {
                let v = follow(&q, basis, &s.pencil.m, k, &opts)?;
                for deg in 1..=c.multiplicity() {
                    out.push(symmetric_function(&v, deg)?);
                }
            }
            Ok(out)
        },
        p.t_coarse,
        p.t_fine,
        1e-12,
    )
    .context("derivative-check: finite differences")?;

    let mut t = Table::new("sensitivity.csv", &["F", "s", "value", "derivative", "fd", "rel_err"]);
    let mut json_rows = Vec::new();
    let (mut worst_formula, mut worst_discrete, mut worst_fd) = (0.0f64, 0.0f64, 0.0f64);
    for (row, f) in rows.iter().zip(&fd) {
        let e = rel_err(row.formula, f.fine);
        let ed = rel_err(row.discrete, f.fine);
        worst_formula = worst_formula.max(e);
        worst_discrete = worst_discrete.max(ed);
        worst_fd = worst_fd.max(f.disagreement);
        t.push(vec![
            row.label.clone().into(),
            row.s.into(),
            row.value.into(),
            row.formula.into(),
            f.fine.into(),
            e.into(),
        ]);
        json_rows.push(json!({
            "F": row.label, "s": row.s, "value": row.value, "derivative": row.formula, "fd": f.fine,
            "rel_err": e, "discrete_derivative": row.discrete, "discrete_rel_err": ed,
            "fd_coarse": f.coarse, "fd_disagreement": f.disagreement,
        }));
    }
    Ok(Outcome {
        summary: vec![
            format!("{} symmetric functions over {} clusters", rows.len(), clusters.len()),
            format!("continuum formula vs FD: worst {worst_formula:.3e}"),
            format!("discrete derivative vs FD: worst {worst_discrete:.3e}; FD step disagreement {worst_fd:.3e}"),
        ],
        results: json!({
            "r_max": opts.r_max,
            "rows": json_rows,
            "max_rel_err": worst_formula,
            "max_discrete_rel_err": worst_discrete,
            "max_fd_disagreement": worst_fd,
        }),
        tables: vec![t],
        charts: Vec::new(),
    })
}

fn pick_cluster(s: &Spectrum, index: usize, tol: f64) -> LabResult<MaxwellCluster> {
    let mut clusters = s.maxwell_clusters(tol);
    if index >= clusters.len() {
        return Err(LabError::config(
            "/params/cluster",
            format!("window holds {} Maxwell clusters, got index {index}", clusters.len()),
        ));
    }
    Ok(clusters.swap_remove(index))
}

pub fn branches(r: &Resolved, p: &BranchParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
    let eta = direction(&p.direction, &problem, &mut rng, "/params/direction")?;
    let s = compute_resolved_spectrum(&problem, &opts).context("branches: spectrum")?;
    let c = pick_cluster(&s, p.cluster, opts.cluster_tol)?;
    let first = c.entry_indices[0];
    let (dp, dm) = problem.perturbation(&eta, &s.pencil).context("branches: perturbation")?;
    let slopes =
        branch_slopes(&discrete_cluster_matrix(problem.tau, c.value, &s.vectors_of(&c.entry_indices), &dp, &dm));
    let grid = p.t_grid.points();
    let path = LinearPath::new(problem.eps.clone(), eta);
    let track = TrackOptions { solver: opts.solver.clone(), ..TrackOptions::new(first..first + c.multiplicity()) };
    let curves = track_branches(&problem, &path, &grid, &track).context("branches: tracking")?;
    let mut t = Table::new("branches.csv", &["t", "branch_id", "value"]);
    for (i, &ti) in curves.t.iter().enumerate() {
        for b in 0..curves.branch_count() {
            t.push(vec![ti.into(), b.into(), curves.values[b][i].into()]);
        }
    }
    let mut charts = Vec::new();
    if p.svg {
        let series: Vec<Vec<(f64, f64)>> =
            curves.values.iter().map(|v| curves.t.iter().copied().zip(v.iter().copied()).collect()).collect();
        charts.push((
            "branches.svg".to_string(),
            line_chart_svg(&format!("branches from λ̃ = {:.6}", c.value), "t", "σ", &series),
        ));
    }
    Ok(Outcome {
        summary: vec![format!(
            "{} branches from {:.6} over {} grid points; first-order slopes {:?}",
            curves.branch_count(),
            c.value,
            grid.len(),
            slopes
        )],
        results: json!({ "r_max": opts.r_max, "cluster_value": c.value, "first_order_slopes": slopes, "curves": curves }),
        tables: vec![t],
        charts,
    })
}

pub fn split(r: &Resolved, p: &SplitParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let s = compute_resolved_spectrum(&problem, &opts).context("split: spectrum")?;
    let c = pick_cluster(&s, p.cluster, opts.cluster_tol)?;
    let domain = problem.mesh.domain();
    let dirs = match p.dictionary {
        Dictionary::Diagonal => candidate_directions(&domain),
        Dictionary::Scalar => scalar_directions(&domain),
    }
    .context("split: dictionary")?;
    let split_opts = SplitOptions {
        t_max: p.t_max,
        gap_min: r.config.tolerances.gap_min,
        solver: opts.solver.clone(),
        max_doublings: p.max_doublings,
        ..SplitOptions::default()
    };
    let res = split_cluster_with(&problem, &s, &c, dirs, &split_opts).context("split")?;
    let mut t = Table::new("split.csv", &["branch", "slope", "predicted", "realized"]);
    for b in 0..res.realized.len() {
        t.push(vec![b.into(), res.candidate.slopes[b].into(), res.predicted[b].into(), res.realized[b].into()]);
    }
    Ok(Outcome {
        summary: vec![format!(
            "split {:.6} (m = {}) with `{}` at t = {:.4e}; realized gaps {:?}",
            c.value,
            c.multiplicity(),
            res.candidate.label,
            res.t,
            res.realized_gaps
        )],
        results: json!({ "r_max": opts.r_max, "split": res, "eps": res.eps.describe() }),
        tables: vec![t],
        charts: Vec::new(),
    })
}

pub fn genericity(r: &Resolved, p: &GenericityParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let split_opts =
        SplitOptions { gap_min: r.config.tolerances.gap_min, solver: opts.solver.clone(), ..SplitOptions::default() };
    let g = genericity_search(&problem, p.n, p.delta, p.budget, &opts, &split_opts).context("genericity")?;
    let mut steps = Table::new("genericity.csv", &["step", "cluster_value", "multiplicity", "t_cap", "t", "direction"]);
    for (i, st) in g.steps.iter().enumerate() {
        steps.push(vec![
            i.into(),
            st.cluster_value.into(),
            st.multiplicity.into(),
            st.t_cap.into(),
            st.split.t.into(),
            st.split.candidate.label.clone().into(),
        ]);
    }
    let mut values = Table::new("maxwell.csv", &["index", "value", "relative_gap"]);
    for (i, v) in g.maxwell_values.iter().enumerate() {
        values.push(vec![(i + 1).into(), (*v).into(), g.relative_gaps.get(i).copied().into()]);
    }
    let mut summary = vec![format!(
        "{} step(s), distance {:.4e}, {} of {} leading values simple",
        g.steps.len(),
        g.distance,
        g.reached,
        p.n
    )];
    if let Some(why) = &g.stopped {
        summary.push(format!("stopped early: {why}"));
    }
    Ok(Outcome {
        summary,
        results: json!({ "r_max": opts.r_max, "search": g, "eps": g.eps.describe() }),
        tables: vec![steps, values],
        charts: Vec::new(),
    })
}

fn random_field(rng: &mut ChaCha8Rng, samples: &SamplePoints) -> cavity_spectra::Result<PermittivityField> {
    const VARS: [&str; 3] = ["x", "y", "z"];
    let mut src: Vec<Vec<String>> = vec![vec![String::new(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let v = VARS[rng.random_range(0..3)];
            src[i][j] = format!("{a:.6} + {b:.6}*sin({v})");
            src[j][i] = src[i][j].clone();
        }
    }
    let refs: [[&str; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| src[i][j].as_str()));
    PerturbationDirection::from_field(PermittivityField::from_sources(&refs)?, samples, "random")
        .normalized()
        .map(|d| d.field)
}

pub fn lipschitz(r: &Resolved, p: &LipschitzParams) -> LabResult<Outcome> {
    let Setup { problem, opts } = setup(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
    let top = p.indices.iter().copied().max().unwrap_or(1);
    let values = |eps: &PermittivityField| -> LabResult<Vec<f64>> {
        let pencil =
            problem.with_eps(eps.clone()).context("lipschitz: admissibility")?.pencil().context("lipschitz")?;
        Ok(solve_gsym_with(&pencil.lhs(), &pencil.m, top, &opts.solver).context("lipschitz: solve")?.values)
    };
    let samples = SamplePoints::default_for(&problem.mesh, &problem.rule);
    let mut t = Table::new("lipschitz.csv", &["kind", "sample", "j", "distance", "ratio"]);
    let mut all_finite = true;
    let mut largest = 0.0f64;
    for pair in 0..p.pairs {
        let mut draw = || -> LabResult<PermittivityField> {
            let eta = random_field(&mut rng, &samples).context("lipschitz: random field")?;
            Ok(problem.eps.plus(rng.random_range(0.0..p.radius), &eta))
        };
        let (e1, e2) = (draw()?, draw()?);
        let d = w1inf_distance(&e1, &e2, &problem.mesh, &problem.rule);
        let (a, b) = (values(&e1)?, values(&e2)?);
        for &j in &p.indices {
            let ratio = (a[j - 1] - b[j - 1]).abs() / d;
            all_finite &= ratio.is_finite();
            largest = largest.max(ratio);
            t.push(vec!["random".into(), pair.into(), j.into(), d.into(), ratio.into()]);
        }
    }
    let base = values(&problem.eps)?;
    let mut nested = Vec::new();
    let mut worst_factor = 0.0f64;
    for (di, spec) in p.directions.iter().enumerate() {
        let eta = direction(spec, &problem, &mut rng, &format!("/params/directions/{di}"))?;
        let mut ratios = vec![Vec::new(); p.indices.len()];
        for &h in &p.nested {
            let e = problem.eps.plus(h, &eta);
            let d = w1inf_distance(&problem.eps, &e, &problem.mesh, &problem.rule);
            let v = values(&e)?;
            for (ji, &j) in p.indices.iter().enumerate() {
                let ratio = (v[j - 1] - base[j - 1]).abs() / d;
                all_finite &= ratio.is_finite();
                ratios[ji].push(ratio);
                t.push(vec![format!("nested-{di}").into(), ji.into(), j.into(), d.into(), ratio.into()]);
            }
        }
        for (ji, r) in ratios.iter().enumerate() {
            let hi = r.iter().copied().fold(0.0, f64::max);
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let factor = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            worst_factor = worst_factor.max(factor);
            nested.push(json!({ "direction": di, "j": p.indices[ji], "ratios": r, "max_over_min": factor }));
        }
    }
    Ok(Outcome {
        summary: vec![format!(
            "{} random pairs, largest ratio {largest:.4}; nested max/min factor {worst_factor:.4}; all finite: {all_finite}",
            p.pairs
        )],
        results: json!({
            "all_finite": all_finite,
            "max_random_ratio": largest,
            "nested": nested,
            "max_nested_factor": worst_factor,
        }),
        tables: vec![t],
        charts: Vec::new(),
    })
}

pub fn run_experiment(r: &Resolved) -> LabResult<Outcome> {
    match &r.params {
        Params::Validate(_) => validate(r),
        Params::Spectrum(p) => spectrum(r, p),
        Params::Derivative(p) => derivative_check(r, p),
        Params::Branches(p) => branches(r, p),
        Params::Split(p) => split(r, p),
        Params::Genericity(p) => genericity(r, p),
        Params::Lipschitz(p) => lipschitz(r, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_labels_count_from_one() {
        assert_eq!(set_label(&[0, 1, 2]), "{1,2,3}");
        assert_eq!(set_label(&[4]), "{5}");
    }

    #[test]
    fn follow_picks_the_subspace_not_the_position() {
        let mesh = build_box_mesh([std::f64::consts::PI; 3], [3; 3]).unwrap();
        let rule = cavity_spectra::geometry::gauss_rule(3).unwrap();
        let p = CavityProblem::new(mesh, rule, PermittivityField::identity(), 1.0).unwrap();
        let pencil = p.pencil().unwrap();
        let opts = SpectrumOptions::default();
        let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, 8, &opts.solver).unwrap();
        let basis = vec![sol.vectors[5].clone()];
        let v = follow(&p, &basis, &pencil.m, 8, &opts).unwrap();
        assert!((v[0] - sol.values[5]).abs() < 1e-12 * sol.values[5]);
    }
}
