//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Analytic values come from separation of variables on the box;
//! derivative references are finite differences of fresh solves; the
//! eigensolver reference is a cyclic Jacobi method written below.

use std::f64::consts::PI;
use std::time::Instant;

use cavity_spectra::eigensolve::{gram_error, solve_gsym_with, SolverOptions};
use cavity_spectra::error::Result;
use cavity_spectra::geometry::{build_box_mesh, gauss_rule, QuadratureRule};
use cavity_spectra::linalg::CsrMatrix;
use cavity_spectra::material::{
    make_diagonal_direction, w1inf_distance, Bump, PermittivityField, PerturbationDirection, SamplePoints,
};
use cavity_spectra::spectra::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ANISOTROPIC: [f64; 3] = [PI, 1.1 * PI, 1.3 * PI];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn problem(extent: [f64; 3], n: usize, eps: PermittivityField, tau: f64) -> Result<CavityProblem> {
    CavityProblem::new(build_box_mesh(extent, [n; 3])?, rule(), eps, tau)
}

fn rule() -> QuadratureRule {
    gauss_rule(5).unwrap()
}

struct Calibration {
    r_max: std::collections::BTreeMap<usize, f64>,
}

impl Calibration {
    fn get(&mut self, n: usize) -> Result<f64> {
        if let Some(&r) = self.r_max.get(&n) {
            return Ok(r);
        }
        let r = calibrate_r_max([n; 3], &rule(), &SolverOptions::default())?;
        self.r_max.insert(n, r);
        Ok(r)
    }

    fn opts(&mut self, n: usize, k: usize) -> Result<SpectrumOptions> {
        Ok(SpectrumOptions { k, r_max: self.get(n)?, ..SpectrumOptions::default() })
    }
}

fn maxwell_values(s: &Spectrum) -> Vec<f64> {
    s.maxwell_positions().iter().map(|&i| s.entries[i].sigma).collect()
}

fn cube_validation(cal: &mut Calibration) -> Result<Outcome> {
    let start = Instant::now();
    let tau = 1.0;
    let p = problem([PI; 3], 10, PermittivityField::identity(), tau)?;
    let s = compute_resolved_spectrum(&p, &cal.opts(10, 12)?)?;
    let lam = maxwell_eigenvalues(&s)?;
    let grad = s.gradient_values();
    let oracle = cube_maxwell_oracle(5);
    let rho = box_dirichlet_oracle([PI; 3], 1)[0];
    let elapsed = start.elapsed().as_secs_f64();
    let worst = (0..5).map(|j| rel(lam[j], oracle[j])).fold(0.0, f64::max);
    let gerr = rel(grad[0], tau * rho);
    outcome(
        lam.len() >= 5 && worst <= 0.02 && gerr <= 0.02 && elapsed <= 120.0,
        format!(
            "λ₁..₅ = {:.4?}, worst rel err {worst:.2e}; gradient {:.4} (err {gerr:.2e}); {elapsed:.1} s",
            &lam[..5],
            grad[0]
        ),
    )
}

fn tau_independence(cal: &mut Calibration) -> Result<Outcome> {
    let taus = [0.5, 1.0, 2.0];
    let mut lams = Vec::new();
    let mut grads = Vec::new();
    for &tau in &taus {
        let p = problem([PI; 3], 10, PermittivityField::identity(), tau)?;
        let mut opts = cal.opts(10, 12)?;
        let s = loop {
            let s = compute_maxwell_window(&p, 5, &opts)?;
            if !s.gradient_values().is_empty() {
                break s;
            }
            opts.k *= 2;
        };
        lams.push(maxwell_values(&s)[..5].to_vec());
        grads.push(s.gradient_values()[0] / tau);
    }
    let spread = |x: &[f64]| {
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(0.0, f64::max);
        (hi - lo) / lo
    };
    let maxwell = (0..5).map(|j| spread(&lams.iter().map(|l| l[j]).collect::<Vec<_>>())).fold(0.0, f64::max);
    let gradient = spread(&grads);
    outcome(
        maxwell <= 5e-3 && gradient <= 1e-2,
        format!("max pairwise Maxwell spread {maxwell:.2e} (≤ 5e-3); spread of σ_grad/τ {gradient:.2e} (≤ 1e-2), σ_grad/τ = {grads:.5?}"),
    )
}

fn penalized_values(p: &CavityProblem, k: usize) -> Result<Vec<f64>> {
    let pencil = p.pencil()?;
    Ok(solve_gsym_with(&pencil.lhs(), &pencil.m, k, &SolverOptions::default())?.values)
}

fn pencil_scaling(cal: &mut Calibration) -> Result<Outcome> {
    let tau = 1.0;
    let a = penalized_values(&problem([PI; 3], 6, PermittivityField::identity(), tau)?, 12)?;
    let b = penalized_values(&problem([PI; 3], 6, PermittivityField::scaled_identity(2.0), tau / 4.0)?, 12)?;
    let exact = a.iter().zip(&b).map(|(x, y)| (y - x / 2.0).abs() / x.max(1.0)).fold(0.0, f64::max);

    let alpha = 2.0;
    let tau = 0.1;
    let opts = cal.opts(10, 40)?;
    let base = compute_maxwell_window(&problem([PI; 3], 10, PermittivityField::identity(), tau)?, 5, &opts)?;
    let scaled =
        compute_maxwell_window(&problem([PI; 3], 10, PermittivityField::scaled_identity(alpha), tau)?, 5, &opts)?;
    let (l1, l2) = (maxwell_values(&base), maxwell_values(&scaled));
    let law = (0..5).map(|j| rel(alpha * l2[j], l1[j])).fold(0.0, f64::max);
    outcome(
        exact <= 1e-10 && law <= 1e-3,
        format!(
            "σ[2I, τ/4] vs σ[I, τ]/2: {exact:.1e} (≤ 1e-10); α·λ_j[αI] vs λ_j[I], j ≤ 5, τ = {tau}: {law:.2e} (≤ 1e-3)"
        ),
    )
}

fn random_constant_direction(rng: &mut ChaCha8Rng) -> Result<PermittivityField> {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = rng.random_range(-1.0..1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(PerturbationDirection::constant(m)?.normalized()?.field)
}

struct DerivativeErrors {
    hf: f64,
    paper: f64,
    consistency: f64,
}

/// Values of the perturbed pairs with the largest M-overlap with each base
/// vector.
fn follow(p: &CavityProblem, base: &[&Vec<f64>], m: &CsrMatrix, k: usize) -> Result<Vec<f64>> {
    let pencil = p.pencil()?;
    let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, k, &SolverOptions::default())?;
    Ok(base
        .iter()
        .map(|u| {
            let mu = m.mul_vec(u);
            let overlap = |v: &Vec<f64>| v.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>().abs();
            let best = (0..k).max_by(|&a, &b| overlap(&sol.vectors[a]).total_cmp(&overlap(&sol.vectors[b]))).unwrap();
            sol.values[best]
        })
        .collect())
}

/// λ₁..λ₃ individually and the near-degenerate pair (λ₄, λ₅) through
/// `Λ_{F,1}` and `Λ_{F,2}`.
fn derivative_errors(cal: &mut Calibration, n: usize, tau: f64) -> Result<DerivativeErrors> {
    let p = problem(ANISOTROPIC, n, PermittivityField::identity(), tau)?;
    let s = compute_maxwell_window(&p, 5, &cal.opts(n, 12)?)?;
    let pos = s.maxwell_positions()[..5].to_vec();
    let sig: Vec<f64> = pos.iter().map(|&i| s.entries[i].sigma).collect();
    // gradient values move fast at small τ and may pass the tracked ones
    let k = pos[4] + 6;
    let base: Vec<&Vec<f64>> = pos.iter().map(|&i| &s.vectors[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = DerivativeErrors { hf: 0.0, paper: 0.0, consistency: 0.0 };
    for _ in 0..3 {
        let eta = random_constant_direction(&mut rng)?;
        let (dp, dm) = p.perturbation(&eta, &s.pencil)?;
        let fd = central_differences(
            |t| {
                let l = follow(&p.with_eps(p.eps.plus(t, &eta))?, &base, &s.pencil.m, k)?;
                Ok(vec![l[0], l[1], l[2], l[3] + l[4], l[3] * l[4]])
            },
            1e-2,
            1e-3,
            1e-12,
        )?;
        let mut analytic = Vec::new();
        for j in 0..3 {
            let u = &s.vectors[pos[j]];
            let part = ClusterPartition::new(vec![vec![0]], vec![sig[j]])?;
            analytic.push((
                discrete_eigenvalue_derivative(tau, sig[j], u, &dp, &dm),
                symmetric_function_derivative(&part, &[vec![u.clone()]], &s.pencil.m, &dm, 1, 1e-8)?,
            ));
        }
        let part = ClusterPartition::new(vec![vec![0], vec![1]], vec![sig[3], sig[4]])?;
        let bases = vec![vec![s.vectors[pos[3]].clone()], vec![s.vectors[pos[4]].clone()]];
        let sigmas = vec![vec![sig[3]], vec![sig[4]]];
        for deg in 1..=2 {
            analytic.push((
                discrete_symmetric_derivative(&part, &bases, &sigmas, tau, &dp, &dm, deg)?,
                symmetric_function_derivative(&part, &bases, &s.pencil.m, &dm, deg, 1e-8)?,
            ));
        }
        for ((hf, paper), f) in analytic.iter().zip(&fd) {
            out.hf = out.hf.max(rel(*hf, f.fine));
            out.paper = out.paper.max(rel(*paper, f.fine));
            out.consistency = out.consistency.max(f.disagreement);
        }
    }
    Ok(out)
}

fn derivative_correctness(cal: &mut Calibration) -> Result<Outcome> {
    let tau = 0.25;
    let coarse = derivative_errors(cal, 8, tau)?;
    let fine = derivative_errors(cal, 12, tau)?;
    let pass = coarse.hf <= 1e-6
        && fine.hf <= 1e-6
        && coarse.consistency <= 1e-2
        && fine.consistency <= 1e-2
        && coarse.paper <= 5e-3
        && fine.paper < coarse.paper;
    outcome(
        pass,
        format!(
            "τ = {tau}; discrete derivative vs FD {:.1e} / {:.1e} (≤ 1e-6); FD step agreement {:.1e} / {:.1e} (≤ 1e-2); \
             λ-weighted formula vs FD {:.2e} at 8³ (≤ 5e-3), {:.2e} at 12³",
            coarse.hf, fine.hf, coarse.consistency, fine.consistency, coarse.paper, fine.paper
        ),
    )
}

fn trivial_anchor(cal: &mut Calibration) -> Result<Outcome> {
    let tau = 2.0;
    let p = problem(ANISOTROPIC, 8, PermittivityField::identity(), tau)?;
    let s = compute_maxwell_window(&p, 6, &cal.opts(8, 12)?)?;
    let identity = PermittivityField::identity();
    let (_, dm) = p.perturbation(&identity, &s.pencil)?;
    let mut worst_formula = 0.0f64;
    let mut worst_scaling = 0.0f64;
    let mut count = 0;
    let k = s.entries.len();
    for c in s.maxwell_clusters(1e-3).iter().filter(|c| c.multiplicity() == 1) {
        let i = c.entry_indices[0];
        let lambda = s.entries[i].sigma;
        let part = ClusterPartition::new(vec![vec![0]], vec![lambda])?;
        let d = symmetric_function_derivative(&part, &[vec![s.vectors[i].clone()]], &s.pencil.m, &dm, 1, 1e-8)?;
        worst_formula = worst_formula.max(rel(d, -lambda));
        // ε = αI with τ/α² keeps the pencil (K + τP, αM), so σ(α) = σ(1)/α
        let fd = central_difference(
            |t| {
                let a = 1.0 + t;
                let q = p.with_eps(PermittivityField::scaled_identity(a))?.with_tau(tau / (a * a))?;
                Ok(penalized_values(&q, k)?[i])
            },
            1e-2,
            1e-3,
            1e-12,
        )?;
        worst_scaling = worst_scaling.max(rel(fd.fine, -lambda));
        count += 1;
    }
    outcome(
        count > 0 && worst_formula <= 1e-8 && worst_scaling <= 1e-8,
        format!("{count} simple Maxwell values; −λ∫E·E vs −λ {worst_formula:.1e}; FD along (αI, τ/α²) vs −λ {worst_scaling:.1e} (≤ 1e-8)"),
    )
}

struct CubeCluster {
    problem: CavityProblem,
    spectrum: Spectrum,
    cluster: MaxwellCluster,
}

fn cube_cluster(cal: &mut Calibration) -> Result<CubeCluster> {
    let problem = problem([PI; 3], 8, PermittivityField::identity(), 2.0)?;
    let spectrum = compute_resolved_spectrum(&problem, &cal.opts(8, 12)?)?;
    let cluster = spectrum.maxwell_clusters(1e-3).remove(0);
    Ok(CubeCluster { problem, spectrum, cluster })
}

fn diagonal_bump(c: &CubeCluster) -> Result<PerturbationDirection> {
    let bump = Bump::new([PI / 2.0; 3], [0.45 * PI; 3]);
    make_diagonal_direction([1.0, 0.6, 0.3], bump, &c.problem.mesh.domain())
}

fn rellich_nagy_and_crossing(cal: &mut Calibration) -> Result<(Outcome, Outcome)> {
    let c = cube_cluster(cal)?;
    let lambda = c.cluster.value;
    let eta = diagonal_bump(&c)?;
    let (_, dm) = c.problem.perturbation(&eta.field, &c.spectrum.pencil)?;
    let basis = c.spectrum.vectors_of(&c.cluster.entry_indices);
    let slopes = branch_slopes(&rellich_nagy_matrix(lambda, &basis, &c.spectrum.pencil.m, &dm, 1e-8)?);
    let part = ClusterPartition::new(vec![(0..basis.len()).collect()], vec![lambda])?;
    let trace = symmetric_function_derivative(&part, &[basis.clone()], &c.spectrum.pencil.m, &dm, 1, 1e-8)?;
    let trace_err = (slopes.iter().sum::<f64>() - trace).abs() / trace.abs().max(1.0);

    let h = 1e-3;
    let grid = [-h, -h / 2.0, 0.0, h / 2.0, h];
    let first = c.cluster.entry_indices[0];
    let window = first..first + c.cluster.multiplicity();
    let path = LinearPath::new(c.problem.eps.clone(), eta.field.clone());
    let curves = track_branches(&c.problem, &path, &grid, &TrackOptions::new(window))?;
    let mut fd: Vec<f64> = (0..curves.branch_count())
        .map(|b| {
            let v = &curves.values[b];
            let d1 = (v[4] - v[0]) / (2.0 * h);
            let d2 = (v[3] - v[1]) / h;
            (4.0 * d2 - d1) / 3.0
        })
        .collect();
    fd.sort_by(f64::total_cmp);
    let slope_err = slopes.iter().zip(&fd).map(|(s, f)| rel(*f, *s)).fold(0.0, f64::max);
    let rn = outcome(
        c.cluster.multiplicity() == 3 && slope_err <= 1e-2 && trace_err <= 1e-10,
        format!(
            "λ̃ = {lambda:.5}, m = {}; matrix slopes {slopes:.5?} vs tracked FD {fd:.5?}: {slope_err:.1e} (≤ 1e-2); trace identity {trace_err:.1e} (≤ 1e-10)",
            c.cluster.multiplicity()
        ),
    )?;

    let s = &curves.sorted;
    let corner = (0..3).map(|j| ((s[2][j] - s[0][j]) / h - (s[4][j] - s[2][j]) / h).abs()).fold(0.0, f64::max);
    let mut smooth = 0.0f64;
    for deg in 1..=3 {
        let lam: Vec<f64> = s.iter().map(|v| symmetric_function(v, deg)).collect::<Result<_>>()?;
        let mismatch = ((lam[2] - lam[0]) / h - (lam[4] - lam[2]) / h).abs();
        smooth = smooth.max(mismatch / (1e-3 * lam[2].abs().max(1.0)));
    }
    let crossing = outcome(
        corner > 1e-2 * lambda && smooth <= 1.0,
        format!(
            "largest sorted-branch slope jump {corner:.3} (> {:.3}); worst Λ_F,s slope jump / (1e-3·max(1,|Λ|)) = {smooth:.2} (≤ 1)",
            1e-2 * lambda
        ),
    )?;
    Ok((rn, crossing))
}

fn splitting(cal: &mut Calibration) -> Result<Outcome> {
    let c = cube_cluster(cal)?;
    let lambda = c.cluster.value;
    let r = split_cluster(&c.problem, &c.spectrum, &c.cluster, &SplitOptions::default())?;
    // independent check of the perturbed spectrum
    let q = c.problem.with_eps(r.eps.clone())?;
    let s = compute_spectrum(&q, &cal.opts(8, 12)?)?;
    let idx = &c.cluster.entry_indices;
    let vals: Vec<f64> = s.values();
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let mut gaps: Vec<f64> = (first..last).map(|i| vals[i + 1] - vals[i]).collect();
    if first > 0 {
        gaps.push(vals[first] - vals[first - 1]);
    }
    gaps.push(vals[last + 1] - vals[last]);
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min) / lambda;
    let labels_ok = idx.iter().all(|&i| s.entries[i].label == Family::Maxwell);
    outcome(
        r.t < 0.1 && min_gap > 1e-3 && labels_ok,
        format!(
            "direction `{}`, t = {:.4} (< 0.1); values {:.6?}; smallest gap incl. neighbors {min_gap:.2e}·λ̃ (> 1e-3); \
             first-order gap prediction off by {:.1}%",
            r.candidate.label,
            r.t,
            &vals[first..=last],
            100.0 * r.prediction_error()
        ),
    )
}

fn genericity(cal: &mut Calibration) -> Result<Outcome> {
    let delta = 0.1;
    let n = 5;
    let p = problem([PI; 3], 8, PermittivityField::identity(), 2.0)?;
    let opts = cal.opts(8, 12)?;
    let g = genericity_search(&p, n, delta, 8, &opts, &SplitOptions::default())?;
    let q = p.with_eps(g.eps.clone())?;
    let s = compute_maxwell_window(&q, n + 1, &opts)?;
    let lam = maxwell_values(&s);
    let simple = (0..n).all(|i| {
        let lo = i == 0 || lam[i] - lam[i - 1] > 1e-3 * lam[i];
        let hi = lam[i + 1] - lam[i] > 1e-3 * lam[i];
        lo && hi
    });
    let distance = w1inf_distance(&g.eps, &p.eps, &p.mesh, &p.rule);
    outcome(
        simple && g.complete && distance <= delta,
        format!(
            "{} step(s); first {n} Maxwell values {:.5?}; distance {distance:.4} (≤ {delta})",
            g.steps.len(),
            &lam[..n]
        ),
    )
}

fn lipschitz(_: &mut Calibration) -> Result<Outcome> {
    let p = problem([PI; 3], 4, PermittivityField::identity(), 2.0)?;
    let solver = SolverOptions::default();
    let samples = SamplePoints::default_for(&p.mesh, &p.rule);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vars = ["x", "y", "z"];
    let random_field = |rng: &mut ChaCha8Rng| -> Result<PermittivityField> {
        let mut src: Vec<Vec<String>> = vec![vec![String::new(); 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let v = vars[rng.random_range(0..3)];
                src[i][j] = format!("{a:.6} + {b:.6}*sin({v})");
                src[j][i] = src[i][j].clone();
            }
        }
        let refs: [[&str; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| src[i][j].as_str()));
        let dir = PerturbationDirection::from_field(PermittivityField::from_sources(&refs)?, &samples, "random");
        let r: f64 = rng.random_range(0.0..0.1);
        Ok(PermittivityField::identity().plus(r, &dir.normalized()?.field))
    };
    let mut finite = true;
    let mut largest = 0.0f64;
    for _ in 0..50 {
        let e1 = random_field(&mut rng)?;
        let e2 = random_field(&mut rng)?;
        for j in [1, 3, 5] {
            let r = lipschitz_ratio(&p, &e1, &e2, j, &solver)?;
            finite &= r.is_finite();
            largest = largest.max(r);
        }
    }
    let diag = make_diagonal_direction([1.0, 0.6, 0.3], Bump::new([PI / 2.0; 3], [0.45 * PI; 3]), &p.mesh.domain())?;
    let mut shifted = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = rng.random_range(-0.5..0.5) + if i == j { 2.0 } else { 0.0 };
            shifted[i][j] = v;
            shifted[j][i] = v;
        }
    }
    let directions =
        [PermittivityField::identity(), diag.field, PerturbationDirection::constant(shifted)?.normalized()?.field];
    let mut worst_factor = 0.0f64;
    for d in &directions {
        for j in [1, 3, 5] {
            let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&h| {
                    lipschitz_ratio(
                        &p,
                        &PermittivityField::identity(),
                        &PermittivityField::identity().plus(h, d),
                        j,
                        &solver,
                    )
                })
                .collect::<Result<_>>()?;
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            finite &= hi.is_finite();
            worst_factor = worst_factor.max(hi / lo);
        }
    }
    outcome(
        finite && worst_factor < 3.0,
        format!("150 random ratios finite, largest {largest:.3}; nested pairs max/min ratio {worst_factor:.3} (< 3)"),
    )
}

/// Cyclic Jacobi eigenvalues of a dense symmetric matrix, with eigenvectors
/// as columns of the returned matrix.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// Eigenvalues of `M^{-1/2} A M^{-1/2}`, ascending.
fn brute_force(a: &[Vec<f64>], m: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let (mu, q) = jacobi(m.to_vec());
    let inv_sqrt: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| q[i][k] * q[j][k] / mu[k].sqrt()).sum()).collect()).collect();
    let c = matmul(&matmul(&inv_sqrt, a), &inv_sqrt);
    let sym: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (c[i][j] + c[j][i])).collect()).collect();
    let mut ev = jacobi(sym).0;
    ev.sort_by(f64::total_cmp);
    ev
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() / n as f64 + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect()
}

fn to_csr(a: &[Vec<f64>]) -> CsrMatrix {
    let n = a.len();
    CsrMatrix::from_triplets(n, n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j, a[i][j]))).collect())
}

fn eigensolver_oracle(_: &mut Calibration) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 10;
    let mut worst = 0.0f64;
    let mut gram = 0.0f64;
    for _ in 0..50 {
        let a = random_spd(&mut rng, 50, 0.05);
        let m = random_spd(&mut rng, 50, 0.5);
        let reference = brute_force(&a, &m);
        let (ac, mc) = (to_csr(&a), to_csr(&m));
        for dense_threshold in [usize::MAX, 0] {
            let opts = SolverOptions { dense_threshold, ..SolverOptions::default() };
            let sol = solve_gsym_with(&ac, &mc, k, &opts)?;
            for j in 0..k {
                worst = worst.max((sol.values[j] - reference[j]).abs());
            }
            gram = gram.max(gram_error(&mc, &sol.vectors));
        }
    }
    outcome(
        worst <= 1e-8 && gram <= 1e-10,
        format!("50 pencils, dense and iterative paths, {k} values each: max |σ − oracle| {worst:.1e} (≤ 1e-8); Gram error {gram:.1e} (≤ 1e-10)"),
    )
}

fn main() {
    let mut cal = Calibration { r_max: Default::default() };
    let mut failures = 0;
    let mut clock = Instant::now();
    // ACCEPTANCE_ONLY=4,6 runs a subset while iterating
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut report = |id: usize, name: &str, r: Result<Outcome>| {
        let secs = clock.elapsed().as_secs_f64();
        clock = Instant::now();
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    };
    if wanted(1) {
        report(1, "cube validation", cube_validation(&mut cal));
    }
    if wanted(2) {
        report(2, "tau independence", tau_independence(&mut cal));
    }
    if wanted(3) {
        report(3, "pencil scaling", pencil_scaling(&mut cal));
    }
    if wanted(4) {
        report(4, "derivative correctness", derivative_correctness(&mut cal));
    }
    if wanted(5) {
        report(5, "trivial derivative anchor", trivial_anchor(&mut cal));
    }
    if wanted(6) || wanted(7) {
        match rellich_nagy_and_crossing(&mut cal) {
            Ok((a, b)) => {
                report(6, "branch slopes of a triple cluster", Ok(a));
                report(7, "crossing smoothness", Ok(b));
            }
            Err(e) => {
                let msg = e.to_string();
                report(6, "branch slopes of a triple cluster", Err(e));
                report(7, "crossing smoothness", Err(cavity_spectra::error::Error::Precondition(msg)));
            }
        }
    }
    if wanted(8) {
        report(8, "cluster splitting", splitting(&mut cal));
    }
    if wanted(9) {
        report(9, "genericity search", genericity(&mut cal));
    }
    if wanted(10) {
        report(10, "lipschitz sweep", lipschitz(&mut cal));
    }
    if wanted(11) {
        report(11, "eigensolver oracle", eigensolver_oracle(&mut cal));
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
