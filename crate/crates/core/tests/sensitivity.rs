use std::f64::consts::PI;

use cavity_spectra::eigensolve::{solve_gsym_with, SolverOptions};
use cavity_spectra::geometry::{build_box_mesh, gauss_rule, BoxDomain};
use cavity_spectra::material::{make_diagonal_direction, Bump, PermittivityField, PerturbationDirection};
use cavity_spectra::spectra::*;
use proptest::prelude::*;

fn problem(eps: PermittivityField, tau: f64) -> CavityProblem {
    let mesh = build_box_mesh([PI, 1.1 * PI, 1.3 * PI], [3; 3]).unwrap();
    CavityProblem::new(mesh, gauss_rule(3).unwrap(), eps, tau).unwrap()
}

fn values(p: &CavityProblem, k: usize) -> Vec<f64> {
    let pencil = p.pencil().unwrap();
    solve_gsym_with(&pencil.lhs(), &pencil.m, k, &SolverOptions::default()).unwrap().values
}

fn sine_field() -> PermittivityField {
    PermittivityField::from_sources(&[
        ["1.2 + 0.2*sin(x)", "0.1*sin(y)", "0"],
        ["0.1*sin(y)", "1", "0.05*cos(z)"],
        ["0", "0.05*cos(z)", "1.1 + 0.1*sin(x + z)"],
    ])
    .unwrap()
}

fn direction(c: [f64; 6]) -> PermittivityField {
    let m = [[c[0], c[1], c[2]], [c[1], c[3], c[4]], [c[2], c[4], c[5]]];
    PerturbationDirection::constant(m).unwrap().field
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Hellmann–Feynman on a variable background against fresh solves, for
    /// every simple value of the window.
    #[test]
    fn discrete_derivative_matches_finite_differences(c in prop::array::uniform6(-1.0..1.0f64)) {
        let eta = direction(c);
        let p = problem(sine_field(), 1.5);
        let pencil = p.pencil().unwrap();
        let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, 6, &SolverOptions::default()).unwrap();
        let (dp, dm) = p.perturbation(&eta, &pencil).unwrap();
        let fd = central_differences(|t| Ok(values(&p.with_eps(p.eps.plus(t, &eta))?, 6)), 1e-2, 1e-3, 1e-8).unwrap();
        for j in 0..6 {
            let gap_lo = if j == 0 { f64::INFINITY } else { sol.values[j] - sol.values[j - 1] };
            let gap_hi = if j == 5 { f64::INFINITY } else { sol.values[j + 1] - sol.values[j] };
            if gap_lo.min(gap_hi) < 1e-2 {
                continue;
            }
            let hf = discrete_eigenvalue_derivative(p.tau, sol.values[j], &sol.vectors[j], &dp, &dm);
            prop_assert!((hf - fd[j].fine).abs() <= 1e-6 * hf.abs().max(1e-2), "{j}: {hf} vs {}", fd[j].fine);
            prop_assert!(fd[j].is_consistent(1e-2));
        }
    }

    /// Λ_{F,s} of a whole window is smooth even through near-coincident
    /// values, and its discrete derivative matches fresh solves.
    #[test]
    fn window_symmetric_functions_match_finite_differences(c in prop::array::uniform6(-1.0..1.0f64), s in 1usize..4) {
        let eta = direction(c);
        let p = problem(PermittivityField::identity(), 1.0);
        let pencil = p.pencil().unwrap();
        let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, 10, &SolverOptions::default()).unwrap();
        // smallest window of at least three values that ends at a gap
        let k = (3..10).find(|&k| sol.values[k] - sol.values[k - 1] > 1e-2).unwrap();
        let (dp, dm) = p.perturbation(&eta, &pencil).unwrap();
        let part = ClusterPartition::new((0..k).map(|i| vec![i]).collect(), sol.values[..k].to_vec()).unwrap();
        let bases: Vec<Vec<Vec<f64>>> = (0..k).map(|i| vec![sol.vectors[i].clone()]).collect();
        let sigmas: Vec<Vec<f64>> = (0..k).map(|i| vec![sol.values[i]]).collect();
        let d = discrete_symmetric_derivative(&part, &bases, &sigmas, p.tau, &dp, &dm, s).unwrap();
        let fd = central_difference(
            |t| symmetric_function(&values(&p.with_eps(p.eps.plus(t, &eta))?, k), s),
            1e-2,
            1e-3,
            1e-8,
        )
        .unwrap();
        prop_assert!((d - fd.fine).abs() <= 1e-6 * d.abs().max(1.0), "{} vs {}", d, fd.fine);
    }
}

fn cube_triple() -> (CavityProblem, Spectrum) {
    let mesh = build_box_mesh([PI; 3], [4; 3]).unwrap();
    let p = CavityProblem::new(mesh, gauss_rule(3).unwrap(), PermittivityField::identity(), 2.0).unwrap();
    let s = compute_spectrum(&p, &SpectrumOptions { k: 8, r_max: 0.5, ..SpectrumOptions::default() }).unwrap();
    (p, s)
}

#[test]
fn trace_identity_and_basis_independence() {
    let (p, s) = cube_triple();
    let c = s.maxwell_clusters(1e-3).remove(0);
    assert_eq!(c.multiplicity(), 3);
    let dir = make_diagonal_direction(
        [1.0, 0.6, 0.3],
        Bump::new([PI / 2.0; 3], [0.45 * PI; 3]),
        &BoxDomain::new([PI; 3]).unwrap(),
    )
    .unwrap();
    let (_, dm) = p.perturbation(&dir.field, &s.pencil).unwrap();
    let basis = s.vectors_of(&c.entry_indices);
    let slopes = branch_slopes(&rellich_nagy_matrix(c.value, &basis, &s.pencil.m, &dm, 1e-8).unwrap());
    let part = ClusterPartition::new(vec![vec![0, 1, 2]], vec![c.value]).unwrap();
    let trace = symmetric_function_derivative(&part, &[basis.clone()], &s.pencil.m, &dm, 1, 1e-8).unwrap();
    assert!((slopes.iter().sum::<f64>() - trace).abs() < 1e-10 * trace.abs().max(1.0));

    // another orthonormal basis of the same eigenspace gives the same slopes
    let (a, b) = (0.3f64.cos(), 0.3f64.sin());
    let rotated = vec![
        basis[0].iter().zip(&basis[1]).map(|(x, y)| a * x - b * y).collect(),
        basis[0].iter().zip(&basis[1]).map(|(x, y)| b * x + a * y).collect(),
        basis[2].iter().map(|x| -x).collect::<Vec<f64>>(),
    ];
    let again = branch_slopes(&rellich_nagy_matrix(c.value, &rotated, &s.pencil.m, &dm, 1e-8).unwrap());
    for (x, y) in slopes.iter().zip(&again) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!(slopes[1] - slopes[0] > 1e-3 && slopes[2] - slopes[1] > 1e-3, "{slopes:?}");
}

#[test]
fn tracked_branches_cross_with_matrix_slopes() {
    let (p, s) = cube_triple();
    let c = s.maxwell_clusters(1e-3).remove(0);
    let dir =
        make_diagonal_direction([1.0, 0.6, 0.3], Bump::new([PI / 2.0; 3], [0.45 * PI; 3]), &p.mesh.domain()).unwrap();
    let (dp, dm) = p.perturbation(&dir.field, &s.pencil).unwrap();
    let basis = s.vectors_of(&c.entry_indices);
    let slopes = branch_slopes(&discrete_cluster_matrix(p.tau, c.value, &basis, &dp, &dm));
    let start = c.entry_indices[0];
    let path = LinearPath::new(p.eps.clone(), dir.field.clone());
    let h = 1e-3;
    let curves = track_branches(&p, &path, &[-h, 0.0, h], &TrackOptions::new(start..start + 3)).unwrap();
    let mut fd: Vec<f64> = (0..3).map(|b| curves.central_slope(b, 1).unwrap()).collect();
    fd.sort_by(f64::total_cmp);
    for (f, m) in fd.iter().zip(&slopes) {
        assert!((f - m).abs() < 1e-4 * m.abs().max(1.0), "{f} vs {m}");
    }
    // sorted values have a corner: the lowest branch on the left is the
    // steepest-falling one on the right
    let left = (curves.sorted[1][0] - curves.sorted[0][0]) / h;
    let right = (curves.sorted[2][0] - curves.sorted[1][0]) / h;
    assert!((left - right).abs() > 1e-2 * c.value, "{left} {right}");
}

#[test]
fn split_on_a_coarse_cube() {
    let (p, s) = cube_triple();
    let c = s.maxwell_clusters(1e-3).remove(0);
    let r = split_cluster(&p, &s, &c, &SplitOptions::default()).unwrap();
    assert!(r.t < 0.1);
    assert!(r.realized_gaps.iter().all(|&g| g > 1e-3 * c.value), "{:?}", r.realized_gaps);
    let check = values(&p.with_eps(r.eps.clone()).unwrap(), 8);
    for (x, y) in r.realized.iter().zip(&check[c.entry_indices[0]..]) {
        assert!((x - y).abs() < 1e-9 * y);
    }

    let single = MaxwellCluster { value: s.entries[0].sigma, maxwell_indices: vec![0], entry_indices: vec![0] };
    assert!(split_cluster(&p, &s, &single, &SplitOptions::default()).is_err());
}

#[test]
fn symmetric_scalar_bump_cannot_fully_split_the_cube_triple() {
    // the centered scalar bump keeps the axis-permutation symmetry, under
    // which the triple carries a two-dimensional irreducible block
    let (p, s) = cube_triple();
    let c = s.maxwell_clusters(1e-3).remove(0);
    let dirs = scalar_directions(&p.mesh.domain()).unwrap();
    assert_eq!(dirs.len(), 4);
    let (_, dm) = p.perturbation(&dirs[0].field, &s.pencil).unwrap();
    let slopes =
        branch_slopes(&rellich_nagy_matrix(c.value, &s.vectors_of(&c.entry_indices), &s.pencil.m, &dm, 1e-8).unwrap());
    let min_gap = slopes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    assert!(min_gap < 1e-8, "{slopes:?}");
    let r = split_cluster_with(&p, &s, &c, dirs[..1].to_vec(), &SplitOptions::default());
    assert!(matches!(r, Err(cavity_spectra::Error::NoSplitFound { .. })));
}
