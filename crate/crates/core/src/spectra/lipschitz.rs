//! Empirical Lipschitz ratios of penalized eigenvalues in the permittivity.

use super::CavityProblem;
use crate::eigensolve::{solve_gsym_with, SolverOptions};
use crate::error::{invalid, Result};
use crate::material::{w1inf_distance, PermittivityField};

/// `σ_j` of the penalized pencil at `eps`, with `j` counted from 1.
pub fn penalized_eigenvalue(
    problem: &CavityProblem,
    eps: &PermittivityField,
    j: usize,
    solver: &SolverOptions,
) -> Result<f64> {
    if j == 0 {
        return Err(invalid("eigenvalue index is counted from 1"));
    }
    let pencil = problem.with_eps(eps.clone())?.pencil()?;
    let sol = solve_gsym_with(&pencil.lhs(), &pencil.m, j, solver)?;
    Ok(sol.values[j - 1])
}

/// `|σ_j[ε₁] − σ_j[ε₂]| / ‖ε₁ − ε₂‖_{W^{1,∞}}` on the mesh and τ of `problem`.
pub fn lipschitz_ratio(
    problem: &CavityProblem,
    eps1: &PermittivityField,
    eps2: &PermittivityField,
    j: usize,
    solver: &SolverOptions,
) -> Result<f64> {
    let d = w1inf_distance(eps1, eps2, &problem.mesh, &problem.rule);
    if !(d > 0.0) {
        return Err(invalid("permittivities coincide on the sample set"));
    }
    let a = penalized_eigenvalue(problem, eps1, j, solver)?;
    let b = penalized_eigenvalue(problem, eps2, j, solver)?;
    Ok((a - b).abs() / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_box_mesh, gauss_rule};
    use std::f64::consts::PI;

    fn problem() -> CavityProblem {
        let mesh = build_box_mesh([PI; 3], [3; 3]).unwrap();
        CavityProblem::new(mesh, gauss_rule(3).unwrap(), PermittivityField::identity(), 1.0).unwrap()
    }

    #[test]
    fn scaling_pair_and_symmetry() {
        let p = problem();
        let s = SolverOptions::default();
        let a = PermittivityField::identity();
        let b = PermittivityField::scaled_identity(1.01);
        let r = lipschitz_ratio(&p, &a, &b, 2, &s).unwrap();
        let direct = penalized_eigenvalue(&p, &a, 2, &s).unwrap() - penalized_eigenvalue(&p, &b, 2, &s).unwrap();
        assert!((r - direct.abs() / 0.01).abs() < 1e-8 * r);
        assert_eq!(r, lipschitz_ratio(&p, &b, &a, 2, &s).unwrap());
        assert!(lipschitz_ratio(&p, &a, &a, 1, &s).is_err());
        assert!(penalized_eigenvalue(&p, &a, 0, &s).is_err());
    }
}
