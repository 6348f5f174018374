//! Symmetric matrix permittivity fields ε(x), perturbation directions η,
//! the coercivity audit and the W^{1,∞} distance.
//!
//! A field is a symmetric 3×3 array of closed-form [`Expr`] entries (with
//! exact gradients through forward-mode evaluation), optionally plus
//! piecewise-constant cell tables. Symmetry is structural: only the six
//! upper-triangular entries are stored and `(i,j)`, `(j,i)` read the same
//! slot.

pub mod expr;

use std::sync::Arc;

use serde::Serialize;

pub use expr::{Bump, Dual, Expr};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BoxDomain, Mesh, MeshDescription, QuadratureRule};
use crate::linalg::sym3::{self, Mat3};

/// Oversampling of the audit grid relative to the quadrature density.
pub const DEFAULT_OVERSAMPLE: f64 = 4.0;

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn slot(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => panic!("matrix index ({i}, {j}) out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Constant,
    ScalarIsotropic,
    AnalyticMatrix,
    /// Constant inside each cell; zero jacobian, outside W^{1,∞}.
    PerCellConstant,
}

/// Value and spatial jacobian `jacobian[k][i][j] = ∂ε_ij/∂x_k` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: Mat3,
    pub jacobian: [Mat3; 3],
}

impl FieldSample {
    /// `(div ε)_c = Σ_i ∂_i ε_ic`, the divergence of column `c`.
    pub fn divergence(&self) -> [f64; 3] {
        std::array::from_fn(|c| (0..3).map(|i| self.jacobian[i][i][c]).sum())
    }
}

#[derive(Debug)]
struct CellTable {
    grid: MeshDescription,
    values: Vec<[f64; 6]>,
}

impl CellTable {
    fn locate(&self, x: [f64; 3]) -> usize {
        let n = self.grid.subdivisions;
        let idx: [usize; 3] = std::array::from_fn(|d| {
            let h = self.grid.extent[d] / n[d] as f64;
            let f = (x[d] / h).floor();
            if f < 0.0 {
                0
            } else {
                (f as usize).min(n[d] - 1)
            }
        });
        idx[0] + n[0] * (idx[1] + n[1] * idx[2])
    }
}

#[derive(Debug, Clone)]
pub struct PermittivityField {
    entries: Arc<[Expr; 6]>,
    cells: Vec<(f64, Arc<CellTable>)>,
    constant: Option<[f64; 6]>,
}

impl PermittivityField {
    fn from_entries(entries: [Expr; 6]) -> Self {
        let constant = entries.iter().map(Expr::as_constant).collect::<Option<Vec<_>>>().map(|v| {
            let mut c = [0.0; 6];
            c.copy_from_slice(&v);
            c
        });
        Self { entries: Arc::new(entries), cells: Vec::new(), constant }
    }

    pub fn constant(m: Mat3) -> Result<Self> {
        for i in 0..3 {
            for j in 0..i {
                if m[i][j] != m[j][i] {
                    return Err(invalid(format!("matrix is not symmetric: {m:?}")));
                }
            }
        }
        Ok(Self::from_entries(UPPER.map(|(i, j)| Expr::Const(m[i][j]))))
    }

    pub fn identity() -> Self {
        Self::scaled_identity(1.0)
    }

    pub fn scaled_identity(alpha: f64) -> Self {
        Self::diag([alpha; 3])
    }

    pub fn diag(d: [f64; 3]) -> Self {
        Self::from_entries(UPPER.map(|(i, j)| Expr::Const(if i == j { d[i] } else { 0.0 })))
    }

    /// `f(x) I`
    pub fn scalar(f: Expr) -> Self {
        Self::from_entries(UPPER.map(|(i, j)| if i == j { f.clone() } else { Expr::Const(0.0) }))
    }

    /// Entries given as `(row, col, expression)` for the upper triangle
    /// `(0,0), (0,1), (0,2), (1,1), (1,2), (2,2)`.
    pub fn from_upper(upper: [Expr; 6]) -> Self {
        Self::from_entries(upper)
    }

    /// Full 3×3 array of expression sources; mirrored entries must parse to
    /// the same expression.
    pub fn from_sources(src: &[[&str; 3]; 3]) -> Result<Self> {
        let mut parsed: Vec<Vec<Expr>> = Vec::with_capacity(3);
        for row in src {
            parsed.push(row.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?);
        }
        for i in 0..3 {
            for j in 0..i {
                if parsed[i][j] != parsed[j][i] {
                    return Err(invalid(format!("entries ({i},{j}) and ({j},{i}) differ; ε must be symmetric")));
                }
            }
        }
        Ok(Self::from_entries(UPPER.map(|(i, j)| parsed[i][j].clone())))
    }

    /// Piecewise-constant field, one symmetric matrix per cell of `mesh`.
    pub fn per_cell(mesh: &Mesh, values: &[Mat3]) -> Result<Self> {
        if values.len() != mesh.cell_count() {
            return Err(invalid(format!("{} cell values for {} cells", values.len(), mesh.cell_count())));
        }
        let mut packed = Vec::with_capacity(values.len());
        for m in values {
            if (0..3).any(|i| (0..i).any(|j| m[i][j] != m[j][i])) {
                return Err(invalid("cell matrix is not symmetric"));
            }
            packed.push(UPPER.map(|(i, j)| m[i][j]));
        }
        let table = CellTable { grid: mesh.description(), values: packed };
        Ok(Self {
            entries: Arc::new(UPPER.map(|_| Expr::Const(0.0))),
            cells: vec![(1.0, Arc::new(table))],
            constant: None,
        })
    }

    /// `self + t · other`
    pub fn plus(&self, t: f64, other: &PermittivityField) -> Self {
        let entries: [Expr; 6] = std::array::from_fn(|s| Expr::combine(1.0, &self.entries[s], t, &other.entries[s]));
        let mut out = Self::from_entries(entries);
        out.cells = self.cells.clone();
        out.cells.extend(other.cells.iter().map(|(c, tab)| (t * c, tab.clone())));
        if !out.cells.is_empty() {
            out.constant = None;
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let zero = Self::from_entries(UPPER.map(|_| Expr::Const(0.0)));
        zero.plus(alpha, self)
    }

    pub fn kind(&self) -> FieldKind {
        if !self.cells.is_empty() {
            return FieldKind::PerCellConstant;
        }
        if self.constant.is_some() {
            return FieldKind::Constant;
        }
        let e = &self.entries;
        if e[1].is_zero() && e[2].is_zero() && e[4].is_zero() && e[0] == e[3] && e[3] == e[5] {
            FieldKind::ScalarIsotropic
        } else {
            FieldKind::AnalyticMatrix
        }
    }

    /// True when the field has a (classical) jacobian everywhere.
    pub fn is_w1inf(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn entry_expression(&self, i: usize, j: usize) -> &Expr {
        &self.entries[slot(i, j)]
    }

    /// The upper-triangle expressions as strings, for reports.
    pub fn describe(&self) -> Vec<String> {
        let mut out: Vec<String> =
            UPPER.iter().zip(self.entries.iter()).map(|((i, j), e)| format!("eps[{i}][{j}] = {e}")).collect();
        if !self.cells.is_empty() {
            out.push(format!("+ {} piecewise-constant cell table(s)", self.cells.len()));
        }
        out
    }

    pub fn value(&self, x: [f64; 3]) -> Mat3 {
        self.eval(x).value
    }

    pub fn eval(&self, x: [f64; 3]) -> FieldSample {
        let mut packed = [0.0; 6];
        let mut grad = [[0.0; 3]; 6];
        if let Some(c) = self.constant {
            packed = c;
        } else {
            for s in 0..6 {
                let d = self.entries[s].eval(x);
                packed[s] = d.v;
                grad[s] = d.d;
            }
        }
        for (coeff, table) in &self.cells {
            let v = &table.values[table.locate(x)];
            for s in 0..6 {
                packed[s] += coeff * v[s];
            }
        }
        let value: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| packed[slot(i, j)]));
        let jacobian: [Mat3; 3] =
            std::array::from_fn(|k| std::array::from_fn(|i| std::array::from_fn(|j| grad[slot(i, j)][k])));
        FieldSample { value, jacobian }
    }
}

/// Divergence of the columns of ε at `x`.
pub fn matrix_divergence(eps: &PermittivityField, x: [f64; 3]) -> [f64; 3] {
    eps.eval(x).divergence()
}

/// Audit points: every quadrature point, a uniform per-cell oversampling
/// grid and every mesh node (so sup-norms see the closure of Ω).
#[derive(Debug, Clone)]
pub struct SamplePoints {
    points: Vec<[f64; 3]>,
}

impl SamplePoints {
    pub fn new(mesh: &Mesh, rule: &QuadratureRule, oversample: f64) -> Self {
        let q = rule.points_per_axis() as f64;
        let s = (q * oversample.max(1.0).cbrt()).ceil() as usize;
        let mut points = Vec::with_capacity(mesh.cell_count() * (rule.len() + s * s * s) + mesh.node_count());
        let grid: Vec<f64> = (0..s).map(|i| 2.0 * (i as f64 + 0.5) / s as f64 - 1.0).collect();
        for c in 0..mesh.cell_count() {
            for xi in rule.points() {
                points.push(mesh.map_to_physical(c, *xi));
            }
            for &gz in &grid {
                for &gy in &grid {
                    for &gx in &grid {
                        points.push(mesh.map_to_physical(c, [gx, gy, gz]));
                    }
                }
            }
        }
        points.extend_from_slice(mesh.nodes());
        Self { points }
    }

    pub fn default_for(mesh: &Mesh, rule: &QuadratureRule) -> Self {
        Self::new(mesh, rule, DEFAULT_OVERSAMPLE)
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityEstimate {
    pub c_eps: f64,
    pub argmin_point: [f64; 3],
}

/// Smallest eigenvalue of ε over the audit points. A falsifier: a positive
/// result does not certify coercivity between samples.
pub fn audit_admissibility(eps: &PermittivityField, mesh: &Mesh, rule: &QuadratureRule) -> Result<CoercivityEstimate> {
    audit_on(eps, &SamplePoints::default_for(mesh, rule))
}

pub fn audit_on(eps: &PermittivityField, samples: &SamplePoints) -> Result<CoercivityEstimate> {
    let mut best = CoercivityEstimate { c_eps: f64::INFINITY, argmin_point: [0.0; 3] };
    for &x in samples.points() {
        let m = sym3::min_eigenvalue(&eps.value(x));
        if m < best.c_eps || m.is_nan() {
            best = CoercivityEstimate { c_eps: m, argmin_point: x };
        }
    }
    if !(best.c_eps > 0.0) {
        return Err(Error::NotAdmissible { point: best.argmin_point, min_eigenvalue: best.c_eps });
    }
    Ok(best)
}

/// `max_{ij} max(‖Δε_ij‖_∞, max_k ‖∂_k Δε_ij‖_∞)` over the audit points.
pub fn w1inf_distance(a: &PermittivityField, b: &PermittivityField, mesh: &Mesh, rule: &QuadratureRule) -> f64 {
    w1inf_distance_on(a, b, &SamplePoints::default_for(mesh, rule))
}

pub fn w1inf_distance_on(a: &PermittivityField, b: &PermittivityField, samples: &SamplePoints) -> f64 {
    let mut sup = 0.0f64;
    for &x in samples.points() {
        let sa = a.eval(x);
        let sb = b.eval(x);
        for i in 0..3 {
            for j in 0..3 {
                sup = sup.max((sa.value[i][j] - sb.value[i][j]).abs());
                for k in 0..3 {
                    sup = sup.max((sa.jacobian[k][i][j] - sb.jacobian[k][i][j]).abs());
                }
            }
        }
    }
    sup
}

/// `‖L^∞‖` of the entries only (no derivatives), over the audit points.
pub fn linf_norm_on(a: &PermittivityField, samples: &SamplePoints) -> f64 {
    samples
        .points()
        .iter()
        .map(|&x| a.value(x).iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max)
}

/// A symmetric direction η for perturbations `ε + tη`; no coercivity needed.
#[derive(Debug, Clone)]
pub struct PerturbationDirection {
    pub field: PermittivityField,
    /// Estimate of ‖η‖_{W^{1,∞}}.
    pub norm_estimate: f64,
    pub label: String,
}

impl PerturbationDirection {
    /// Constant symmetric direction; its W^{1,∞} norm is `max |η_ij|`.
    pub fn constant(m: Mat3) -> Result<Self> {
        let field = PermittivityField::constant(m)?;
        let norm = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
        Ok(Self { field, norm_estimate: norm, label: format!("constant {m:?}") })
    }

    pub fn from_field(field: PermittivityField, samples: &SamplePoints, label: impl Into<String>) -> Self {
        let zero = PermittivityField::scaled_identity(0.0);
        let norm_estimate = w1inf_distance_on(&field, &zero, samples);
        Self { field, norm_estimate, label: label.into() }
    }

    /// Same direction rescaled to unit norm estimate.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.norm_estimate > 0.0) {
            return Err(invalid("cannot normalize a zero direction"));
        }
        Ok(Self { field: self.field.scaled(1.0 / self.norm_estimate), norm_estimate: 1.0, label: self.label.clone() })
    }
}

fn check_bump(bump: &Bump, domain: &BoxDomain) -> Result<()> {
    if bump.is_zero() {
        return Err(invalid("bump is identically zero"));
    }
    let e = domain.extent();
    for d in 0..3 {
        if bump.center[d] - bump.radius[d] < 0.0 || bump.center[d] + bump.radius[d] > e[d] {
            return Err(invalid(format!("bump support leaves the box along axis {d}")));
        }
    }
    Ok(())
}

/// `η_h = ξ e_hh / ‖ξ‖_{W^{1,∞}}`, with the axis `h` counted from 1.
pub fn make_splitting_direction(h: usize, bump: Bump, domain: &BoxDomain) -> Result<PerturbationDirection> {
    if !(1..=3).contains(&h) {
        return Err(invalid(format!("axis must be 1, 2 or 3, got {h}")));
    }
    let mut w = [0.0; 3];
    w[h - 1] = 1.0;
    let mut d = make_diagonal_direction(w, bump, domain)?;
    d.label = format!("e{h}{h} bump at {:?}", bump.center);
    Ok(d)
}

/// `ξ diag(w) / (max|w| ‖ξ‖_{W^{1,∞}})`, a unit-norm diagonal direction.
pub fn make_diagonal_direction(weights: [f64; 3], bump: Bump, domain: &BoxDomain) -> Result<PerturbationDirection> {
    check_bump(&bump, domain)?;
    let wmax = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if wmax == 0.0 {
        return Err(invalid("diagonal weights are all zero"));
    }
    let scale = 1.0 / (wmax * bump.w1inf_norm());
    let mut entries = UPPER.map(|_| Expr::Const(0.0));
    for h in 0..3 {
        if weights[h] != 0.0 {
            let mut b = bump;
            b.amplitude *= weights[h] * scale;
            entries[slot(h, h)] = Expr::Bump(b);
        }
    }
    Ok(PerturbationDirection {
        field: PermittivityField::from_entries(entries),
        norm_estimate: 1.0,
        label: format!("diag{weights:?} bump at {:?}", bump.center),
    })
}
