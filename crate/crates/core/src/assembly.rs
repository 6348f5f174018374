//! Assembly of the penalized pencil `(K + τP, M)` and the scalar Dirichlet
//! pencil on trilinear nodal elements.
//!
//! Vector degrees of freedom are interleaved, `3·node + component`, which
//! keeps the envelope of the assembled matrices narrow. Each cell produces
//! an exactly symmetric local block; blocks are computed in parallel and
//! merged in cell order, so the global matrices are bitwise symmetric and
//! independent of the worker count.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::{tangential_constraints, Mesh, QuadratureRule};
use crate::linalg::CsrMatrix;
use crate::material::{FieldSample, PermittivityField};

const NODES: usize = 8;
const LOCAL: usize = 3 * NODES;

/// Shape function values and physical gradients at every quadrature point.
/// The mesh is uniform, so one table serves every cell.
struct ShapeTable {
    values: Vec<[f64; NODES]>,
    grads: Vec<[[f64; 3]; NODES]>,
    weights: Vec<f64>,
    points: Vec<[f64; 3]>,
}

impl ShapeTable {
    fn new(mesh: &Mesh, rule: &QuadratureRule) -> Self {
        let h = mesh.cell_size();
        let det = mesh.jacobian_determinant();
        let mut values = Vec::with_capacity(rule.len());
        let mut grads = Vec::with_capacity(rule.len());
        for xi in rule.points() {
            let mut n = [0.0; NODES];
            let mut g = [[0.0; 3]; NODES];
            for a in 0..NODES {
                let s: [f64; 3] = std::array::from_fn(|d| if a >> d & 1 == 1 { 1.0 } else { -1.0 });
                let f: [f64; 3] = std::array::from_fn(|d| 0.5 * (1.0 + s[d] * xi[d]));
                n[a] = f[0] * f[1] * f[2];
                for d in 0..3 {
                    let df = s[d] / h[d];
                    g[a][d] = df * f[(d + 1) % 3] * f[(d + 2) % 3];
                }
            }
            values.push(n);
            grads.push(g);
        }
        let weights = rule.weights().iter().map(|w| w * det).collect();
        Self { values, grads, weights, points: rule.points().to_vec() }
    }
}

type LocalBlock = Vec<f64>;

/// Computes one upper-triangular local block per cell (row-major `dim×dim`
/// storage, lower part unused) and scatters blocks in cell order.
fn assemble<F>(mesh: &Mesh, rule: &QuadratureRule, block: usize, kernel: F) -> CsrMatrix
where
    F: Fn(usize, &ShapeTable, &mut LocalBlock) + Sync,
{
    let table = ShapeTable::new(mesh, rule);
    let locals: Vec<LocalBlock> = (0..mesh.cell_count())
        .into_par_iter()
        .map(|c| {
            let mut loc = vec![0.0; block * block];
            kernel(c, &table, &mut loc);
            loc
        })
        .collect();
    let per_node = block / NODES;
    let n = mesh.node_count() * per_node;
    let mut triplets = Vec::with_capacity(locals.len() * block * block);
    for (c, loc) in locals.iter().enumerate() {
        let cell = &mesh.cells()[c];
        let dof = |l: usize| per_node * cell[l / per_node] + l % per_node;
        for i in 0..block {
            for j in i..block {
                let v = loc[i * block + j];
                triplets.push((dof(i), dof(j), v));
                if i != j {
                    triplets.push((dof(j), dof(i), v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

fn samples(field: &PermittivityField, mesh: &Mesh, cell: usize, table: &ShapeTable) -> Vec<FieldSample> {
    table.points.iter().map(|&xi| field.eval(mesh.map_to_physical(cell, xi))).collect()
}

/// `div(ε N_a e_c) = (ε∇N_a)_c + (div ε)_c N_a` for all 24 local functions.
fn local_divergences(s: &FieldSample, n: &[f64; NODES], g: &[[f64; 3]; NODES]) -> [f64; LOCAL] {
    let dv = s.divergence();
    std::array::from_fn(|l| {
        let (a, c) = (l / 3, l % 3);
        (0..3).map(|i| s.value[c][i] * g[a][i]).sum::<f64>() + dv[c] * n[a]
    })
}

/// `∫ curl φ_u · curl φ_v` over all vector nodal functions (no constraints).
pub fn assemble_curlcurl(mesh: &Mesh, rule: &QuadratureRule) -> CsrMatrix {
    assemble(mesh, rule, LOCAL, |_, t, loc| {
        for q in 0..t.weights.len() {
            let (w, g) = (t.weights[q], &t.grads[q]);
            for a in 0..NODES {
                for b in a..NODES {
                    let dot = w * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
                    for c in 0..3 {
                        let dstart = if a == b { c } else { 0 };
                        for d in dstart..3 {
                            let mut v = -w * g[a][d] * g[b][c];
                            if c == d {
                                v += dot;
                            }
                            loc[(3 * a + c) * LOCAL + 3 * b + d] += v;
                        }
                    }
                }
            }
        }
    })
}

/// `∫ div(εφ_u) div(εφ_v)`.
pub fn assemble_penalty(mesh: &Mesh, rule: &QuadratureRule, eps: &PermittivityField) -> CsrMatrix {
    assemble(mesh, rule, LOCAL, |cell, t, loc| {
        for (q, s) in samples(eps, mesh, cell, t).iter().enumerate() {
            let dv = local_divergences(s, &t.values[q], &t.grads[q]);
            let w = t.weights[q];
            for i in 0..LOCAL {
                for j in i..LOCAL {
                    loc[i * LOCAL + j] += w * dv[i] * dv[j];
                }
            }
        }
    })
}

/// `∫ (div(εφ_u) div(ηφ_v) + div(ηφ_u) div(εφ_v))`, the derivative of the
/// penalty matrix along `ε + tη`.
pub fn assemble_penalty_derivative(
    mesh: &Mesh,
    rule: &QuadratureRule,
    eps: &PermittivityField,
    eta: &PermittivityField,
) -> CsrMatrix {
    assemble(mesh, rule, LOCAL, |cell, t, loc| {
        let se = samples(eps, mesh, cell, t);
        let sh = samples(eta, mesh, cell, t);
        for q in 0..t.weights.len() {
            let de = local_divergences(&se[q], &t.values[q], &t.grads[q]);
            let dh = local_divergences(&sh[q], &t.values[q], &t.grads[q]);
            let w = t.weights[q];
            for i in 0..LOCAL {
                for j in i..LOCAL {
                    loc[i * LOCAL + j] += w * (de[i] * dh[j] + dh[i] * de[j]);
                }
            }
        }
    })
}

/// `∫ ε φ_u · φ_v`; any symmetric field is accepted, so this also
/// assembles `∫ η φ_u · φ_v` for perturbation directions.
pub fn assemble_mass(mesh: &Mesh, rule: &QuadratureRule, eps: &PermittivityField) -> CsrMatrix {
    assemble(mesh, rule, LOCAL, |cell, t, loc| {
        for (q, s) in samples(eps, mesh, cell, t).iter().enumerate() {
            let (w, n) = (t.weights[q], &t.values[q]);
            for a in 0..NODES {
                for b in a..NODES {
                    let nn = w * n[a] * n[b];
                    for c in 0..3 {
                        let dstart = if a == b { c } else { 0 };
                        for d in dstart..3 {
                            loc[(3 * a + c) * LOCAL + 3 * b + d] += nn * s.value[c][d];
                        }
                    }
                }
            }
        }
    })
}

/// Map between full `(node, component)` indices and the reduced numbering
/// left after tangential constraints are eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    full_to_reduced: Vec<Option<usize>>,
    reduced_to_full: Vec<usize>,
}

impl DofMap {
    pub fn for_mesh(mesh: &Mesh) -> Self {
        let constraints = tangential_constraints(mesh);
        let mut full_to_reduced = Vec::with_capacity(3 * constraints.len());
        let mut reduced_to_full = Vec::new();
        for (node, cs) in constraints.iter().enumerate() {
            for c in 0..3 {
                if cs.contains(c) {
                    full_to_reduced.push(None);
                } else {
                    full_to_reduced.push(Some(reduced_to_full.len()));
                    reduced_to_full.push(3 * node + c);
                }
            }
        }
        Self { full_to_reduced, reduced_to_full }
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced_to_full.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_to_reduced.len()
    }

    pub fn reduced_index(&self, node: usize, component: usize) -> Option<usize> {
        self.full_to_reduced[3 * node + component]
    }

    /// `(node, component)` of a reduced index.
    pub fn node_component(&self, reduced: usize) -> (usize, usize) {
        let f = self.reduced_to_full[reduced];
        (f / 3, f % 3)
    }

    pub fn reduce_matrix(&self, full: &CsrMatrix) -> CsrMatrix {
        full.principal_submatrix(&self.reduced_to_full)
    }

    pub fn reduce_vector(&self, full: &[f64]) -> Vec<f64> {
        self.reduced_to_full.iter().map(|&f| full[f]).collect()
    }

    /// Zero-extends a reduced vector to all nodal components.
    pub fn expand_vector(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim()];
        for (r, &f) in self.reduced_to_full.iter().enumerate() {
            out[f] = reduced[r];
        }
        out
    }
}

/// Reduced matrices of the penalized problem; the eigenproblem is
/// `(K + τP) u = σ M u`.
#[derive(Debug, Clone)]
pub struct OperatorPencil {
    pub k: CsrMatrix,
    pub p: CsrMatrix,
    pub m: CsrMatrix,
    pub tau: f64,
    pub dof_map: DofMap,
}

impl OperatorPencil {
    pub fn dim(&self) -> usize {
        self.dof_map.reduced_dim()
    }

    /// `A = K + τP`
    pub fn lhs(&self) -> CsrMatrix {
        self.k.add_scaled(self.tau, &self.p)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { tau, ..self.clone() })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

pub fn assemble_pencil(
    mesh: &Mesh,
    rule: &QuadratureRule,
    eps: &PermittivityField,
    tau: f64,
) -> Result<OperatorPencil> {
    check_tau(tau)?;
    let dof_map = DofMap::for_mesh(mesh);
    let k = dof_map.reduce_matrix(&assemble_curlcurl(mesh, rule));
    let p = dof_map.reduce_matrix(&assemble_penalty(mesh, rule, eps));
    let m = dof_map.reduce_matrix(&assemble_mass(mesh, rule, eps));
    Ok(OperatorPencil { k, p, m, tau, dof_map })
}

/// Reduced `(P'[η], M'[η])`, the derivatives of the penalty and mass
/// matrices along `ε + tη`.
pub fn assemble_pencil_derivative(
    mesh: &Mesh,
    rule: &QuadratureRule,
    eps: &PermittivityField,
    eta: &PermittivityField,
    dof_map: &DofMap,
) -> Result<(CsrMatrix, CsrMatrix)> {
    if !eps.is_w1inf() || !eta.is_w1inf() {
        return Err(invalid("derivatives need W^{1,∞} fields; per-cell tables are excluded"));
    }
    let dp = dof_map.reduce_matrix(&assemble_penalty_derivative(mesh, rule, eps, eta));
    let dm = dof_map.reduce_matrix(&assemble_mass(mesh, rule, eta));
    Ok((dp, dm))
}

/// `∫ ε∇f·∇g` and `∫ fg` on nodal functions vanishing on ∂Ω.
#[derive(Debug, Clone)]
pub struct ScalarPencil {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    pub free_nodes: Vec<usize>,
}

pub fn assemble_scalar_pencil(mesh: &Mesh, rule: &QuadratureRule, eps: &PermittivityField) -> ScalarPencil {
    let k = assemble(mesh, rule, NODES, |cell, t, loc| {
        for (q, s) in samples(eps, mesh, cell, t).iter().enumerate() {
            let (w, g) = (t.weights[q], &t.grads[q]);
            for a in 0..NODES {
                let eg: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| s.value[i][j] * g[a][j]).sum());
                for b in a..NODES {
                    loc[a * NODES + b] += w * (eg[0] * g[b][0] + eg[1] * g[b][1] + eg[2] * g[b][2]);
                }
            }
        }
    });
    let m = assemble(mesh, rule, NODES, |_, t, loc| {
        for q in 0..t.weights.len() {
            let (w, n) = (t.weights[q], &t.values[q]);
            for a in 0..NODES {
                for b in a..NODES {
                    loc[a * NODES + b] += w * n[a] * n[b];
                }
            }
        }
    });
    let free_nodes: Vec<usize> = (0..mesh.node_count()).filter(|&n| mesh.boundary_faces(n).is_empty()).collect();
    ScalarPencil { k: k.principal_submatrix(&free_nodes), m: m.principal_submatrix(&free_nodes), free_nodes }
}

/// Nodal interpolant of a vector field, in the full interleaved numbering.
pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    mesh.nodes().iter().flat_map(|&x| f(x)).collect()
}
