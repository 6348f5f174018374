//! Structured hexahedral meshes of axis-aligned boxes, tensor Gauss rules
//! and the tangential boundary constraints `ν × u = 0`.
//!
//! The box is `(0,a) × (0,b) × (0,c)`. Nodes are numbered with x fastest:
//! `node = i + (nx+1) (j + (ny+1) k)`. Within a cell the eight local nodes
//! follow the same tensor order, `local = ix + 2 iy + 4 iz`, and map to the
//! reference corner `(2ix−1, 2iy−1, 2iz−1)` of `[−1,1]³`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reference cell `[−1,1]³` has volume 8.
pub const REFERENCE_VOLUME: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    extent: [f64; 3],
}

impl BoxDomain {
    pub fn new(extent: [f64; 3]) -> Result<Self> {
        if extent.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(invalid(format!("box extents must be positive, got {extent:?}")));
        }
        Ok(Self { extent })
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }
}

/// One of the six faces of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    /// Axis of the outward normal.
    pub fn normal_axis(self) -> usize {
        self as usize / 2
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Set of incident faces, stored as a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FaceSet(u8);

impl FaceSet {
    pub fn contains(self, face: Face) -> bool {
        self.0 & face.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Face> {
        Face::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    fn insert(&mut self, face: Face) {
        self.0 |= face.bit();
    }
}

/// Set of vector components (0 = x, 1 = y, 2 = z).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ComponentSet(u8);

impl ComponentSet {
    pub const EMPTY: ComponentSet = ComponentSet(0);
    pub const ALL: ComponentSet = ComponentSet(0b111);

    pub fn from_components(components: &[usize]) -> Self {
        let mut set = Self::EMPTY;
        for &c in components {
            set.insert(c);
        }
        set
    }

    pub fn contains(self, component: usize) -> bool {
        component < 3 && self.0 & (1 << component) != 0
    }

    pub fn insert(&mut self, component: usize) {
        assert!(component < 3);
        self.0 |= 1 << component;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..3).filter(move |&c| self.contains(c))
    }
}

/// Provenance record of a mesh: node and cell arrays are regenerated from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshDescription {
    pub extent: [f64; 3],
    pub subdivisions: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: BoxDomain,
    subdivisions: [usize; 3],
    nodes: Vec<[f64; 3]>,
    cells: Vec<[usize; 8]>,
    boundary_faces: Vec<FaceSet>,
}

/// Uniform tensor grid of `subdivisions` cells on the box `extent`.
pub fn build_box_mesh(extent: [f64; 3], subdivisions: [usize; 3]) -> Result<Mesh> {
    let domain = BoxDomain::new(extent)?;
    if subdivisions.iter().any(|&n| n == 0) {
        return Err(invalid(format!("subdivisions must be at least 1, got {subdivisions:?}")));
    }
    let [nx, ny, nz] = subdivisions;
    let coord = |axis: usize, i: usize| -> f64 {
        let n = subdivisions[axis];
        // the far plane is assigned, not computed, so it matches the face exactly
        if i == n {
            extent[axis]
        } else {
            extent[axis] * i as f64 / n as f64
        }
    };

    let node_count = (nx + 1) * (ny + 1) * (nz + 1);
    let mut nodes = Vec::with_capacity(node_count);
    let mut boundary_faces = Vec::with_capacity(node_count);
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([coord(0, i), coord(1, j), coord(2, k)]);
                let mut faces = FaceSet::default();
                for (axis, idx) in [i, j, k].into_iter().enumerate() {
                    if idx == 0 {
                        faces.insert(Face::ALL[2 * axis]);
                    }
                    if idx == subdivisions[axis] {
                        faces.insert(Face::ALL[2 * axis + 1]);
                    }
                }
                boundary_faces.push(faces);
            }
        }
    }

    let node_index = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut cells = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut cell = [0; 8];
                for (local, slot) in cell.iter_mut().enumerate() {
                    *slot = node_index(i + (local & 1), j + ((local >> 1) & 1), k + ((local >> 2) & 1));
                }
                cells.push(cell);
            }
        }
    }

    Ok(Mesh { domain, subdivisions, nodes, cells, boundary_faces })
}

impl Mesh {
    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn extent(&self) -> [f64; 3] {
        self.domain.extent
    }

    pub fn subdivisions(&self) -> [usize; 3] {
        self.subdivisions
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 8]] {
        &self.cells
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn boundary_faces(&self, node: usize) -> FaceSet {
        self.boundary_faces[node]
    }

    pub fn description(&self) -> MeshDescription {
        MeshDescription { extent: self.extent(), subdivisions: self.subdivisions }
    }

    pub fn from_description(desc: &MeshDescription) -> Result<Mesh> {
        build_box_mesh(desc.extent, desc.subdivisions)
    }

    /// Edge lengths `(hx, hy, hz)` shared by every cell.
    pub fn cell_size(&self) -> [f64; 3] {
        let e = self.extent();
        let n = self.subdivisions;
        [e[0] / n[0] as f64, e[1] / n[1] as f64, e[2] / n[2] as f64]
    }

    /// Determinant of the (diagonal) reference-to-physical Jacobian.
    pub fn jacobian_determinant(&self) -> f64 {
        let h = self.cell_size();
        h[0] * h[1] * h[2] / REFERENCE_VOLUME
    }

    /// Physical point of reference coordinates `xi ∈ [−1,1]³` in `cell`.
    pub fn map_to_physical(&self, cell: usize, xi: [f64; 3]) -> [f64; 3] {
        let lo = self.nodes[self.cells[cell][0]];
        let hi = self.nodes[self.cells[cell][7]];
        std::array::from_fn(|d| lo[d] + 0.5 * (xi[d] + 1.0) * (hi[d] - lo[d]))
    }

    /// Cell containing `x`; points on shared faces go to the higher cell,
    /// points outside are clamped.
    pub fn locate(&self, x: [f64; 3]) -> usize {
        let h = self.cell_size();
        let idx: [usize; 3] = std::array::from_fn(|d| {
            let n = self.subdivisions[d];
            let f = (x[d] / h[d]).floor();
            if f < 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        });
        let [nx, ny, _] = self.subdivisions;
        idx[0] + nx * (idx[1] + ny * idx[2])
    }
}

/// Components whose nodal values are fixed to zero by `ν × u = 0`.
///
/// On a face with normal along axis `k` the two tangential components are
/// constrained; edge and corner nodes take the union over their faces.
pub fn tangential_constraints(mesh: &Mesh) -> Vec<ComponentSet> {
    (0..mesh.node_count()).map(|n| constraints_for_faces(mesh.boundary_faces(n))).collect()
}

pub fn constraints_for_faces(faces: FaceSet) -> ComponentSet {
    faces.iter().fold(ComponentSet::EMPTY, |acc, face| {
        let k = face.normal_axis();
        acc.union(ComponentSet::from_components(&[(k + 1) % 3, (k + 2) % 3]))
    })
}

/// Tensor-product rule on the reference cell `[−1,1]³`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

pub const MAX_GAUSS_DEGREE: usize = 19;

/// Tensorized Gauss–Legendre rule exact for polynomials of degree ≤ `degree`
/// in each variable.
pub fn gauss_rule(degree: usize) -> Result<QuadratureRule> {
    if degree == 0 || degree > MAX_GAUSS_DEGREE {
        return Err(invalid(format!("quadrature degree must be in 1..={MAX_GAUSS_DEGREE}, got {degree}")));
    }
    let (x, w) = gauss_legendre_1d(degree / 2 + 1);
    let n = x.len();
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                points.push([x[i], x[j], x[k]]);
                weights.push(w[i] * w[j] * w[k]);
            }
        }
    }
    Ok(QuadratureRule { degree, points, weights })
}

impl QuadratureRule {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per axis of the underlying 1D rule.
    pub fn points_per_axis(&self) -> usize {
        self.degree / 2 + 1
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1,1]`,
/// by Newton iteration on `P_n` from the Chebyshev guesses.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
