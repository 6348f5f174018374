//! Eigenvalues of symmetric 3×3 matrices.
//!
//! The trigonometric closed form is used when the spectrum is well
//! separated; near-degenerate inputs (where `acos` loses accuracy) fall back
//! to cyclic Jacobi sweeps.

pub type Mat3 = [[f64; 3]; 3];

const JACOBI_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order.
pub fn eigenvalues(a: &Mat3) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        let mut d = [a[0][0], a[1][1], a[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| (a[i][j] - if i == j { q } else { 0.0 }) / p));
    let r = 0.5 * det(&b);
    if r.abs() > 1.0 - 1e-6 {
        return jacobi_eigenvalues(a);
    }
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    [lo, mid, hi]
}

pub fn min_eigenvalue(a: &Mat3) -> f64 {
    eigenvalues(a)[0]
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Cyclic Jacobi; eigenvalues ascending.
pub fn jacobi_eigenvalues(a: &Mat3) -> [f64; 3] {
    let mut m = *a;
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for _ in 0..50 {
        let off = (m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2)).sqrt();
        if off <= JACOBI_TOL * 1e-3 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // m ← Jᵀ m J
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
        }
    }
    let mut d = [m[0][0], m[1][1], m[2][2]];
    d.sort_by(f64::total_cmp);
    d
}
