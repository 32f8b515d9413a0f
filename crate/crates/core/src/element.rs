//! Reference element families on axis-aligned boxes.
//!
//! Local numbering is lexicographic with the first coordinate fastest:
//! trilinear `a = i + 2j + 4k`, triquadratic `a = i + 3j + 9k`. The plate
//! family is the Bogner–Fox–Schmit rectangle with four DOFs per vertex
//! (value, `∂x`, `∂y`, `∂xy`); local DOF `4a + d` with `a = i + 2j`.

use crate::quadrature::QuadRule;
use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    /// Q1 on a 3D box (8 nodes).
    Trilinear,
    /// Q2 on a 3D box (27 nodes).
    Triquadratic,
    /// Bicubic Hermite plate rectangle (16 DOFs).
    HermitePlate,
    /// Bilinear in-plane times linear in the inflation variable, on `(x1, x2, s)`.
    PlatePressure,
}

impl ElementFamily {
    pub fn dim(self) -> usize {
        match self {
            Self::HermitePlate => 2,
            _ => 3,
        }
    }

    pub fn n_basis(self) -> usize {
        match self {
            Self::Trilinear | Self::PlatePressure => 8,
            Self::Triquadratic => 27,
            Self::HermitePlate => 16,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ElementError {
    #[error("degenerate cell: extent {extent} along axis {axis}")]
    DegenerateCell { axis: usize, extent: f64 },
    #[error("quadrature dimension {rule} does not match element dimension {family}")]
    DimensionMismatch { rule: usize, family: usize },
}

/// Basis values and reference derivatives at a set of reference points.
#[derive(Debug, Clone)]
pub struct BasisTable<T> {
    pub family: ElementFamily,
    pub n_basis: usize,
    pub n_points: usize,
    /// `values[q * n_basis + a]`
    pub values: Vec<T>,
    /// Reference gradients, same layout.
    pub grads: Vec<[T; 3]>,
    /// Reference second derivatives `(xx, yy, xy)`; plate family only.
    pub hessians: Vec<[T; 3]>,
    /// Reference quadrature weights (empty when built from bare points).
    pub weights: Vec<T>,
}

impl<T: Real> BasisTable<T> {
    #[inline]
    pub fn value(&self, q: usize, a: usize) -> T {
        self.values[q * self.n_basis + a]
    }
}

/// Basis tables on a physical cell, with weights scaled by the cell measure.
#[derive(Debug, Clone)]
pub struct PhysicalTable<T> {
    pub n_basis: usize,
    pub n_points: usize,
    pub values: Vec<T>,
    pub grads: Vec<[T; 3]>,
    /// Physical `(∂xx, ∂yy, ∂xy)`; plate family only.
    pub hessians: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> PhysicalTable<T> {
    #[inline]
    pub fn value(&self, q: usize, a: usize) -> T {
        self.values[q * self.n_basis + a]
    }

    #[inline]
    pub fn grad(&self, q: usize, a: usize) -> [T; 3] {
        self.grads[q * self.n_basis + a]
    }

    #[inline]
    pub fn hessian(&self, q: usize, a: usize) -> [T; 3] {
        self.hessians[q * self.n_basis + a]
    }

    /// Plate Laplacian of basis `a` at point `q`.
    #[inline]
    pub fn laplacian(&self, q: usize, a: usize) -> T {
        let h = self.hessian(q, a);
        h[0] + h[1]
    }
}

fn lin<T: Real>(t: T) -> ([T; 2], [T; 2]) {
    ([T::one() - t, t], [-T::one(), T::one()])
}

fn quad<T: Real>(t: T) -> ([T; 3], [T; 3]) {
    let c = T::lit;
    (
        [c(2.0) * t * t - c(3.0) * t + T::one(), c(-4.0) * t * t + c(4.0) * t, c(2.0) * t * t - t],
        [c(4.0) * t - c(3.0), c(-8.0) * t + c(4.0), c(4.0) * t - T::one()],
    )
}

/// Cubic Hermite functions on `[0,1]`, ordered `(node, derivative)` as
/// `[value@0, slope@0, value@1, slope@1]`, with first and second derivatives.
fn hermite<T: Real>(t: T) -> ([T; 4], [T; 4], [T; 4]) {
    let c = T::lit;
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            T::one() - c(3.0) * t2 + c(2.0) * t3,
            t - c(2.0) * t2 + t3,
            c(3.0) * t2 - c(2.0) * t3,
            -t2 + t3,
        ],
        [
            c(-6.0) * t + c(6.0) * t2,
            T::one() - c(4.0) * t + c(3.0) * t2,
            c(6.0) * t - c(6.0) * t2,
            c(-2.0) * t + c(3.0) * t2,
        ],
        [
            c(-6.0) + c(12.0) * t,
            c(-4.0) + c(6.0) * t,
            c(6.0) - c(12.0) * t,
            c(-2.0) + c(6.0) * t,
        ],
    )
}

/// Evaluates `family` at arbitrary reference points.
pub fn eval_basis_at<T: Real>(family: ElementFamily, points: &[[T; 3]]) -> BasisTable<T> {
    let nb = family.n_basis();
    let np = points.len();
    let mut values = Vec::with_capacity(np * nb);
    let mut grads = Vec::with_capacity(np * nb);
    let mut hessians = Vec::new();
    for p in points {
        match family {
            ElementFamily::Trilinear | ElementFamily::PlatePressure => {
                let (vx, dx) = lin(p[0]);
                let (vy, dy) = lin(p[1]);
                let (vz, dz) = lin(p[2]);
                for k in 0..2 {
                    for j in 0..2 {
                        for i in 0..2 {
                            values.push(vx[i] * vy[j] * vz[k]);
                            grads.push([dx[i] * vy[j] * vz[k], vx[i] * dy[j] * vz[k], vx[i] * vy[j] * dz[k]]);
                        }
                    }
                }
            }
            ElementFamily::Triquadratic => {
                let (vx, dx) = quad(p[0]);
                let (vy, dy) = quad(p[1]);
                let (vz, dz) = quad(p[2]);
                for k in 0..3 {
                    for j in 0..3 {
                        for i in 0..3 {
                            values.push(vx[i] * vy[j] * vz[k]);
                            grads.push([dx[i] * vy[j] * vz[k], vx[i] * dy[j] * vz[k], vx[i] * vy[j] * dz[k]]);
                        }
                    }
                }
            }
            ElementFamily::HermitePlate => {
                let (hx, dhx, ddhx) = hermite(p[0]);
                let (hy, dhy, ddhy) = hermite(p[1]);
                for j in 0..2 {
                    for i in 0..2 {
                        for d in 0..4 {
                            let (ax, ay) = (d & 1, d >> 1);
                            let (a, b) = (2 * i + ax, 2 * j + ay);
                            values.push(hx[a] * hy[b]);
                            grads.push([dhx[a] * hy[b], hx[a] * dhy[b], T::zero()]);
                            hessians.push([ddhx[a] * hy[b], hx[a] * ddhy[b], dhx[a] * dhy[b]]);
                        }
                    }
                }
            }
        }
    }
    BasisTable { family, n_basis: nb, n_points: np, values, grads, hessians, weights: Vec::new() }
}

/// Evaluates `family` at the points of `rule`.
pub fn eval_basis<T: Real>(family: ElementFamily, rule: &QuadRule<T>) -> Result<BasisTable<T>, ElementError> {
    if rule.dim != family.dim() {
        return Err(ElementError::DimensionMismatch { rule: rule.dim, family: family.dim() });
    }
    let mut t = eval_basis_at(family, &rule.points);
    t.weights = rule.weights.clone();
    Ok(t)
}

/// Maps a reference table onto an axis-aligned cell with the given extents.
///
/// Gradients are scaled by the inverse extents and weights by the cell
/// measure. For the Hermite plate family the derivative DOFs are also scaled
/// by the extents so that they represent physical derivatives.
pub fn map_to_physical<T: Real>(extent: [T; 3], table: &BasisTable<T>) -> Result<PhysicalTable<T>, ElementError> {
    let dim = table.family.dim();
    for (axis, &e) in extent.iter().enumerate().take(dim) {
        if !(e > T::zero()) {
            return Err(ElementError::DegenerateCell { axis, extent: e.to_f64_lossy() });
        }
    }
    let inv: [T; 3] = std::array::from_fn(|d| if d < dim { T::one() / extent[d] } else { T::zero() });
    let measure = extent.iter().take(dim).fold(T::one(), |m, &e| m * e);
    let nb = table.n_basis;
    let mut values = table.values.clone();
    let mut grads: Vec<[T; 3]> = table.grads.iter().map(|g| [g[0] * inv[0], g[1] * inv[1], g[2] * inv[2]]).collect();
    let mut hessians: Vec<[T; 3]> = table
        .hessians
        .iter()
        .map(|h| [h[0] * inv[0] * inv[0], h[1] * inv[1] * inv[1], h[2] * inv[0] * inv[1]])
        .collect();
    if table.family == ElementFamily::HermitePlate {
        let scale: [T; 4] = [T::one(), extent[0], extent[1], extent[0] * extent[1]];
        for q in 0..table.n_points {
            for a in 0..nb {
                let s = scale[a % 4];
                let idx = q * nb + a;
                values[idx] = values[idx] * s;
                for c in 0..3 {
                    grads[idx][c] = grads[idx][c] * s;
                    hessians[idx][c] = hessians[idx][c] * s;
                }
            }
        }
    }
    Ok(PhysicalTable {
        n_basis: nb,
        n_points: table.n_points,
        values,
        grads,
        hessians,
        weights: table.weights.iter().map(|&w| w * measure).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::quadrature_rule;

    #[test]
    fn trilinear_center_values() {
        let t = eval_basis_at::<f64>(ElementFamily::Trilinear, &[[0.5, 0.5, 0.5]]);
        assert!(t.values.iter().all(|&v| (v - 0.125).abs() < 1e-16));
    }

    #[test]
    fn partition_of_unity() {
        let rule = quadrature_rule::<f64>(3, 3);
        for fam in [ElementFamily::Trilinear, ElementFamily::Triquadratic] {
            let t = eval_basis(fam, &rule).unwrap();
            for q in 0..t.n_points {
                let s: f64 = (0..t.n_basis).map(|a| t.value(q, a)).sum();
                assert!((s - 1.0).abs() < 1e-14);
                let g: [f64; 3] = std::array::from_fn(|c| (0..t.n_basis).map(|a| t.grads[q * t.n_basis + a][c]).sum());
                assert!(g.iter().all(|x| x.abs() < 1e-13));
            }
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let rule = quadrature_rule::<f64>(3, 2);
        let t = map_to_physical([0.3, 0.5, 0.7], &eval_basis(ElementFamily::Trilinear, &rule).unwrap()).unwrap();
        for i in 0..8 {
            let mut row = 0.0;
            for j in 0..8 {
                for q in 0..t.n_points {
                    let (gi, gj) = (t.grad(q, i), t.grad(q, j));
                    row += t.weights[q] * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
                }
            }
            assert!(row.abs() < 1e-14);
        }
    }

    /// Hermite DOFs of a polynomial at the vertices of the cell `[x0,x0+hx]×[y0,y0+hy]`.
    fn hermite_dofs(f: impl Fn(f64, f64) -> [f64; 4], x0: f64, y0: f64, hx: f64, hy: f64) -> [f64; 16] {
        let mut c = [0.0; 16];
        for j in 0..2 {
            for i in 0..2 {
                let v = f(x0 + i as f64 * hx, y0 + j as f64 * hy);
                for d in 0..4 {
                    c[4 * (i + 2 * j) + d] = v[d];
                }
            }
        }
        c
    }

    #[test]
    fn plate_second_derivatives_of_x2y2() {
        // w = x²y² on [0.25,0.75]×[0.5,1]: (w, wx, wy, wxy) = (x²y², 2xy², 2x²y, 4xy)
        let (x0, y0, hx, hy) = (0.25, 0.5, 0.5, 0.5);
        let c = hermite_dofs(|x, y| [x * x * y * y, 2.0 * x * y * y, 2.0 * x * x * y, 4.0 * x * y], x0, y0, hx, hy);
        let t = eval_basis_at::<f64>(ElementFamily::HermitePlate, &[[0.5, 0.5, 0.0]]);
        let p = map_to_physical([hx, hy, 1.0], &t).unwrap();
        let mut h = [0.0; 3];
        for a in 0..16 {
            for k in 0..3 {
                h[k] += c[a] * p.hessian(0, a)[k];
            }
        }
        let (x, y) = (x0 + 0.5 * hx, y0 + 0.5 * hy);
        assert!((h[0] - 2.0 * y * y).abs() < 1e-13);
        assert!((h[1] - 2.0 * x * x).abs() < 1e-13);
        assert!((h[2] - 4.0 * x * y).abs() < 1e-13);
    }

    #[test]
    fn hermite_reproduces_bicubic() {
        let f = |x: f64, y: f64| x.powi(3) * y.powi(2) - 2.0 * x * y.powi(3) + x * y + 1.0;
        let df = |x: f64, y: f64| {
            [
                f(x, y),
                3.0 * x * x * y * y - 2.0 * y.powi(3) + y,
                2.0 * x.powi(3) * y - 6.0 * x * y * y + x,
                6.0 * x * x * y - 6.0 * y * y + 1.0,
            ]
        };
        let (x0, y0, hx, hy) = (0.1, -0.3, 0.4, 0.7);
        let c = hermite_dofs(df, x0, y0, hx, hy);
        let pts: Vec<[f64; 3]> = quadrature_rule::<f64>(2, 4).points;
        let p = map_to_physical([hx, hy, 1.0], &eval_basis_at(ElementFamily::HermitePlate, &pts)).unwrap();
        for (q, r) in pts.iter().enumerate() {
            let (x, y) = (x0 + r[0] * hx, y0 + r[1] * hy);
            let v: f64 = (0..16).map(|a| c[a] * p.value(q, a)).sum();
            let gx: f64 = (0..16).map(|a| c[a] * p.grad(q, a)[0]).sum();
            let gxy: f64 = (0..16).map(|a| c[a] * p.hessian(q, a)[2]).sum();
            let e = df(x, y);
            assert!((v - e[0]).abs() < 1e-13);
            assert!((gx - e[1]).abs() < 1e-13);
            assert!((gxy - e[3]).abs() < 1e-13);
        }
    }

    #[test]
    fn affine_scaling() {
        let rule = quadrature_rule::<f64>(3, 2);
        let r = eval_basis(ElementFamily::Trilinear, &rule).unwrap();
        let unit = map_to_physical([1.0, 1.0, 1.0], &r).unwrap();
        assert_eq!(unit.grads, r.grads);
        let half = map_to_physical([0.5, 0.5, 0.5], &r).unwrap();
        for (a, b) in half.grads.iter().zip(&r.grads) {
            for c in 0..3 {
                assert!((a[c] - 2.0 * b[c]).abs() < 1e-15);
            }
        }
        for (a, b) in half.weights.iter().zip(&r.weights) {
            assert!((a - b / 8.0).abs() < 1e-16);
        }
    }

    #[test]
    fn integral_of_dx_x_is_volume() {
        // x interpolated by trilinear nodal values x_a; ∫ ∂x(x) = volume
        let (x0, e) = (0.3, [0.2, 0.4, 0.6]);
        let rule = quadrature_rule::<f64>(3, 2);
        let p = map_to_physical(e, &eval_basis(ElementFamily::Trilinear, &rule).unwrap()).unwrap();
        let mut total = 0.0;
        for q in 0..p.n_points {
            for a in 0..8 {
                let xa = x0 + (a & 1) as f64 * e[0];
                total += p.weights[q] * xa * p.grad(q, a)[0];
            }
        }
        assert!((total - e[0] * e[1] * e[2]).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cell_rejected() {
        let rule = quadrature_rule::<f64>(3, 2);
        let r = eval_basis(ElementFamily::Trilinear, &rule).unwrap();
        assert!(matches!(map_to_physical([1.0, 0.0, 1.0], &r), Err(ElementError::DegenerateCell { axis: 1, .. })));
    }

    #[test]
    fn plate_pressure_constant_in_s() {
        // coefficients equal on bottom (k=0) and top (k=1) nodes give s-independent values
        let coeff = [0.3, -1.2, 2.5, 0.7];
        let pts: Vec<[f64; 3]> = (0..5).map(|k| [0.37, 0.81, k as f64 / 4.0]).collect();
        let t = eval_basis_at(ElementFamily::PlatePressure, &pts);
        let vals: Vec<f64> = (0..5).map(|q| (0..8).map(|a| coeff[a % 4] * t.value(q, a)).sum()).collect();
        // dense oracle: bilinear interpolation in-plane
        let (x, y) = (0.37, 0.81);
        let oracle = coeff[0] * (1.0 - x) * (1.0 - y) + coeff[1] * x * (1.0 - y) + coeff[2] * (1.0 - x) * y + coeff[3] * x * y;
        for v in vals {
            assert!((v - oracle).abs() < 1e-15);
        }
    }
}
