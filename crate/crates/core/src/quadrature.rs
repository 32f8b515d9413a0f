//! Tensor-product Gauss–Legendre rules on the reference cell `[0,1]^d`.

use crate::scalar::Real;

/// Quadrature points (reference coordinates in `[0,1]^d`) and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule<T> {
    pub dim: usize,
    /// Points per direction.
    pub order: usize,
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Highest per-direction polynomial degree integrated exactly.
    pub fn exactness(&self) -> usize {
        2 * self.order - 1
    }
}

/// Gauss–Legendre nodes and weights on `[-1,1]`, Newton iteration on `P_n`.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// 1D Gauss rule with `n` points mapped to `[0,1]`.
pub fn gauss_1d<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_unit(n);
    (
        x.iter().map(|&xi| T::lit(0.5 * (xi + 1.0))).collect(),
        w.iter().map(|&wi| T::lit(0.5 * wi)).collect(),
    )
}

/// Tensor Gauss rule in `dimension` directions with `order` points each.
///
/// Points are ordered with the first coordinate fastest. Unused coordinates
/// are zero.
pub fn quadrature_rule<T: Real>(dimension: usize, order: usize) -> QuadRule<T> {
    anisotropic_rule(&vec![order; dimension])
}

/// Tensor rule with a different number of points per direction.
pub fn anisotropic_rule<T: Real>(orders: &[usize]) -> QuadRule<T> {
    assert!((1..=3).contains(&orders.len()), "dimension must be 1, 2 or 3");
    assert!(orders.iter().all(|&o| o >= 1), "order must be at least 1");
    let rules: Vec<(Vec<T>, Vec<T>)> = orders.iter().map(|&o| gauss_1d(o)).collect();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let n = |d: usize| if d < orders.len() { orders[d] } else { 1 };
    for k in 0..n(2) {
        for j in 0..n(1) {
            for i in 0..n(0) {
                let idx = [i, j, k];
                let mut p = [T::zero(); 3];
                let mut wt = T::one();
                for d in 0..orders.len() {
                    p[d] = rules[d].0[idx[d]];
                    wt = wt * rules[d].1[idx[d]];
                }
                points.push(p);
                weights.push(wt);
            }
        }
    }
    QuadRule {
        dim: orders.len(),
        order: *orders.iter().max().unwrap(),
        points,
        weights,
    }
}
