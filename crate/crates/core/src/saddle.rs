//! Saddle-point solves `[A Bᵀ; B 0]` and the spectral probes of the mixed
//! formulation (inf-sup constant, coercivity constant).

use crate::scalar::{axpy, dot, norm2, Real};
use crate::sparse::{kkt_matrix, CsrMatrix};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::Side;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("row {row} of block `{block}` is empty; the system is singular")]
    EmptyRow { block: String, row: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("matrix is not positive definite: {0}")]
    Indefinite(String),
    #[error("solution contains non-finite values")]
    NonFinite,
    #[error("iterative solve did not converge; residual history {history:?}")]
    NotConverged { history: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solver tolerances on the recomputed residuals.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// `‖Aφ + Bᵀπ − f‖ ≤ rel_tol · max(‖f‖, ‖g‖)`
    pub rel_tol: T,
    /// `‖Bφ − g‖ ≤ abs_tol`
    pub abs_tol: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        let t = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));
        Self { rel_tol: t, abs_tol: t }
    }
}

/// Primal part, multiplier, and residuals recomputed from the inputs.
#[derive(Debug, Clone)]
pub struct SaddleSolution<T> {
    pub phi: Vec<T>,
    pub pi: Vec<T>,
    /// Relative momentum residual.
    pub momentum_residual: T,
    /// Absolute constraint residual `‖Bφ − g‖`.
    pub constraint_residual: T,
}

/// Factorized saddle-point operator, reusable for many right sides.
pub struct SaddleFactor<T: Real> {
    a: CsrMatrix<T>,
    b: CsrMatrix<T>,
    lu: Lu<usize, T>,
    pub options: SolverOptions<T>,
}

fn block_of(blocks: &[(Range<usize>, &str)], row: usize) -> (String, usize) {
    for (r, name) in blocks {
        if r.contains(&row) {
            return (name.to_string(), row - r.start);
        }
    }
    ("unnamed".to_string(), row)
}

impl<T: Real> SaddleFactor<T> {
    /// Factorizes `[A Bᵀ; B 0]`. `blocks` names row ranges of `A` for diagnostics.
    pub fn new(a: &CsrMatrix<T>, b: &CsrMatrix<T>, blocks: &[(Range<usize>, &str)]) -> Result<Self, SolveError> {
        if a.nrows != a.ncols || b.ncols != a.ncols {
            return Err(SolveError::Dimension(format!("A is {}x{}, B is {}x{}", a.nrows, a.ncols, b.nrows, b.ncols)));
        }
        let bt = b.transpose();
        for row in a.empty_rows() {
            if bt.row(row).all(|(_, v)| v == T::zero()) {
                let (block, row) = block_of(blocks, row);
                return Err(SolveError::EmptyRow { block, row });
            }
        }
        if let Some(&row) = b.empty_rows().first() {
            return Err(SolveError::EmptyRow { block: "constraint".into(), row });
        }
        let k = kkt_matrix(a, b).to_faer();
        let lu = k.sp_lu().map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { a: a.clone(), b: b.clone(), lu, options: SolverOptions::default() })
    }

    pub fn n_primal(&self) -> usize {
        self.a.nrows
    }

    pub fn n_constraints(&self) -> usize {
        self.b.nrows
    }

    fn apply_kkt(&self, x: &[T]) -> Vec<T> {
        let n = self.n_primal();
        let (phi, pi) = x.split_at(n);
        let mut top = self.a.matvec(phi);
        axpy(T::one(), &self.b.tmatvec(pi), &mut top);
        top.extend(self.b.matvec(phi));
        top
    }

    fn lu_solve(&self, rhs: &[T]) -> Vec<T> {
        let col = faer::Col::<T>::from_fn(rhs.len(), |i| rhs[i]);
        let x = self.lu.solve(&col);
        (0..rhs.len()).map(|i| x[i]).collect()
    }

    fn residuals(&self, x: &[T], rhs: &[T]) -> (T, T, T) {
        let n = self.n_primal();
        let r: Vec<T> = self.apply_kkt(x).iter().zip(rhs).map(|(&a, &b)| a - b).collect();
        let scale = norm2(rhs).max(T::min_positive_value());
        (norm2(&r[..n]) / scale, norm2(&r[n..]), norm2(&r) / scale)
    }

    /// Solves `Aφ + Bᵀπ = f`, `Bφ = g`.
    pub fn solve(&self, f: &[T], g: &[T]) -> Result<SaddleSolution<T>, SolveError> {
        let (n, m) = (self.n_primal(), self.n_constraints());
        if f.len() != n || g.len() != m {
            return Err(SolveError::Dimension(format!("right side {}+{}, expected {}+{}", f.len(), g.len(), n, m)));
        }
        let rhs: Vec<T> = f.iter().chain(g).copied().collect();
        let mut x = self.lu_solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        let ok = |x: &[T]| {
            let (mr, cr, _) = self.residuals(x, &rhs);
            mr <= self.options.rel_tol && cr <= self.options.abs_tol
        };
        // one step of iterative refinement is usually enough to recover from pivot growth
        for _ in 0..2 {
            if ok(&x) {
                break;
            }
            let r: Vec<T> = rhs.iter().zip(self.apply_kkt(&x)).map(|(&a, b)| a - b).collect();
            axpy(T::one(), &self.lu_solve(&r), &mut x);
        }
        if !ok(&x) {
            let tol = self.options.rel_tol.min(self.options.abs_tol / norm2(&rhs).max(T::min_positive_value()));
            x = gmres(|v| self.apply_kkt(v), |v| self.lu_solve(v), &rhs, &x, 30, 300, tol)
                .map_err(|history| SolveError::NotConverged { history })?;
        }
        let (mr, cr, _) = self.residuals(&x, &rhs);
        let pi = x.split_off(n);
        Ok(SaddleSolution { phi: x, pi, momentum_residual: mr, constraint_residual: cr })
    }
}

/// One-shot factorize and solve.
pub fn solve_saddle<T: Real>(a: &CsrMatrix<T>, b: &CsrMatrix<T>, f: &[T], g: &[T]) -> Result<SaddleSolution<T>, SolveError> {
    SaddleFactor::new(a, b, &[])?.solve(f, g)
}

/// Restarted, right-preconditioned GMRES. Returns the residual history on failure.
pub fn gmres<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    precond: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    x0: &[T],
    restart: usize,
    max_iter: usize,
    rel_tol: T,
) -> Result<Vec<T>, Vec<f64>> {
    let n = b.len();
    let bnorm = norm2(b).max(T::min_positive_value());
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm2(&r);
        history.push((beta / bnorm).to_f64_lossy());
        if beta / bnorm <= rel_tol {
            return Ok(x);
        }
        if iters >= max_iter || !beta.is_finite() {
            return Err(history);
        }
        let mut v: Vec<Vec<T>> = vec![r.iter().map(|&ri| ri / beta).collect()];
        let mut z: Vec<Vec<T>> = Vec::new();
        let mut h = vec![vec![T::zero(); restart]; restart + 1];
        let (mut cs, mut sn) = (vec![T::zero(); restart], vec![T::zero(); restart]);
        let mut e = vec![T::zero(); restart + 1];
        e[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            iters += 1;
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                axpy(-h[i][k], vi, &mut w);
            }
            h[k + 1][k] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if d == T::zero() {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            let hk1 = h[k + 1][k];
            h[k + 1][k] = T::zero();
            e[k + 1] = -sn[k] * e[k];
            e[k] = cs[k] * e[k];
            k_used = k + 1;
            if (e[k + 1].abs() / bnorm) <= rel_tol || iters >= max_iter || hk1 == T::zero() {
                break;
            }
            v.push(w.iter().map(|&wi| wi / hk1).collect());
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = e[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, zj) in z.iter().take(k_used).enumerate() {
            axpy(y[j], zj, &mut x);
        }
        debug_assert_eq!(x.len(), n);
    }
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct SpdFactor<T: Real> {
    llt: Llt<usize, T>,
    n: usize,
}

impl<T: Real> SpdFactor<T> {
    pub fn new(m: &CsrMatrix<T>) -> Result<Self, SolveError> {
        if m.nrows != m.ncols {
            return Err(SolveError::Dimension(format!("{}x{} is not square", m.nrows, m.ncols)));
        }
        let llt = m.to_faer().sp_cholesky(Side::Lower).map_err(|e| SolveError::Indefinite(format!("{e:?}")))?;
        Ok(Self { llt, n: m.nrows })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let col = faer::Col::<T>::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&col);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Outcome of an inverse iteration.
#[derive(Debug, Clone)]
pub struct EigenEstimate<T> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    /// Eigenvalue iterates.
    pub history: Vec<f64>,
}

pub const EIGEN_TOL: f64 = 1e-8;
pub const EIGEN_MAX_ITER: usize = 2000;

/// Smallest eigenvalue of `S q = λ M q` for dense symmetric `S ⪰ 0` and
/// `M ≻ 0`, by inverse iteration with a tiny negative shift.
fn smallest_dense_generalized<T: Real>(s: &faer::Mat<T>, m: &CsrMatrix<T>) -> Result<EigenEstimate<T>, SolveError> {
    let n = s.nrows();
    if n == 0 {
        return Ok(EigenEstimate { value: T::zero(), iterations: 0, converged: true, history: vec![] });
    }
    let md = m.to_dense();
    let scale = (0..n).map(|i| s[(i, i)].abs()).fold(T::zero(), T::max) / (0..n).map(|i| md[i][i]).fold(T::zero(), T::max);
    let shift = scale * T::lit(1e-13) + T::min_positive_value();
    let shifted = faer::Mat::<T>::from_fn(n, n, |i, j| s[(i, j)] + shift * md[i][j]);
    let llt = shifted.llt(Side::Lower).map_err(|e| SolveError::Indefinite(format!("{e:?}")))?;
    let mut q: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1) * T::count(i % 7)).collect();
    let mut history = Vec::new();
    let mut prev = T::infinity();
    let tol = T::lit(EIGEN_TOL);
    for it in 1..=EIGEN_MAX_ITER {
        let mq = m.matvec(&q);
        let rhs = faer::Col::<T>::from_fn(n, |i| mq[i]);
        let y = llt.solve(&rhs);
        let mut yv: Vec<T> = (0..n).map(|i| y[i]).collect();
        let nrm = m.quad_form(&yv).sqrt();
        if !(nrm > T::zero()) || !nrm.is_finite() {
            return Err(SolveError::NotConverged { history });
        }
        yv.iter_mut().for_each(|v| *v = *v / nrm);
        let sy: Vec<T> = (0..n).map(|i| (0..n).fold(T::zero(), |a, j| a + s[(i, j)] * yv[j])).collect();
        let lambda = dot(&yv, &sy);
        history.push(lambda.to_f64_lossy());
        q = yv;
        // the floor lets a (numerically) null eigenvalue count as converged
        if (lambda - prev).abs() <= tol * lambda.abs().max(T::lit(1e-10) * scale) {
            return Ok(EigenEstimate { value: lambda.max(T::zero()), iterations: it, converged: true, history });
        }
        prev = lambda;
    }
    Ok(EigenEstimate { value: prev.max(T::zero()), iterations: EIGEN_MAX_ITER, converged: false, history })
}

/// Discrete inf-sup constant `β_h = sqrt(λ_min(B G⁻¹ Bᵀ, M_π))`.
///
/// With `restrict = Some(range)` only the columns of `B` and the block of `G`
/// in `range` are used (the velocity-only witness); `None` uses the full space.
pub fn estimate_infsup<T: Real>(
    g: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    m_pi: &CsrMatrix<T>,
    restrict: Option<Range<usize>>,
) -> Result<EigenEstimate<T>, SolveError> {
    let (g, b) = match restrict {
        Some(r) => (g.submatrix(r.clone(), r.clone()), b.submatrix(0..b.nrows, r)),
        None => (g.clone(), b.clone()),
    };
    if b.ncols != g.nrows || m_pi.nrows != b.nrows {
        return Err(SolveError::Dimension("inf-sup operands".into()));
    }
    let gf = SpdFactor::new(&g)?;
    let bt = b.transpose();
    let np = b.nrows;
    let mut s = faer::Mat::<T>::zeros(np, np);
    for j in 0..np {
        let mut col = vec![T::zero(); b.ncols];
        for (i, v) in bt.triplets().filter(|t| t.1 == j).map(|t| (t.0, t.2)) {
            col[i] = v;
        }
        let x = gf.solve(&col);
        let bx = b.matvec(&x);
        for i in 0..np {
            s[(i, j)] = bx[i];
        }
    }
    // symmetrize against round-off
    for i in 0..np {
        for j in 0..i {
            let v = (s[(i, j)] + s[(j, i)]) / T::lit(2.0);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let mut est = smallest_dense_generalized(&s, m_pi)?;
    est.value = est.value.sqrt();
    Ok(est)
}

/// Smallest eigenvalue of `sym(A) q = λ G q` by inverse iteration.
pub fn probe_coercivity<T: Real>(a: &CsrMatrix<T>, g: &CsrMatrix<T>) -> Result<EigenEstimate<T>, SolveError> {
    if a.nrows != g.nrows || a.ncols != g.ncols {
        return Err(SolveError::Dimension("coercivity operands".into()));
    }
    let sa = a.symmetric_part();
    let f = SpdFactor::new(&sa)?;
    let n = a.nrows;
    let mut q: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1) * T::count(i % 7)).collect();
    let mut prev = T::infinity();
    let mut history = Vec::new();
    let tol = T::lit(EIGEN_TOL);
    for it in 1..=EIGEN_MAX_ITER {
        let mut y = f.solve(&g.matvec(&q));
        let nrm = g.quad_form(&y).sqrt();
        if !(nrm > T::zero()) || !nrm.is_finite() {
            return Err(SolveError::NotConverged { history });
        }
        y.iter_mut().for_each(|v| *v = *v / nrm);
        let lambda = sa.quad_form(&y);
        history.push(lambda.to_f64_lossy());
        q = y;
        if (lambda - prev).abs() <= tol * lambda.abs() {
            return Ok(EigenEstimate { value: lambda, iterations: it, converged: true, history });
        }
        prev = lambda;
    }
    Ok(EigenEstimate { value: prev, iterations: EIGEN_MAX_ITER, converged: false, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: Vec<Vec<f64>>) -> CsrMatrix<f64> {
        CsrMatrix::from_dense(&rows)
    }

    #[test]
    fn hand_kkt() {
        let s = solve_saddle(&CsrMatrix::identity(2), &dense(vec![vec![1.0, 0.0]]), &[1.0, 0.0], &[0.0]).unwrap();
        assert!(s.phi.iter().all(|v| v.abs() < 1e-15));
        assert!((s.pi[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_constraints() {
        let s = solve_saddle(&dense(vec![vec![2.0]]), &CsrMatrix::zeros(0, 1), &[4.0], &[]).unwrap();
        assert!((s.phi[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_row_is_named() {
        let a = dense(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let err = SaddleFactor::new(&a, &CsrMatrix::zeros(0, 3), &[(0..1, "eta"), (1..3, "p_b")]).err().unwrap();
        assert_eq!(err, SolveError::EmptyRow { block: "p_b".into(), row: 0 });
    }

    fn random_system(n: usize, m: usize, seed: u64) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                let (s, k) = (rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0));
                a[i][j] = s + k;
                a[j][i] = s - k;
            }
            a[i][i] = n as f64;
        }
        let b: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| if j == i { 2.0 } else { rng.random_range(-1.0..1.0) }).collect()).collect();
        (dense(a), dense(b))
    }

    #[test]
    fn residuals_within_tolerance() {
        let (a, b) = random_system(12, 4, 7);
        let f: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let g = vec![0.5, -0.2, 0.0, 1.0];
        let s = solve_saddle(&a, &b, &f, &g).unwrap();
        assert!(s.momentum_residual <= 1e-10);
        assert!(s.constraint_residual <= 1e-10);
    }

    #[test]
    fn recovers_manufactured_pair() {
        let (a, b) = random_system(15, 5, 11);
        let phi: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let pi: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let mut f = a.matvec(&phi);
        axpy(1.0, &b.tmatvec(&pi), &mut f);
        let s = solve_saddle(&a, &b, &f, &b.matvec(&phi)).unwrap();
        for (x, y) in s.phi.iter().zip(&phi).chain(s.pi.iter().zip(&pi)) {
            assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let (a, _) = random_system(20, 0, 3);
        let b: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x = gmres(|v| a.matvec(v), |v| v.to_vec(), &b, &vec![0.0; 20], 8, 400, 1e-12).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-11 * norm2(&b));
    }

    #[test]
    fn gmres_reports_history_on_failure() {
        let (a, _) = random_system(30, 0, 5);
        let b = vec![1.0; 30];
        let h = gmres(|v| a.matvec(v), |v| v.to_vec(), &b, &vec![0.0; 30], 2, 4, 1e-14).unwrap_err();
        assert!(!h.is_empty());
    }

    #[test]
    fn infsup_identity_toy() {
        let e = estimate_infsup(&CsrMatrix::identity(2), &dense(vec![vec![1.0, 0.0]]), &CsrMatrix::identity(1), None).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infsup_rejects_indefinite_gram() {
        let g = dense(vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        let r = estimate_infsup(&g, &dense(vec![vec![1.0, 0.0]]), &CsrMatrix::identity(1), None);
        assert!(matches!(r, Err(SolveError::Indefinite(_))));
    }

    #[test]
    fn coercivity_of_scaled_and_skewed_gram() {
        let g = dense(vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]);
        let e = probe_coercivity(&g.scale(2.0), &g).unwrap();
        assert!((e.value - 2.0).abs() < 1e-7);
        let skew = dense(vec![vec![0.0, 3.0, 1.0], vec![-3.0, 0.0, 2.0], vec![-1.0, -2.0, 0.0]]);
        let e = probe_coercivity(&g.add_scaled(&skew, 1.0), &g).unwrap();
        assert!((e.value - 1.0).abs() < 1e-7);
    }
}
