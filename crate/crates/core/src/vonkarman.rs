//! Von Kármán plate nonlinearity: bracket, clamped Airy stress function,
//! restoring force `f(w) = [w, v(w) + F₀]`, potential `Π`, and the Picard
//! treatment of `f` inside the velocity-form step.
//!
//! Plate fields are handled as raw Hermite arrays (`4·node + d`). With the
//! 4-point Gauss rule every integral of a bracket against a bicubic is exact,
//! so the discrete bracket keeps the symmetry `∫[a,b]c = ∫[a,c]b` for clamped
//! fields and `Π' = −f` holds for the discrete quantities.

use crate::dof::{DofLayout, Field};
use crate::element::{eval_basis, map_to_physical, ElementFamily, PhysicalTable};
use crate::evolution::{EnergyReport, EvolutionError, StateVector, System};
use crate::mesh::MultilayerMesh;
use crate::quadrature::quadrature_rule;
use crate::saddle::{SolveError, SpdFactor};
use crate::scalar::{dot, max_abs, norm2, Real};
use crate::sparse::CsrMatrix;
use std::f64::consts::PI;
use std::ops::Range;

/// Hermite table on the 4×4 Gauss rule of one plate cell.
pub fn plate_table<T: Real>(mesh: &MultilayerMesh<T>) -> PhysicalTable<T> {
    let rule = quadrature_rule::<T>(2, 4);
    map_to_physical(mesh.plate.cell_extent(), &eval_basis(ElementFamily::HermitePlate, &rule).expect("2D rule")).expect("non-degenerate plate")
}

/// Second derivatives `[∂xx, ∂yy, ∂xy]` of a raw plate field at every
/// quadrature point, cell-major.
pub fn plate_hessians<T: Real>(mesh: &MultilayerMesh<T>, table: &PhysicalTable<T>, raw: &[T]) -> Vec<[T; 3]> {
    let mut out = Vec::with_capacity(mesh.plate.n_cells() * table.n_points);
    for nodes in &mesh.plate.cell_nodes {
        for q in 0..table.n_points {
            let mut h = [T::zero(); 3];
            for l in 0..16 {
                let c = raw[4 * nodes[l / 4] + l % 4];
                let hl = table.hessian(q, l);
                for k in 0..3 {
                    h[k] += c * hl[k];
                }
            }
            out.push(h);
        }
    }
    out
}

#[inline]
fn bracket_at<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[1] + a[1] * b[0] - T::lit(2.0) * a[2] * b[2]
}

/// `[u, w] = u_xx w_yy + u_yy w_xx − 2 u_xy w_xy` at the plate quadrature points.
pub fn bracket<T: Real>(mesh: &MultilayerMesh<T>, u: &[T], w: &[T]) -> Vec<T> {
    let t = plate_table(mesh);
    let (hu, hw) = (plate_hessians(mesh, &t, u), plate_hessians(mesh, &t, w));
    hu.iter().zip(&hw).map(|(&a, &b)| bracket_at(a, b)).collect()
}

/// `∫ g c` for quadrature-point values `g` and a raw plate field `c`.
pub fn integrate_against<T: Real>(mesh: &MultilayerMesh<T>, table: &PhysicalTable<T>, g: &[T], raw: &[T]) -> T {
    let mut s = T::zero();
    for (cell, nodes) in mesh.plate.cell_nodes.iter().enumerate() {
        for q in 0..table.n_points {
            let v = (0..16).fold(T::zero(), |acc, l| acc + raw[4 * nodes[l / 4] + l % 4] * table.value(q, l));
            s += table.weights[q] * g[cell * table.n_points + q] * v;
        }
    }
    s
}

/// Raw Hermite interpolant of a function given with `[f, ∂x, ∂y, ∂xy]`.
pub fn interpolate_plate<T: Real>(mesh: &MultilayerMesh<T>, f: impl Fn(f64, f64) -> [f64; 4]) -> Vec<T> {
    let mut raw = vec![T::zero(); 4 * mesh.plate.node_coords.len()];
    for (node, p) in mesh.plate.node_coords.iter().enumerate() {
        let v = f(p[0].to_f64_lossy(), p[1].to_f64_lossy());
        for d in 0..4 {
            raw[4 * node + d] = T::lit(v[d]);
        }
    }
    raw
}

/// Data of the nonlinear plate model.
#[derive(Debug, Clone, PartialEq)]
pub struct VkConfig<T> {
    /// `F₀` as raw plate coefficients; empty means zero.
    pub f0: Vec<T>,
    pub picard_tol: T,
    pub picard_max_iter: usize,
}

impl<T: Real> Default for VkConfig<T> {
    fn default() -> Self {
        Self { f0: Vec::new(), picard_tol: T::lit(1e-10), picard_max_iter: 50 }
    }
}

/// Airy stress function of a deflection.
#[derive(Debug, Clone, PartialEq)]
pub struct AirySolution<T> {
    /// Coefficients on the free (clamped) plate DOFs.
    pub free: Vec<T>,
    /// Raw Hermite coefficients; clamped entries are exactly zero.
    pub raw: Vec<T>,
    /// `‖A_C v − ℓ‖₂` of the discrete biharmonic system.
    pub residual: T,
}

/// Clamped biharmonic operator on the plate space, factored once per mesh.
pub struct VonKarman<T: Real> {
    pub cfg: VkConfig<T>,
    table: PhysicalTable<T>,
    /// Free-W-block matrix of `(Δv, Δξ)`.
    pub biharmonic: CsrMatrix<T>,
    factor: SpdFactor<T>,
    range: Range<usize>,
    map: Vec<Option<usize>>,
}

impl<T: Real> VonKarman<T> {
    pub fn new(sys: &System<T>, cfg: VkConfig<T>) -> Result<Self, SolveError> {
        let range = sys.layout.block(Field::W);
        let biharmonic = sys.forms.bend.submatrix(range.clone(), range.clone()).scale(T::one() / sys.params.d_plate);
        Self::from_parts(&sys.mesh, &sys.layout, biharmonic, cfg)
    }

    fn from_parts(mesh: &MultilayerMesh<T>, layout: &DofLayout, biharmonic: CsrMatrix<T>, cfg: VkConfig<T>) -> Result<Self, SolveError> {
        let range = layout.block(Field::W);
        let factor = SpdFactor::new(&biharmonic)?;
        let map = layout.map(Field::W).to_vec();
        if !cfg.f0.is_empty() && cfg.f0.len() != map.len() {
            return Err(SolveError::Dimension(format!("F0 has {} coefficients, plate space has {}", cfg.f0.len(), map.len())));
        }
        Ok(Self { cfg, table: plate_table(mesh), biharmonic, factor, range, map })
    }

    pub fn n_free(&self) -> usize {
        self.range.len()
    }

    /// Raw plate field from a full free vector.
    pub fn raw_from_full(&self, x: &[T]) -> Vec<T> {
        self.map.iter().map(|m| m.map_or(T::zero(), |i| x[i])).collect()
    }

    /// Raw plate field from a free-W-block vector.
    pub fn raw_from_block(&self, x: &[T]) -> Vec<T> {
        self.map.iter().map(|m| m.map_or(T::zero(), |i| x[i - self.range.start])).collect()
    }

    /// `∫ g ξ` for every free plate test function.
    fn test_block(&self, mesh: &MultilayerMesh<T>, g: &[T]) -> Vec<T> {
        let t = &self.table;
        let mut out = vec![T::zero(); self.n_free()];
        for (cell, nodes) in mesh.plate.cell_nodes.iter().enumerate() {
            for l in 0..16 {
                if let Some(i) = self.map[4 * nodes[l / 4] + l % 4] {
                    let mut s = T::zero();
                    for q in 0..t.n_points {
                        s += t.weights[q] * g[cell * t.n_points + q] * t.value(q, l);
                    }
                    out[i - self.range.start] += s;
                }
            }
        }
        out
    }

    fn solve_block(&self, rhs: Vec<T>) -> AirySolution<T> {
        let free = self.factor.solve(&rhs);
        let mut r = self.biharmonic.matvec(&free);
        r.iter_mut().zip(&rhs).for_each(|(a, &b)| *a -= b);
        AirySolution { raw: self.raw_from_block(&free), free, residual: norm2(&r) }
    }

    /// `(Δv, Δξ) = −([w, w], ξ)` for all clamped test functions `ξ`.
    pub fn solve_airy(&self, mesh: &MultilayerMesh<T>, w_raw: &[T]) -> AirySolution<T> {
        let h = plate_hessians(mesh, &self.table, w_raw);
        let g: Vec<T> = h.iter().map(|&a| -bracket_at(a, a)).collect();
        self.solve_block(self.test_block(mesh, &g))
    }

    /// Clamped biharmonic solve with a load given at the quadrature points.
    pub fn solve_biharmonic(&self, mesh: &MultilayerMesh<T>, g: &[T]) -> AirySolution<T> {
        self.solve_block(self.test_block(mesh, g))
    }

    fn with_f0(&self, v_raw: &[T]) -> Vec<T> {
        if self.cfg.f0.is_empty() {
            v_raw.to_vec()
        } else {
            v_raw.iter().zip(&self.cfg.f0).map(|(&a, &b)| a + b).collect()
        }
    }

    /// `([w, v(w) + F₀], ξ)` on the free plate block.
    pub fn force_block(&self, mesh: &MultilayerMesh<T>, w_raw: &[T]) -> Vec<T> {
        let airy = self.solve_airy(mesh, w_raw);
        let hw = plate_hessians(mesh, &self.table, w_raw);
        let hv = plate_hessians(mesh, &self.table, &self.with_f0(&airy.raw));
        let g: Vec<T> = hw.iter().zip(&hv).map(|(&a, &b)| bracket_at(a, b)).collect();
        self.test_block(mesh, &g)
    }

    /// Restoring force as a full free load vector (plate block only).
    pub fn force(&self, mesh: &MultilayerMesh<T>, disp: &[T]) -> Vec<T> {
        let fb = self.force_block(mesh, &self.raw_from_full(disp));
        let mut out = vec![T::zero(); disp.len()];
        out[self.range.clone()].copy_from_slice(&fb);
        out
    }

    /// `Π(w) = ¼ ∫ |Δv(w)|² − ½ ∫ w [w, F₀]`.
    pub fn potential(&self, mesh: &MultilayerMesh<T>, w_raw: &[T]) -> T {
        let airy = self.solve_airy(mesh, w_raw);
        let mut p = T::lit(0.25) * self.biharmonic.quad_form(&airy.free);
        if !self.cfg.f0.is_empty() {
            let hw = plate_hessians(mesh, &self.table, w_raw);
            let hf = plate_hessians(mesh, &self.table, &self.cfg.f0);
            let g: Vec<T> = hw.iter().zip(&hf).map(|(&a, &b)| bracket_at(a, b)).collect();
            p -= T::lit(0.5) * integrate_against(mesh, &self.table, &g, w_raw);
        }
        p
    }

    pub fn potential_of_state(&self, mesh: &MultilayerMesh<T>, s: &StateVector<T>) -> T {
        self.potential(mesh, &self.raw_from_full(&s.disp))
    }
}

/// Outcome of one nonlinear step.
#[derive(Debug, Clone)]
pub struct NonlinearStep<T> {
    pub state: StateVector<T>,
    pub report: EnergyReport<T>,
    pub iterations: usize,
    /// Relative plate increments of the fixed-point iteration.
    pub history: Vec<f64>,
}

/// One velocity-form step with `f(w)` evaluated at the current iterate of
/// `wⁿ⁺¹ = wⁿ + Δt v`, iterated to a fixed point. The report carries
/// `Π(wⁿ⁺¹)` in `potential`.
pub fn step_nonlinear<T: Real>(
    sys: &mut System<T>,
    vk: &VonKarman<T>,
    state: &StateVector<T>,
    dt: T,
    f_ext: &[T],
) -> Result<NonlinearStep<T>, EvolutionError> {
    let mut phi = state.vel.clone();
    let mut history = Vec::new();
    let range = sys.layout.block(Field::W);
    for it in 1..=vk.cfg.picard_max_iter {
        let trial: Vec<T> = state.disp.iter().zip(&phi).zip(&sys.disp_mask).map(|((&d, &p), &m)| d + dt * p * m).collect();
        let mut f = vk.force(&sys.mesh, &trial);
        f.iter_mut().zip(f_ext).for_each(|(a, &b)| *a += b);
        let (next, _) = sys.step_implicit_euler(state, dt, &f)?;
        let inc = range.clone().fold(T::zero(), |m, i| m.max((dt * (next.vel[i] - phi[i])).abs()));
        let scale = T::one().max(max_abs(&trial[range.clone()]));
        let rel = (inc / scale).to_f64_lossy();
        history.push(rel);
        phi = next.vel.clone();
        if rel <= vk.cfg.picard_tol.to_f64_lossy() {
            let mut report = sys.step_report(state, &next, dt, &f);
            report.potential = Some(vk.potential_of_state(&sys.mesh, &next));
            return Ok(NonlinearStep { state: next, report, iterations: it, history });
        }
        if !rel.is_finite() {
            break;
        }
    }
    Err(EvolutionError::Picard { history })
}

/// Nonlinear run; the trajectory stops at the first failed step.
pub fn simulate_nonlinear<T: Real>(
    sys: &mut System<T>,
    vk: &VonKarman<T>,
    initial: StateVector<T>,
    dt: T,
    steps: usize,
) -> crate::evolution::Trajectory<T> {
    let zero = vec![T::zero(); sys.layout.n_free];
    let mut traj = crate::evolution::Trajectory { dt, states: vec![initial], reports: Vec::with_capacity(steps), error: None };
    for _ in 0..steps {
        match step_nonlinear(sys, vk, traj.states.last().unwrap(), dt, &zero) {
            Ok(s) => {
                traj.states.push(s.state);
                traj.reports.push(s.report);
            }
            Err(e) => {
                traj.error = Some(e);
                break;
            }
        }
    }
    traj
}

/// `E + 2Π` at every state of a trajectory (the energy `E` carries no factor ½).
pub fn lyapunov_series<T: Real>(sys: &System<T>, vk: &VonKarman<T>, traj: &crate::evolution::Trajectory<T>) -> Vec<f64> {
    traj.states.iter().map(|s| (sys.energy(s) + T::lit(2.0) * vk.potential_of_state(&sys.mesh, s)).to_f64_lossy()).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Central-difference error `|(Π(w+εz) − Π(w−εz))/(2ε) + (f(w), z)|` per `ε`.
pub fn frechet_errors(vk: &VonKarman<f64>, mesh: &MultilayerMesh<f64>, w_block: &[f64], z_block: &[f64], eps: &[f64]) -> Vec<f64> {
    let w = vk.raw_from_block(w_block);
    let z = vk.raw_from_block(z_block);
    let fz = dot(&vk.force_block(mesh, &w), z_block);
    eps.iter()
        .map(|&e| {
            let plus: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a + e * b).collect();
            let minus: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a - e * b).collect();
            ((vk.potential(mesh, &plus) - vk.potential(mesh, &minus)) / (2.0 * e) + fz).abs()
        })
        .collect()
}

/// Clamped `v* = sin²(πx) sin²(πy)`: `[v, ∂x, ∂y, ∂xy, ∂xx, ∂yy]` and `Δ²v*`.
pub fn airy_exact(x: f64, y: f64) -> ([f64; 6], f64) {
    let s = |t: f64| {
        let c = (2.0 * PI * t).cos();
        [(PI * t).sin().powi(2), PI * (2.0 * PI * t).sin(), 2.0 * PI * PI * c, -8.0 * PI.powi(4) * c]
    };
    let (a, b) = (s(x), s(y));
    ([a[0] * b[0], a[1] * b[0], a[0] * b[1], a[1] * b[1], a[2] * b[0], a[0] * b[2]], a[3] * b[0] + 2.0 * a[2] * b[2] + a[0] * b[3])
}

/// H² seminorm error of the clamped biharmonic solve with load `Δ²v*` on an
/// `n × n` plate, and the discrete residual.
pub fn airy_mms_error(n: usize) -> Result<(f64, f64), EvolutionError> {
    let sys = System::new(crate::mesh::build_mesh(n, 1, 1, 1, 0.2)?, crate::forms::MaterialParams::default(), false)?;
    let vk = VonKarman::new(&sys, VkConfig::default())?;
    let mesh = &sys.mesh;
    let t = &vk.table;
    let rule = quadrature_rule::<f64>(2, 4);
    let ext = mesh.plate.cell_extent();
    let mut g = Vec::new();
    let mut exact = Vec::new();
    for cell in 0..mesh.plate.n_cells() {
        let o = mesh.plate.cell_origin(cell);
        for p in &rule.points {
            let (v, l) = airy_exact(o[0] + p[0] * ext[0], o[1] + p[1] * ext[1]);
            g.push(l);
            exact.push(v);
        }
    }
    let sol = vk.solve_biharmonic(mesh, &g);
    let h = plate_hessians(mesh, t, &sol.raw);
    let mut e = 0.0;
    for (k, (hk, v)) in h.iter().zip(&exact).enumerate() {
        let wq = t.weights[k % t.n_points];
        e += wq * ((hk[0] - v[4]).powi(2) + (hk[1] - v[5]).powi(2) + 2.0 * (hk[2] - v[3]).powi(2));
    }
    Ok((e.sqrt(), sol.residual))
}
