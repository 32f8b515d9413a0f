//! Manufactured smooth fields compatible with every constraint of the
//! discrete space, their interpolants, the consistent weak-residual load, and
//! the convergence harness.
//!
//! The fields are laterally periodic, vanish where the space requires it,
//! satisfy `η = w e3` and `p_b = p_p(s = h/2)` on the interface exactly, and
//! the velocity is divergence free. The load is `ℓ(ψ) = a(φ*, ψ) + b(ψ, π*)`
//! evaluated with exact derivatives, so the discrete solution is the Galerkin
//! projection of `(φ*, π*)`.

use crate::dof::{q2_node, DofLayout, Field, RawFields};
use crate::element::{eval_basis, eval_basis_at, map_to_physical, ElementFamily};
use crate::evolution::{EvolutionError, System};
use crate::forms::{fluid_u_dofs, fluid_u_raw_nodes, MaterialParams};
use crate::mesh::{build_mesh, MultilayerMesh};
use crate::quadrature::{anisotropic_rule, gauss_1d, quadrature_rule};
use crate::saddle::SaddleFactor;
use crate::scalar::Real;
use std::f64::consts::PI;

/// Smooth field family with amplitude `amp` and in-plane wavenumber `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub amp: f64,
    pub k: f64,
    /// Plate thickness.
    pub h: f64,
}

type Grad = [f64; 3];

impl Manufactured {
    pub fn new(amp: f64, k: f64, h: f64) -> Self {
        Self { amp, k, h }
    }

    fn c(&self) -> f64 {
        2.0 * PI * self.k
    }

    /// `S(x) = sin²(kπx)` and its first two derivatives.
    fn s(&self, x: f64) -> [f64; 3] {
        let a = self.k * PI;
        [(a * x).sin().powi(2), a * (2.0 * a * x).sin(), 2.0 * a * a * (2.0 * a * x).cos()]
    }

    /// `g = cos(cx)cos(cy)` with its gradient.
    fn g(&self, x: f64, y: f64) -> [f64; 3] {
        let c = self.c();
        [(c * x).cos() * (c * y).cos(), -c * (c * x).sin() * (c * y).cos(), -c * (c * x).cos() * (c * y).sin()]
    }

    /// Plate deflection: `[w, ∂x, ∂y, ∂xy, ∂xx, ∂yy]`.
    pub fn w(&self, x: f64, y: f64) -> [f64; 6] {
        let (sx, sy) = (self.s(x), self.s(y));
        let a = self.amp;
        [a * sx[0] * sy[0], a * sx[1] * sy[0], a * sx[0] * sy[1], a * sx[1] * sy[1], a * sx[2] * sy[0], a * sx[0] * sy[2]]
    }

    /// Biot displacement and its gradient `grad[c][d] = ∂_d η_c`.
    pub fn eta(&self, p: [f64; 3]) -> ([f64; 3], [Grad; 3]) {
        let (x, y, z) = (p[0], p[1], p[2]);
        let c = self.c();
        let (q, dq) = (z * (1.0 - z), 1.0 - 2.0 * z);
        let (sx, cx, sy, cy) = ((c * x).sin(), (c * x).cos(), (c * y).sin(), (c * y).cos());
        let w = self.w(x, y);
        let a = self.amp;
        let g = self.g(x, y);
        let v = [a * sx * cy * q, a * cx * sy * q, w[0] * (1.0 - z) + a * g[0] * q];
        let gr = [
            [a * c * cx * cy * q, -a * c * sx * sy * q, a * sx * cy * dq],
            [-a * c * sx * sy * q, a * c * cx * cy * q, a * cx * sy * dq],
            [w[1] * (1.0 - z) + a * g[1] * q, w[2] * (1.0 - z) + a * g[2] * q, -w[0] + a * g[0] * dq],
        ];
        (v, gr)
    }

    /// Biot pressure and gradient.
    pub fn pb(&self, p: [f64; 3]) -> (f64, Grad) {
        let (x, y, z) = (p[0], p[1], p[2]);
        let c = self.c();
        let (q, dq) = (z * (1.0 - z), 1.0 - 2.0 * z);
        let g = self.g(x, y);
        let h2 = (c * x).sin() * (c * y).sin();
        let (h2x, h2y) = (c * (c * x).cos() * (c * y).sin(), c * (c * x).sin() * (c * y).cos());
        let a = self.amp;
        (
            a * (g[0] * (1.0 - z) + h2 * q),
            [a * (g[1] * (1.0 - z) + h2x * q), a * (g[2] * (1.0 - z) + h2y * q), a * (-g[0] + h2 * dq)],
        )
    }

    /// Plate pressure at `(x, y, s)` and its `s`-derivative.
    pub fn pp(&self, x: f64, y: f64, s: f64) -> (f64, f64) {
        let g = self.g(x, y)[0] * self.amp;
        let t = 3.0 * (s - self.h / 2.0);
        (g * t.cos(), -3.0 * g * t.sin())
    }

    /// `∫ s p_p ds` over the thickness.
    pub fn moment(&self, x: f64, y: f64) -> f64 {
        let (pts, wts) = gauss_1d::<f64>(8);
        pts.iter().zip(&wts).map(|(&r, &w)| {
            let s = -self.h / 2.0 + r * self.h;
            w * self.h * s * self.pp(x, y, s).0
        }).sum()
    }

    /// Stokes velocity and gradient.
    pub fn u(&self, p: [f64; 3]) -> ([f64; 3], [Grad; 3]) {
        let (x, y, z) = (p[0], p[1], p[2]);
        let c = self.c();
        let (sx, cx, sy, cy) = ((c * x).sin(), (c * x).cos(), (c * y).sin(), (c * y).cos());
        let g = self.g(x, y);
        let (z1, a) = (z + 1.0, self.amp);
        (
            [2.0 * a * sx * cy * z1, 2.0 * a * cx * sy * z1, -2.0 * a * c * g[0] * z1 * z1],
            [
                [2.0 * a * c * cx * cy * z1, -2.0 * a * c * sx * sy * z1, 2.0 * a * sx * cy],
                [-2.0 * a * c * sx * sy * z1, 2.0 * a * c * cx * cy * z1, 2.0 * a * cx * sy],
                [-2.0 * a * c * g[1] * z1 * z1, -2.0 * a * c * g[2] * z1 * z1, -4.0 * a * c * g[0] * z1],
            ],
        )
    }

    /// Stokes pressure.
    pub fn pi(&self, p: [f64; 3]) -> f64 {
        let c = self.c();
        self.amp * (c * p[0]).cos() * (c * p[1]).sin() * (PI * p[2]).cos()
    }

    /// Nodal interpolant of the primal fields.
    pub fn interpolate<T: Real>(&self, mesh: &MultilayerMesh<T>, layout: &DofLayout) -> RawFields<T> {
        let mut raw = layout.zero_raw::<T>();
        let f = |x: T| x.to_f64_lossy();
        let l = T::lit;
        for (node, p) in mesh.biot.node_coords.iter().enumerate() {
            let p = [f(p[0]), f(p[1]), f(p[2])];
            let (v, _) = self.eta(p);
            for c in 0..3 {
                raw.eta[3 * node + c] = l(v[c]);
            }
            raw.pb[node] = l(self.pb(p).0);
        }
        for (node, p) in mesh.plate.node_coords.iter().enumerate() {
            let w = self.w(f(p[0]), f(p[1]));
            for d in 0..4 {
                raw.w[4 * node + d] = l(w[d]);
            }
        }
        for (node, p) in mesh.plate_pressure.node_coords.iter().enumerate() {
            raw.pp[node] = l(self.pp(f(p[0]), f(p[1]), f(p[2])).0);
        }
        let n = mesh.n_plane;
        let (m2, mz) = (2 * n + 1, 2 * mesh.nz_f + 1);
        for k in 0..mz {
            for j in 0..m2 {
                for i in 0..m2 {
                    let p = [i as f64 / (2 * n) as f64, j as f64 / (2 * n) as f64, -1.0 + k as f64 / (2 * mesh.nz_f) as f64];
                    let (v, _) = self.u(p);
                    let node = q2_node(n, i, j, k);
                    for c in 0..3 {
                        raw.u[3 * node + c] = l(v[c]);
                    }
                }
            }
        }
        raw
    }

    /// Nodal interpolant of the Stokes pressure (raw fluid lattice).
    pub fn interpolate_pi<T: Real>(&self, mesh: &MultilayerMesh<T>) -> Vec<T> {
        mesh.fluid.node_coords.iter().map(|p| T::lit(self.pi([p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()]))).collect()
    }
}

fn to3<T: Real>(p: [T; 3]) -> [f64; 3] {
    [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()]
}

/// Weak residual `ℓ(ψ) = a(φ*, ψ) + b(ψ, π*)` over the free test functions
/// (unit-shift resolvent operator).
pub fn mms_load<T: Real>(mesh: &MultilayerMesh<T>, layout: &DofLayout, params: &MaterialParams<T>, sol: &Manufactured) -> Vec<T> {
    let pr = |x: T| x.to_f64_lossy();
    let (lb, mb, rb, ab, cb, kb) = (pr(params.lambda_b), pr(params.mu_b), pr(params.rho_b), pr(params.alpha_b), pr(params.c_b), pr(params.k_b));
    let (dp, ga, rp, ap, cp, kp) = (pr(params.d_plate), pr(params.gamma), pr(params.rho_p), pr(params.alpha_p), pr(params.c_p), pr(params.k_p));
    let (rf, mf, beta) = (pr(params.rho_f), pr(params.mu_f), pr(params.beta_bjs));
    let mut out = vec![0.0f64; layout.n_free];
    let mut put = |i: Option<usize>, v: f64| {
        if let Some(i) = i {
            out[i] += v;
        }
    };
    let rule3 = quadrature_rule::<T>(3, 4);
    let rule2 = quadrature_rule::<T>(2, 4);

    // Biot bulk
    let eb = mesh.biot.cell_extent();
    let tb = map_to_physical(eb, &eval_basis(ElementFamily::Trilinear, &rule3).unwrap()).unwrap();
    for cell in 0..mesh.biot.n_cells() {
        let nodes = mesh.biot.cell_nodes[cell];
        let o = mesh.biot.cell_origin(cell);
        for q in 0..tb.n_points {
            let r = rule3.points[q];
            let x = to3([o[0] + r[0] * eb[0], o[1] + r[1] * eb[1], o[2] + r[2] * eb[2]]);
            let wq = pr(tb.weights[q]);
            let (ev, eg) = sol.eta(x);
            let (pv, pg) = sol.pb(x);
            let div = eg[0][0] + eg[1][1] + eg[2][2];
            let sym = |c: usize, d: usize| 0.5 * (eg[c][d] + eg[d][c]);
            for a in 0..8 {
                let va = pr(tb.value(q, a));
                let gt = tb.grad(q, a);
                let g = [pr(gt[0]), pr(gt[1]), pr(gt[2])];
                for c in 0..3 {
                    // test k = φ_a e_c: D(k)_{cd} = g_d/2 (+ symmetric), div k = g_c
                    let mut el = lb * div * g[c];
                    for d in 0..3 {
                        el += 2.0 * mb * sym(c, d) * g[d];
                    }
                    let v = rb * ev[c] * va + el - ab * pv * g[c];
                    put(layout.map(Field::Eta)[3 * nodes[a] + c], wq * v);
                }
                let v = cb * pv * va + kb * (pg[0] * g[0] + pg[1] * g[1] + pg[2] * g[2]) + ab * div * va;
                put(layout.map(Field::Pb)[nodes[a]], wq * v);
            }
        }
    }

    // Stokes region
    let ef = mesh.fluid.cell_extent();
    let tf = map_to_physical(ef, &eval_basis(ElementFamily::Triquadratic, &rule3).unwrap()).unwrap();
    for cell in 0..mesh.fluid.n_cells() {
        let udofs = fluid_u_dofs(mesh, layout, cell);
        let o = mesh.fluid.cell_origin(cell);
        for q in 0..tf.n_points {
            let r = rule3.points[q];
            let x = to3([o[0] + r[0] * ef[0], o[1] + r[1] * ef[1], o[2] + r[2] * ef[2]]);
            let wq = pr(tf.weights[q]);
            let (uv, ug) = sol.u(x);
            let piv = sol.pi(x);
            for a in 0..27 {
                let va = pr(tf.value(q, a));
                let gt = tf.grad(q, a);
                let g = [pr(gt[0]), pr(gt[1]), pr(gt[2])];
                for c in 0..3 {
                    let mut v = rf * uv[c] * va - piv * g[c];
                    for d in 0..3 {
                        v += mf * (ug[c][d] + ug[d][c]) * g[d];
                    }
                    put(udofs[3 * a + c], wq * v);
                }
            }
        }
    }

    // Plate midsurface (mass, bending, moment coupling)
    let ep = mesh.plate.cell_extent();
    let tp = map_to_physical(ep, &eval_basis(ElementFamily::HermitePlate, &rule2).unwrap()).unwrap();
    let tpp_b = eval_basis_at(ElementFamily::PlatePressure, &rule2.points.iter().map(|p| [p[0], p[1], T::zero()]).collect::<Vec<_>>());
    let tu_t = eval_basis_at(ElementFamily::Triquadratic, &rule2.points.iter().map(|p| [p[0], p[1], T::one()]).collect::<Vec<_>>());
    let h = sol.h;
    for cell in 0..mesh.plate.n_cells() {
        let nodes = mesh.plate.cell_nodes[cell];
        let o = mesh.plate.cell_origin(cell);
        let ic = mesh.interface_cells[cell];
        let pnodes = mesh.plate_pressure.cell_nodes[ic.pp_bottom_cell];
        let udofs = fluid_u_dofs(mesh, layout, ic.fluid_cell);
        for q in 0..tp.n_points {
            let r = rule2.points[q];
            let (x, y) = (pr(o[0] + r[0] * ep[0]), pr(o[1] + r[1] * ep[1]));
            let wq = pr(tp.weights[q]);
            let w = sol.w(x, y);
            let lap = w[4] + w[5];
            let m = sol.moment(x, y);
            let p_bot = sol.pp(x, y, -h / 2.0).0;
            let (uv, _) = sol.u([x, y, 0.0]);
            for l in 0..16 {
                let v = (rp + ga) * w[0] * pr(tp.value(q, l)) + (dp * lap + ap * m) * pr(tp.laplacian(q, l)) - p_bot * pr(tp.value(q, l));
                put(layout.map(Field::W)[4 * nodes[l / 4] + l % 4], wq * v);
            }
            for a in 0..4 {
                put(layout.map(Field::Pp)[pnodes[a]], wq * (w[0] - uv[2]) * pr(tpp_b.value(q, a)));
            }
            for b in 0..27 {
                let vb = pr(tu_t.value(q, b));
                put(udofs[3 * b + 2], wq * p_bot * vb);
                for c in 0..2 {
                    put(udofs[3 * b + c], wq * beta * uv[c] * vb);
                }
            }
        }
    }

    // Plate pressure slab
    let es = mesh.plate_pressure.cell_extent();
    let rule_s = anisotropic_rule::<T>(&[4, 4, 4]);
    let ts = map_to_physical(es, &eval_basis(ElementFamily::PlatePressure, &rule_s).unwrap()).unwrap();
    for cell in 0..mesh.plate_pressure.n_cells() {
        let nodes = mesh.plate_pressure.cell_nodes[cell];
        let o = mesh.plate_pressure.cell_origin(cell);
        for q in 0..ts.n_points {
            let r = rule_s.points[q];
            let p = to3([o[0] + r[0] * es[0], o[1] + r[1] * es[1], o[2] + r[2] * es[2]]);
            let wq = pr(ts.weights[q]);
            let (pv, ps) = sol.pp(p[0], p[1], p[2]);
            let w = sol.w(p[0], p[1]);
            for a in 0..8 {
                let v = cp * pv * pr(ts.value(q, a)) + kp * ps * pr(ts.grad(q, a)[2]) - ap * p[2] * (w[4] + w[5]) * pr(ts.value(q, a));
                put(layout.map(Field::Pp)[nodes[a]], wq * v);
            }
        }
    }
    out.into_iter().map(T::lit).collect()
}

/// L² (and plate H²) errors of a discrete solution against the manufactured fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub eta: f64,
    pub pb: f64,
    pub w: f64,
    pub w_h2: f64,
    pub pp: f64,
    pub u: f64,
    pub pi: f64,
}

impl FieldErrors {
    pub fn named(&self) -> [(&'static str, f64); 7] {
        [("eta", self.eta), ("p_b", self.pb), ("w", self.w), ("w_H2", self.w_h2), ("p_p", self.pp), ("u", self.u), ("pi", self.pi)]
    }
}

/// Errors of raw fields and raw Stokes pressure against `sol`.
pub fn field_errors<T: Real>(mesh: &MultilayerMesh<T>, raw: &RawFields<T>, pi_raw: &[T], sol: &Manufactured) -> FieldErrors {
    let pr = |x: T| x.to_f64_lossy();
    let rule3 = quadrature_rule::<T>(3, 4);
    let rule2 = quadrature_rule::<T>(2, 4);
    let mut e = FieldErrors { eta: 0.0, pb: 0.0, w: 0.0, w_h2: 0.0, pp: 0.0, u: 0.0, pi: 0.0 };

    let eb = mesh.biot.cell_extent();
    let tb = map_to_physical(eb, &eval_basis(ElementFamily::Trilinear, &rule3).unwrap()).unwrap();
    for cell in 0..mesh.biot.n_cells() {
        let nodes = mesh.biot.cell_nodes[cell];
        let o = mesh.biot.cell_origin(cell);
        for q in 0..tb.n_points {
            let r = rule3.points[q];
            let x = to3([o[0] + r[0] * eb[0], o[1] + r[1] * eb[1], o[2] + r[2] * eb[2]]);
            let (ev, _) = sol.eta(x);
            let mut eh = [0.0; 3];
            let mut ph = 0.0;
            for a in 0..8 {
                let va = pr(tb.value(q, a));
                for c in 0..3 {
                    eh[c] += va * pr(raw.eta[3 * nodes[a] + c]);
                }
                ph += va * pr(raw.pb[nodes[a]]);
            }
            let wq = pr(tb.weights[q]);
            e.eta += wq * (0..3).map(|c| (eh[c] - ev[c]).powi(2)).sum::<f64>();
            e.pb += wq * (ph - sol.pb(x).0).powi(2);
        }
    }

    let ef = mesh.fluid.cell_extent();
    let tf = map_to_physical(ef, &eval_basis(ElementFamily::Triquadratic, &rule3).unwrap()).unwrap();
    let tq = eval_basis(ElementFamily::Trilinear, &rule3).unwrap();
    for cell in 0..mesh.fluid.n_cells() {
        let unodes = fluid_u_raw_nodes(mesh, cell);
        let pnodes = mesh.fluid.cell_nodes[cell];
        let o = mesh.fluid.cell_origin(cell);
        for q in 0..tf.n_points {
            let r = rule3.points[q];
            let x = to3([o[0] + r[0] * ef[0], o[1] + r[1] * ef[1], o[2] + r[2] * ef[2]]);
            let (uv, _) = sol.u(x);
            let mut uh = [0.0; 3];
            for a in 0..27 {
                for c in 0..3 {
                    uh[c] += pr(tf.value(q, a)) * pr(raw.u[3 * unodes[a] + c]);
                }
            }
            let ph: f64 = (0..8).map(|a| pr(tq.value(q, a)) * pr(pi_raw[pnodes[a]])).sum();
            let wq = pr(tf.weights[q]);
            e.u += wq * (0..3).map(|c| (uh[c] - uv[c]).powi(2)).sum::<f64>();
            e.pi += wq * (ph - sol.pi(x)).powi(2);
        }
    }

    let ep = mesh.plate.cell_extent();
    let tp = map_to_physical(ep, &eval_basis(ElementFamily::HermitePlate, &rule2).unwrap()).unwrap();
    for cell in 0..mesh.plate.n_cells() {
        let nodes = mesh.plate.cell_nodes[cell];
        let o = mesh.plate.cell_origin(cell);
        for q in 0..tp.n_points {
            let r = rule2.points[q];
            let (x, y) = (pr(o[0] + r[0] * ep[0]), pr(o[1] + r[1] * ep[1]));
            let w = sol.w(x, y);
            let (mut v, mut hxx, mut hyy, mut hxy) = (0.0, 0.0, 0.0, 0.0);
            for l in 0..16 {
                let c = pr(raw.w[4 * nodes[l / 4] + l % 4]);
                let hs = tp.hessian(q, l);
                v += c * pr(tp.value(q, l));
                hxx += c * pr(hs[0]);
                hyy += c * pr(hs[1]);
                hxy += c * pr(hs[2]);
            }
            let wq = pr(tp.weights[q]);
            e.w += wq * (v - w[0]).powi(2);
            e.w_h2 += wq * ((hxx - w[4]).powi(2) + (hyy - w[5]).powi(2) + 2.0 * (hxy - w[3]).powi(2));
        }
    }

    let es = mesh.plate_pressure.cell_extent();
    let ts = map_to_physical(es, &eval_basis(ElementFamily::PlatePressure, &rule3).unwrap()).unwrap();
    for cell in 0..mesh.plate_pressure.n_cells() {
        let nodes = mesh.plate_pressure.cell_nodes[cell];
        let o = mesh.plate_pressure.cell_origin(cell);
        for q in 0..ts.n_points {
            let r = rule3.points[q];
            let p = to3([o[0] + r[0] * es[0], o[1] + r[1] * es[1], o[2] + r[2] * es[2]]);
            let ph: f64 = (0..8).map(|a| pr(ts.value(q, a)) * pr(raw.pp[nodes[a]])).sum();
            e.pp += pr(ts.weights[q]) * (ph - sol.pp(p[0], p[1], p[2]).0).powi(2);
        }
    }
    FieldErrors {
        eta: e.eta.sqrt(),
        pb: e.pb.sqrt(),
        w: e.w.sqrt(),
        w_h2: e.w_h2.sqrt(),
        pp: e.pp.sqrt(),
        u: e.u.sqrt(),
        pi: e.pi.sqrt(),
    }
}

/// One refinement level of the convergence study.
#[derive(Debug, Clone)]
pub struct MmsLevel {
    pub n_plane: usize,
    pub n_free: usize,
    pub errors: FieldErrors,
    pub constraint_residual: f64,
}

/// Mesh used at level `n`: `n` cells in every bulk direction and `max(1, n/2)`
/// through the plate.
pub fn mms_mesh(n: usize, h: f64) -> MultilayerMesh<f64> {
    build_mesh(n, n, n, (n / 2).max(1), h).expect("valid refinement level")
}

/// Solves the resolvent problem with the manufactured load on one mesh.
pub fn run_mms_level(n: usize, params: &MaterialParams<f64>, sol: &Manufactured) -> Result<MmsLevel, EvolutionError> {
    let sys = System::new(mms_mesh(n, sol.h), *params, false)?;
    let load = mms_load(&sys.mesh, &sys.layout, params, sol);
    let factor = SaddleFactor::new(&sys.forms.resolvent_matrix(), &sys.forms.b, &sys.blocks())?;
    let s = factor.solve(&load, &vec![0.0; sys.layout.n_pi])?;
    let raw = sys.layout.expand(&s.phi);
    let pi_raw = sys.layout.expand_pi(&s.pi);
    Ok(MmsLevel {
        n_plane: n,
        n_free: sys.layout.n_free,
        errors: field_errors(&sys.mesh, &raw, &pi_raw, sol),
        constraint_residual: s.constraint_residual,
    })
}

/// `log2(e_coarse / e_fine)` for successive halvings.
pub fn observed_orders(levels: &[MmsLevel], pick: impl Fn(&FieldErrors) -> f64) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| (pick(&w[0].errors) / pick(&w[1].errors)).ln() / (w[1].n_plane as f64 / w[0].n_plane as f64).ln())
        .collect()
}
