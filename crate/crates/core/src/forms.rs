//! Assembly of the bilinear forms of the coupled system.
//!
//! Every matrix acts on the free vector of [`DofLayout`] with rows indexed by
//! test functions and columns by trial functions, so `a(φ, ψ) = ψᵀ A φ`.
//! Each physical term is kept as its own matrix; the operators used by the
//! solvers are linear combinations of these parts.

use crate::dof::{q2_node, DofLayout, Field};
use crate::element::{eval_basis, eval_basis_at, map_to_physical, ElementFamily, PhysicalTable};
use crate::mesh::{interface_quadrature_cells, MultilayerMesh};
use crate::quadrature::{anisotropic_rule, quadrature_rule};
use crate::scalar::Real;
use crate::sparse::{CsrMatrix, TripletBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("material parameter `{name}` must be positive and finite (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{what} must be positive (got {value})")]
    BadStep { what: &'static str, value: f64 },
    #[error("vector length {got} does not match layout size {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Physical coefficients of the three layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de> + Real"))]
pub struct MaterialParams<T> {
    pub lambda_b: T,
    pub mu_b: T,
    pub rho_b: T,
    pub alpha_b: T,
    pub c_b: T,
    pub k_b: T,
    pub d_plate: T,
    pub gamma: T,
    pub rho_p: T,
    pub alpha_p: T,
    pub c_p: T,
    pub k_p: T,
    pub rho_f: T,
    pub mu_f: T,
    pub beta_bjs: T,
}

impl<T: Real> Default for MaterialParams<T> {
    fn default() -> Self {
        let one = T::one();
        Self {
            lambda_b: one,
            mu_b: one,
            rho_b: one,
            alpha_b: one,
            c_b: one,
            k_b: one,
            d_plate: one,
            gamma: one,
            rho_p: one,
            alpha_p: one,
            c_p: one,
            k_p: one,
            rho_f: one,
            mu_f: one,
            beta_bjs: one,
        }
    }
}

impl<T: Real> MaterialParams<T> {
    pub fn named(&self) -> [(&'static str, T); 15] {
        [
            ("lambda_b", self.lambda_b),
            ("mu_b", self.mu_b),
            ("rho_b", self.rho_b),
            ("alpha_b", self.alpha_b),
            ("c_b", self.c_b),
            ("k_b", self.k_b),
            ("d_plate", self.d_plate),
            ("gamma", self.gamma),
            ("rho_p", self.rho_p),
            ("alpha_p", self.alpha_p),
            ("c_p", self.c_p),
            ("k_p", self.k_p),
            ("rho_f", self.rho_f),
            ("mu_f", self.mu_f),
            ("beta_bjs", self.beta_bjs),
        ]
    }

    pub fn validate(&self) -> Result<(), FormError> {
        for (name, v) in self.named() {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(FormError::NonPositive { name, value: v.to_f64_lossy() });
            }
        }
        Ok(())
    }
}

/// Individually assembled terms of the coupled forms.
#[derive(Debug, Clone)]
pub struct Forms<T> {
    pub n: usize,
    pub n_pi: usize,
    /// `ρ_b (η, k)`
    pub mass_eta: CsrMatrix<T>,
    /// `a_E(η, k) = 2μ_b (D η, D k) + λ_b (∇·η, ∇·k)`
    pub elastic: CsrMatrix<T>,
    /// `c_b (p_b, q_b)`
    pub mass_pb: CsrMatrix<T>,
    /// `k_b (∇p_b, ∇q_b)`
    pub diff_pb: CsrMatrix<T>,
    /// `ρ_p (w, ξ)`
    pub mass_w: CsrMatrix<T>,
    /// `D (Δw, Δξ)`
    pub bend: CsrMatrix<T>,
    /// `γ (w, ξ)`
    pub gamma_w: CsrMatrix<T>,
    /// `c_p (p_p, q_p)`
    pub mass_pp: CsrMatrix<T>,
    /// `k_p (∂s p_p, ∂s q_p)`
    pub diff_pp: CsrMatrix<T>,
    /// `ρ_f (u, δ)`
    pub mass_u: CsrMatrix<T>,
    /// `2μ_f (D u, D δ)`
    pub visc_u: CsrMatrix<T>,
    /// `β ∫ (u·τ)(δ·τ)` on the interface
    pub bjs: CsrMatrix<T>,
    /// `α_b (∇·η, q_b) − α_b (p_b, ∇·k)`
    pub couple_biot: CsrMatrix<T>,
    /// `α_p (K p_p, Δξ)` on the midsurface
    pub couple_moment: CsrMatrix<T>,
    /// `−α_p (s Δw, q_p)` on the plate slab
    pub couple_moment_adj: CsrMatrix<T>,
    /// `∫ (w − u·e3) q_p(−h/2) − ∫ p_p(−h/2) (ξ − δ·e3)`
    pub couple_interface: CsrMatrix<T>,
    /// Inner product of the trial space.
    pub gram: CsrMatrix<T>,
    /// `b(ψ, χ) = −(χ, ∇·δ)`, rows pressure, columns free DOFs.
    pub b: CsrMatrix<T>,
    /// Stokes pressure mass matrix.
    pub mass_pi: CsrMatrix<T>,
}

#[derive(Clone, Copy)]
enum Part {
    MassEta,
    Elastic,
    MassPb,
    DiffPb,
    MassW,
    Bend,
    GammaW,
    MassPp,
    DiffPp,
    MassU,
    ViscU,
    Bjs,
    CoupleBiot,
    CoupleMoment,
    CoupleMomentAdj,
    CoupleInterface,
    Gram,
    B,
    MassPi,
}

const N_PARTS: usize = 19;

type Entry<T> = (u8, usize, usize, T);

struct Local<T> {
    entries: Vec<Entry<T>>,
}

impl<T: Real> Local<T> {
    fn new() -> Self {
        Self { entries: Vec::new() }
    }

    #[inline]
    fn add(&mut self, part: Part, row: Option<usize>, col: Option<usize>, v: T) {
        if let (Some(i), Some(j)) = (row, col) {
            if v != T::zero() {
                self.entries.push((part as u8, i, j, v));
            }
        }
    }
}

/// Runs `kernel` on every cell index, in parallel if requested; the output order
/// is the cell order either way.
fn run_cells<T: Real, F>(n: usize, parallel: bool, kernel: F) -> Vec<Local<T>>
where
    F: Fn(usize) -> Local<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(&kernel).collect()
    } else {
        (0..n).map(kernel).collect()
    }
}

/// Free indices of the 27 triquadratic velocity nodes of a fluid cell, `3a + c`.
pub(crate) fn fluid_u_dofs<T: Real>(mesh: &MultilayerMesh<T>, layout: &DofLayout, cell: usize) -> [Option<usize>; 81] {
    let [i, j, k] = mesh.fluid.cell_ijk(cell);
    let n = mesh.n_plane;
    let map = layout.map(Field::U);
    std::array::from_fn(|l| {
        let (a, c) = (l / 3, l % 3);
        let node = q2_node(n, 2 * i + a % 3, 2 * j + (a / 3) % 3, 2 * k + a / 9);
        map[3 * node + c]
    })
}

pub(crate) fn fluid_u_raw_nodes<T: Real>(mesh: &MultilayerMesh<T>, cell: usize) -> [usize; 27] {
    let [i, j, k] = mesh.fluid.cell_ijk(cell);
    let n = mesh.n_plane;
    std::array::from_fn(|a| q2_node(n, 2 * i + a % 3, 2 * j + (a / 3) % 3, 2 * k + a / 9))
}

fn table<T: Real>(family: ElementFamily, orders: &[usize], extent: [T; 3]) -> PhysicalTable<T> {
    let rule = anisotropic_rule::<T>(orders);
    map_to_physical(extent, &eval_basis(family, &rule).expect("matching dimension")).expect("non-degenerate mesh")
}

/// Assembles every term on the given mesh and layout.
pub fn assemble_forms<T: Real>(mesh: &MultilayerMesh<T>, layout: &DofLayout, params: &MaterialParams<T>, parallel: bool) -> Forms<T> {
    let n = layout.n_free;
    let p = *params;
    let mut locals: Vec<Local<T>> = Vec::new();

    // Biot bulk
    let tb = table::<T>(ElementFamily::Trilinear, &[2, 2, 2], mesh.biot.cell_extent());
    let map_eta = layout.map(Field::Eta);
    let map_pb = layout.map(Field::Pb);
    locals.extend(run_cells(mesh.biot.n_cells(), parallel, |cell| {
        let nodes = mesh.biot.cell_nodes[cell];
        let mut loc = Local::new();
        for q in 0..tb.n_points {
            let wq = tb.weights[q];
            for a in 0..8 {
                let (va, ga) = (tb.value(q, a), tb.grad(q, a));
                for b in 0..8 {
                    let (vb, gb) = (tb.value(q, b), tb.grad(q, b));
                    let gg = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
                    let (pa, pb) = (map_pb[nodes[a]], map_pb[nodes[b]]);
                    loc.add(Part::MassPb, pb, pa, wq * p.c_b * va * vb);
                    loc.add(Part::DiffPb, pb, pa, wq * p.k_b * gg);
                    loc.add(Part::Gram, pb, pa, wq * gg);
                    for c in 0..3 {
                        let ea = map_eta[3 * nodes[a] + c];
                        // row: test p_b at b, column: trial η_c at a
                        loc.add(Part::CoupleBiot, pb, ea, wq * p.alpha_b * ga[c] * vb);
                        // row: test k_c at a, column: trial p_b at b
                        loc.add(Part::CoupleBiot, ea, pb, -wq * p.alpha_b * vb * ga[c]);
                        for d in 0..3 {
                            let eb = map_eta[3 * nodes[b] + d];
                            let mut el = p.mu_b * ga[d] * gb[c] + p.lambda_b * ga[c] * gb[d];
                            if c == d {
                                el += p.mu_b * gg;
                                loc.add(Part::MassEta, eb, ea, wq * p.rho_b * va * vb);
                            }
                            loc.add(Part::Elastic, eb, ea, wq * el);
                            loc.add(Part::Gram, eb, ea, wq * el);
                        }
                    }
                }
            }
        }
        loc
    }));

    // Stokes region
    let tf = table::<T>(ElementFamily::Triquadratic, &[3, 3, 3], mesh.fluid.cell_extent());
    let tfp = table::<T>(ElementFamily::Trilinear, &[3, 3, 3], mesh.fluid.cell_extent());
    locals.extend(run_cells(mesh.fluid.n_cells(), parallel, |cell| {
        let udofs = fluid_u_dofs(mesh, layout, cell);
        let pnodes = mesh.fluid.cell_nodes[cell];
        let mut loc = Local::new();
        for q in 0..tf.n_points {
            let wq = tf.weights[q];
            for a in 0..27 {
                let (va, ga) = (tf.value(q, a), tf.grad(q, a));
                for b in 0..27 {
                    let (vb, gb) = (tf.value(q, b), tf.grad(q, b));
                    let gg = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
                    for c in 0..3 {
                        let ua = udofs[3 * a + c];
                        for d in 0..3 {
                            let ub = udofs[3 * b + d];
                            let mut v = p.mu_f * ga[d] * gb[c];
                            if c == d {
                                v += p.mu_f * gg;
                                loc.add(Part::MassU, ub, ua, wq * p.rho_f * va * vb);
                                loc.add(Part::Gram, ub, ua, wq * p.mu_f * gg);
                            }
                            loc.add(Part::ViscU, ub, ua, wq * v);
                        }
                    }
                }
                for b in 0..8 {
                    let chi = Some(layout.pi_map[pnodes[b]]);
                    for c in 0..3 {
                        loc.add(Part::B, chi, udofs[3 * a + c], -wq * tfp.value(q, b) * ga[c]);
                    }
                }
            }
            for a in 0..8 {
                for b in 0..8 {
                    let (pa, pb) = (Some(layout.pi_map[pnodes[a]]), Some(layout.pi_map[pnodes[b]]));
                    loc.add(Part::MassPi, pb, pa, wq * tfp.value(q, a) * tfp.value(q, b));
                }
            }
        }
        loc
    }));

    // Plate midsurface
    let tp = table::<T>(ElementFamily::HermitePlate, &[4, 4], mesh.plate.cell_extent());
    let map_w = layout.map(Field::W);
    let plate_dofs = |cell: usize| -> [Option<usize>; 16] {
        let nodes = mesh.plate.cell_nodes[cell];
        std::array::from_fn(|l| map_w[4 * nodes[l / 4] + l % 4])
    };
    locals.extend(run_cells(mesh.plate.n_cells(), parallel, |cell| {
        let dofs = plate_dofs(cell);
        let mut loc = Local::new();
        for q in 0..tp.n_points {
            let wq = tp.weights[q];
            for a in 0..16 {
                for b in 0..16 {
                    let vv = tp.value(q, a) * tp.value(q, b);
                    let ll = tp.laplacian(q, a) * tp.laplacian(q, b);
                    loc.add(Part::MassW, dofs[b], dofs[a], wq * p.rho_p * vv);
                    loc.add(Part::GammaW, dofs[b], dofs[a], wq * p.gamma * vv);
                    loc.add(Part::Bend, dofs[b], dofs[a], wq * p.d_plate * ll);
                    loc.add(Part::Gram, dofs[b], dofs[a], wq * p.d_plate * ll);
                }
            }
        }
        loc
    }));

    // Plate pressure slab, including the s-weighted pairing with Δw
    let pp_ext = mesh.plate_pressure.cell_extent();
    let pp_rule = anisotropic_rule::<T>(&[4, 4, 2]);
    let tpp = map_to_physical(pp_ext, &eval_basis(ElementFamily::PlatePressure, &pp_rule).unwrap()).unwrap();
    let tpw = map_to_physical(mesh.plate.cell_extent(), &eval_basis_at(ElementFamily::HermitePlate, &pp_rule.points)).unwrap();
    let map_pp = layout.map(Field::Pp);
    locals.extend(run_cells(mesh.plate_pressure.n_cells(), parallel, |cell| {
        let nodes = mesh.plate_pressure.cell_nodes[cell];
        let [i, j, _] = mesh.plate_pressure.cell_ijk(cell);
        let wdofs = plate_dofs(i + mesh.n_plane * j);
        let s0 = mesh.plate_pressure.cell_origin(cell)[2];
        let mut loc = Local::new();
        for q in 0..tpp.n_points {
            let wq = tpp.weights[q];
            let s = s0 + pp_rule.points[q][2] * pp_ext[2];
            for a in 0..8 {
                let pa = map_pp[nodes[a]];
                for b in 0..8 {
                    let pb = map_pp[nodes[b]];
                    let vv = tpp.value(q, a) * tpp.value(q, b);
                    let ds = tpp.grad(q, a)[2] * tpp.grad(q, b)[2];
                    loc.add(Part::MassPp, pb, pa, wq * p.c_p * vv);
                    loc.add(Part::DiffPp, pb, pa, wq * p.k_p * ds);
                    loc.add(Part::Gram, pb, pa, wq * (vv + ds));
                }
                for (l, &wd) in wdofs.iter().enumerate() {
                    loc.add(Part::CoupleMomentAdj, pa, wd, -wq * p.alpha_p * s * tpw.laplacian(q, l) * tpp.value(q, a));
                }
            }
        }
        loc
    }));

    // Moment of the plate pressure paired with Δξ on the midsurface
    let inplane = quadrature_rule::<T>(2, 4);
    let s_rule = crate::quadrature::gauss_1d::<T>(2);
    let mut moment_points = Vec::new();
    for (qi, pt) in inplane.points.iter().enumerate() {
        for &zs in &s_rule.0 {
            moment_points.push(([pt[0], pt[1], zs], qi));
        }
    }
    let tm = eval_basis_at(ElementFamily::PlatePressure, &moment_points.iter().map(|m| m.0).collect::<Vec<_>>());
    locals.extend(run_cells(mesh.plate.n_cells(), parallel, |cell| {
        let dofs = plate_dofs(cell);
        let (i, j) = (cell % mesh.n_plane, cell / mesh.n_plane);
        let mut loc = Local::new();
        for k in 0..mesh.ns_p {
            let pcell = mesh.plate_pressure.cell_index(i, j, k);
            let nodes = mesh.plate_pressure.cell_nodes[pcell];
            let s0 = mesh.plate_pressure.cell_origin(pcell)[2];
            for a in 0..8 {
                // moment ∫ s φ_a ds at each in-plane point
                let mut m = vec![T::zero(); inplane.len()];
                for (r, &(pt, qi)) in moment_points.iter().enumerate() {
                    let si = r % 2;
                    m[qi] += s_rule.1[si] * pp_ext[2] * (s0 + pt[2] * pp_ext[2]) * tm.value(r, a);
                }
                for (qi, &mq) in m.iter().enumerate() {
                    let wq = tp.weights[qi];
                    for (l, &wd) in dofs.iter().enumerate() {
                        loc.add(Part::CoupleMoment, wd, map_pp[nodes[a]], wq * p.alpha_p * mq * tp.laplacian(qi, l));
                    }
                }
            }
        }
        loc
    }));

    // Interface terms
    let patches = interface_quadrature_cells(mesh);
    let ref_pts = &patches[0].ref_points;
    let bottom_pts: Vec<[T; 3]> = ref_pts.iter().map(|p| [p[0], p[1], T::zero()]).collect();
    let top_pts: Vec<[T; 3]> = ref_pts.iter().map(|p| [p[0], p[1], T::one()]).collect();
    let ti_w = map_to_physical(mesh.plate.cell_extent(), &eval_basis_at(ElementFamily::HermitePlate, ref_pts)).unwrap();
    let ti_pp = eval_basis_at(ElementFamily::PlatePressure, &bottom_pts);
    let ti_u = eval_basis_at(ElementFamily::Triquadratic, &top_pts);
    locals.extend(run_cells(patches.len(), parallel, |pi| {
        let patch = &patches[pi];
        let wdofs = plate_dofs(patch.cells.plate_cell);
        let udofs = fluid_u_dofs(mesh, layout, patch.cells.fluid_cell);
        let pnodes = mesh.plate_pressure.cell_nodes[patch.cells.pp_bottom_cell];
        let mut loc = Local::new();
        for (q, &wq) in patch.weights.iter().enumerate() {
            for a in 0..4 {
                // bottom-face nodes of the slab cell
                let pa = map_pp[pnodes[a]];
                let va = ti_pp.value(q, a);
                for (l, &wd) in wdofs.iter().enumerate() {
                    let vw = ti_w.value(q, l);
                    loc.add(Part::CoupleInterface, pa, wd, wq * vw * va);
                    loc.add(Part::CoupleInterface, wd, pa, -wq * va * vw);
                }
                for b in 0..27 {
                    let vu = ti_u.value(q, b);
                    let u3 = udofs[3 * b + 2];
                    loc.add(Part::CoupleInterface, pa, u3, -wq * vu * va);
                    loc.add(Part::CoupleInterface, u3, pa, wq * va * vu);
                }
            }
            for a in 0..27 {
                for b in 0..27 {
                    let v = wq * p.beta_bjs * ti_u.value(q, a) * ti_u.value(q, b);
                    for c in 0..2 {
                        loc.add(Part::Bjs, udofs[3 * b + c], udofs[3 * a + c], v);
                    }
                }
            }
        }
        loc
    }));

    let mut builders: Vec<TripletBuilder<T>> = (0..N_PARTS)
        .map(|k| {
            if k == Part::B as usize {
                TripletBuilder::new(layout.n_pi, n)
            } else if k == Part::MassPi as usize {
                TripletBuilder::new(layout.n_pi, layout.n_pi)
            } else {
                TripletBuilder::new(n, n)
            }
        })
        .collect();
    for loc in locals {
        for (part, i, j, v) in loc.entries {
            builders[part as usize].push(i, j, v);
        }
    }
    let mut mats = builders.into_iter().map(|b| b.build());
    let mut next = || mats.next().unwrap();
    Forms {
        n,
        n_pi: layout.n_pi,
        mass_eta: next(),
        elastic: next(),
        mass_pb: next(),
        diff_pb: next(),
        mass_w: next(),
        bend: next(),
        gamma_w: next(),
        mass_pp: next(),
        diff_pp: next(),
        mass_u: next(),
        visc_u: next(),
        bjs: next(),
        couple_biot: next(),
        couple_moment: next(),
        couple_moment_adj: next(),
        couple_interface: next(),
        gram: next(),
        b: next(),
        mass_pi: next(),
    }
}

impl<T: Real> Forms<T> {
    fn combo(&self, terms: &[(T, &CsrMatrix<T>)]) -> CsrMatrix<T> {
        CsrMatrix::linear_combination(terms)
    }

    /// Density-weighted masses of η (or ζ), w (or v) and u.
    pub fn inertia(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[(o, &self.mass_eta), (o, &self.mass_w), (o, &self.mass_u)])
    }

    /// Storage-weighted pressure masses.
    pub fn storage(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[(o, &self.mass_pb), (o, &self.mass_pp)])
    }

    /// Elastic and plate stiffness acting on displacements.
    pub fn stiffness(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[(o, &self.elastic), (o, &self.bend), (o, &self.gamma_w)])
    }

    pub fn dissipation(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[(o, &self.diff_pb), (o, &self.diff_pp), (o, &self.visc_u), (o, &self.bjs)])
    }

    /// Sum of the antisymmetric coupling blocks.
    pub fn coupling(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[(o, &self.couple_biot), (o, &self.couple_moment), (o, &self.couple_moment_adj), (o, &self.couple_interface)])
    }

    /// Inertia plus storage: the kinetic/pressure part of the energy.
    pub fn energy_mass(&self) -> CsrMatrix<T> {
        self.inertia().add_scaled(&self.storage(), T::one())
    }

    /// Operator of the unit-shift resolvent problem.
    pub fn resolvent_matrix(&self) -> CsrMatrix<T> {
        let o = T::one();
        self.combo(&[
            (o, &self.inertia()),
            (o, &self.storage()),
            (o, &self.stiffness()),
            (o, &self.dissipation()),
            (o, &self.coupling()),
        ])
    }

    /// Operator of one implicit Euler step in velocity form.
    pub fn velocity_matrix(&self, dt: T) -> Result<CsrMatrix<T>, FormError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(FormError::BadStep { what: "time step", value: dt.to_f64_lossy() });
        }
        let o = T::one();
        Ok(self.combo(&[
            (o / dt, &self.energy_mass()),
            (dt, &self.stiffness()),
            (o, &self.dissipation()),
            (o, &self.coupling()),
        ]))
    }

    /// Load of the unit-shift resolvent problem for data `(F_d, F_v)`:
    /// displacement data in the η/w blocks, velocity/pressure data in all blocks.
    pub fn resolvent_load(&self, f_disp: &[T], f_vel: &[T]) -> Result<Vec<T>, FormError> {
        for v in [f_disp, f_vel] {
            if v.len() != self.n {
                return Err(FormError::Dimension { expected: self.n, got: v.len() });
            }
        }
        let mut l = self.energy_mass().matvec(f_vel);
        let extra = self.inertia().add_scaled(&self.coupling(), T::one()).matvec(f_disp);
        crate::scalar::axpy(T::one(), &extra, &mut l);
        Ok(l)
    }

    /// Right side of one velocity-form step from `(d, φ)` with external load `f`.
    pub fn velocity_load(&self, dt: T, disp: &[T], vel: &[T], f: &[T]) -> Result<Vec<T>, FormError> {
        for v in [disp, vel, f] {
            if v.len() != self.n {
                return Err(FormError::Dimension { expected: self.n, got: v.len() });
            }
        }
        let mut l = self.energy_mass().matvec(vel);
        l.iter_mut().for_each(|x| *x = *x / dt);
        let k = self.stiffness().matvec(disp);
        crate::scalar::axpy(-T::one(), &k, &mut l);
        crate::scalar::axpy(T::one(), f, &mut l);
        Ok(l)
    }
}

/// Source terms evaluated at quadrature points. Every slot defaults to zero.
pub trait Sources<T: Real>: Sync {
    /// Body force on the Biot bulk.
    fn biot_body(&self, _x: [T; 3]) -> [T; 3] {
        [T::zero(); 3]
    }
    /// Fluid source in the Biot pressure equation.
    fn biot_source(&self, _x: [T; 3]) -> T {
        T::zero()
    }
    /// Transverse load on the plate midsurface.
    fn plate_load(&self, _x: [T; 2]) -> T {
        T::zero()
    }
    /// Source in the plate pressure equation, at `(x1, x2, s)`.
    fn plate_pressure_source(&self, _x: [T; 3]) -> T {
        T::zero()
    }
    /// Datum paired with the plate pressure trace at `s = -h/2`.
    fn interface_flux(&self, _x: [T; 2]) -> T {
        T::zero()
    }
    /// Body force on the Stokes region.
    fn fluid_body(&self, _x: [T; 3]) -> [T; 3] {
        [T::zero(); 3]
    }
}

/// Zero sources.
pub struct NoSources;
impl<T: Real> Sources<T> for NoSources {}

/// Assembles `ℓ(ψ)` for the given source terms over the free test functions.
pub fn assemble_source_load<T: Real>(mesh: &MultilayerMesh<T>, layout: &DofLayout, src: &dyn Sources<T>) -> Vec<T> {
    let mut l = vec![T::zero(); layout.n_free];
    let mut put = |i: Option<usize>, v: T| {
        if let Some(i) = i {
            l[i] += v;
        }
    };
    let ext_b = mesh.biot.cell_extent();
    let rule = quadrature_rule::<T>(3, 4);
    let tb = map_to_physical(ext_b, &eval_basis(ElementFamily::Trilinear, &rule).unwrap()).unwrap();
    for cell in 0..mesh.biot.n_cells() {
        let nodes = mesh.biot.cell_nodes[cell];
        let o = mesh.biot.cell_origin(cell);
        for q in 0..tb.n_points {
            let r = rule.points[q];
            let x = [o[0] + r[0] * ext_b[0], o[1] + r[1] * ext_b[1], o[2] + r[2] * ext_b[2]];
            let (f, g) = (src.biot_body(x), src.biot_source(x));
            for a in 0..8 {
                let wv = tb.weights[q] * tb.value(q, a);
                for c in 0..3 {
                    put(layout.map(Field::Eta)[3 * nodes[a] + c], wv * f[c]);
                }
                put(layout.map(Field::Pb)[nodes[a]], wv * g);
            }
        }
    }
    let ext_f = mesh.fluid.cell_extent();
    let tf = map_to_physical(ext_f, &eval_basis(ElementFamily::Triquadratic, &rule).unwrap()).unwrap();
    for cell in 0..mesh.fluid.n_cells() {
        let udofs = fluid_u_dofs(mesh, layout, cell);
        let o = mesh.fluid.cell_origin(cell);
        for q in 0..tf.n_points {
            let r = rule.points[q];
            let f = src.fluid_body([o[0] + r[0] * ext_f[0], o[1] + r[1] * ext_f[1], o[2] + r[2] * ext_f[2]]);
            for a in 0..27 {
                for c in 0..3 {
                    put(udofs[3 * a + c], tf.weights[q] * tf.value(q, a) * f[c]);
                }
            }
        }
    }
    let ext_p = mesh.plate.cell_extent();
    let rule2 = quadrature_rule::<T>(2, 4);
    let tp = map_to_physical(ext_p, &eval_basis(ElementFamily::HermitePlate, &rule2).unwrap()).unwrap();
    let tpp_b = eval_basis_at(ElementFamily::PlatePressure, &rule2.points.iter().map(|p| [p[0], p[1], T::zero()]).collect::<Vec<_>>());
    for cell in 0..mesh.plate.n_cells() {
        let nodes = mesh.plate.cell_nodes[cell];
        let o = mesh.plate.cell_origin(cell);
        let (i, j) = (cell % mesh.n_plane, cell / mesh.n_plane);
        let pnodes = mesh.plate_pressure.cell_nodes[mesh.plate_pressure.cell_index(i, j, 0)];
        for q in 0..tp.n_points {
            let r = rule2.points[q];
            let x = [o[0] + r[0] * ext_p[0], o[1] + r[1] * ext_p[1]];
            let (f, g) = (src.plate_load(x), src.interface_flux(x));
            for l in 0..16 {
                put(layout.map(Field::W)[4 * nodes[l / 4] + l % 4], tp.weights[q] * tp.value(q, l) * f);
            }
            for a in 0..4 {
                put(layout.map(Field::Pp)[pnodes[a]], tp.weights[q] * tpp_b.value(q, a) * g);
            }
        }
    }
    let ext_s = mesh.plate_pressure.cell_extent();
    let ts = map_to_physical(ext_s, &eval_basis(ElementFamily::PlatePressure, &rule).unwrap()).unwrap();
    for cell in 0..mesh.plate_pressure.n_cells() {
        let nodes = mesh.plate_pressure.cell_nodes[cell];
        let o = mesh.plate_pressure.cell_origin(cell);
        for q in 0..ts.n_points {
            let r = rule.points[q];
            let g = src.plate_pressure_source([o[0] + r[0] * ext_s[0], o[1] + r[1] * ext_s[1], o[2] + r[2] * ext_s[2]]);
            for a in 0..8 {
                put(layout.map(Field::Pp)[nodes[a]], ts.weights[q] * ts.value(q, a) * g);
            }
        }
    }
    l
}

/// Velocity gradient, divergence and pressure mass matrices for trilinear
/// velocity and trilinear pressure on the Stokes region (an unstable pairing,
/// kept for comparison with the triquadratic velocity).
#[derive(Debug, Clone)]
pub struct EqualOrderStokes<T> {
    pub gram: CsrMatrix<T>,
    pub b: CsrMatrix<T>,
    pub mass_pi: CsrMatrix<T>,
}

pub fn assemble_equal_order_stokes<T: Real>(mesh: &MultilayerMesh<T>, layout: &DofLayout, mu_f: T) -> EqualOrderStokes<T> {
    let f = &mesh.fluid;
    let n = mesh.n_plane;
    let mut vmap = vec![None; 3 * f.n_nodes()];
    let mut count = 0;
    for node in 0..f.n_nodes() {
        let [i, j, k] = f.node_ijk(node);
        if k > 0 && i < n && j < n {
            for c in 0..3 {
                vmap[3 * node + c] = Some(count);
                count += 1;
            }
        }
    }
    for node in 0..f.n_nodes() {
        let [_, _, k] = f.node_ijk(node);
        let p = f.periodic_partner(node);
        if k > 0 && p != node {
            for c in 0..3 {
                vmap[3 * node + c] = vmap[3 * p + c];
            }
        }
    }
    let t = table::<T>(ElementFamily::Trilinear, &[2, 2, 2], f.cell_extent());
    let mut g = TripletBuilder::new(count, count);
    let mut b = TripletBuilder::new(layout.n_pi, count);
    let mut m = TripletBuilder::new(layout.n_pi, layout.n_pi);
    for cell in 0..f.n_cells() {
        let nodes = f.cell_nodes[cell];
        for q in 0..t.n_points {
            let wq = t.weights[q];
            for a in 0..8 {
                let ga = t.grad(q, a);
                for bb in 0..8 {
                    let gb = t.grad(q, bb);
                    let gg = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
                    for c in 0..3 {
                        if let (Some(i), Some(j)) = (vmap[3 * nodes[bb] + c], vmap[3 * nodes[a] + c]) {
                            g.push(i, j, wq * mu_f * gg);
                        }
                        if let Some(j) = vmap[3 * nodes[a] + c] {
                            b.push(layout.pi_map[nodes[bb]], j, -wq * t.value(q, bb) * ga[c]);
                        }
                    }
                    m.push(layout.pi_map[nodes[bb]], layout.pi_map[nodes[a]], wq * t.value(q, a) * t.value(q, bb));
                }
            }
        }
    }
    EqualOrderStokes { gram: g.build(), b: b.build(), mass_pi: m.build() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dof::build_dof_layout;
    use crate::mesh::build_mesh;

    fn setup(n: usize) -> (MultilayerMesh<f64>, DofLayout, Forms<f64>) {
        let m = build_mesh(n, n, n, 2, 0.2).unwrap();
        let l = build_dof_layout(&m);
        let f = assemble_forms(&m, &l, &MaterialParams::default(), false);
        (m, l, f)
    }

    #[test]
    fn coupling_is_antisymmetric() {
        let (_, _, f) = setup(2);
        let c = f.coupling();
        let s = c.add_scaled(&c.transpose(), 1.0);
        assert!(s.max_abs() < 1e-13 * c.max_abs().max(1.0), "{}", s.max_abs());
    }

    #[test]
    fn moment_routes_are_adjoint() {
        let (_, _, f) = setup(3);
        let d = f.couple_moment.add_scaled(&f.couple_moment_adj.transpose(), 1.0);
        assert!(d.max_abs() < 1e-13, "{}", d.max_abs());
        assert!(f.couple_moment.max_abs() > 1e-3);
    }

    #[test]
    fn parallel_assembly_matches_serial() {
        let m = build_mesh(2, 2, 2, 1, 0.2).unwrap();
        let l = build_dof_layout(&m);
        let p = MaterialParams::default();
        let a = assemble_forms(&m, &l, &p, false).resolvent_matrix();
        let b = assemble_forms(&m, &l, &p, true).resolvent_matrix();
        assert_eq!(a, b);
    }

    #[test]
    fn no_empty_pressure_rows() {
        let (_, _, f) = setup(2);
        assert!(f.b.empty_rows().is_empty());
        let cols_outside_u: f64 = f.b.triplets().filter(|&(_, j, _)| !(f.n - f.mass_u.nrows..f.n).contains(&j)).map(|t| t.2.abs()).sum();
        assert_eq!(cols_outside_u, 0.0);
    }

    #[test]
    fn symmetric_terms_are_symmetric() {
        let (_, _, f) = setup(2);
        for m in [&f.elastic, &f.visc_u, &f.bend, &f.gram, &f.mass_u, &f.bjs, &f.diff_pp] {
            assert!(m.add_scaled(&m.transpose(), -1.0).max_abs() < 1e-13);
        }
    }

    #[test]
    fn velocity_matrix_rejects_bad_step() {
        let (_, _, f) = setup(1);
        assert!(f.velocity_matrix(0.0).is_err());
        assert!(f.velocity_matrix(-1.0).is_err());
        assert!(f.velocity_matrix(f64::NAN).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = MaterialParams::<f64>::default();
        assert!(p.validate().is_ok());
        p.c_b = 0.0;
        assert_eq!(p.validate(), Err(FormError::NonPositive { name: "c_b", value: 0.0 }));
    }

    struct Flux;
    impl Sources<f64> for Flux {
        fn interface_flux(&self, _x: [f64; 2]) -> f64 {
            1.0
        }
    }

    #[test]
    fn interface_flux_hits_bottom_trace_only() {
        let (m, l, _) = setup(3);
        let load = assemble_source_load(&m, &l, &Flux);
        let total: f64 = load.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        for (i, &v) in load.iter().enumerate() {
            if v != 0.0 {
                let (f, r) = l.representative[i];
                assert_eq!(f, Field::Pp);
                assert_eq!(m.plate_pressure.node_ijk(r)[2], 0);
            }
        }
        assert!(assemble_source_load(&m, &l, &NoSources).iter().all(|&v| v == 0.0));
    }
}
