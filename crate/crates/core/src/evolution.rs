//! Resolvent solve, implicit Euler stepping in velocity form, and the energy
//! bookkeeping of the discrete dissipation identity.
//!
//! With mass `M` (inertia + storage), stiffness `K`, dissipation `R` and
//! antisymmetric coupling `C`, a step from `(dⁿ, φⁿ)` solves
//!
//! ```text
//! (M/Δt + Δt K + R + C) φ + Bᵀπ = M φⁿ/Δt − K dⁿ + f,   B φ = 0,
//! ```
//!
//! then sets `dⁿ⁺¹ = dⁿ + Δt φ` on the displacement blocks. With
//! `E = dᵀKd + φᵀMφ` this gives exactly
//! `Eⁿ⁺¹ − Eⁿ + J + 2Δt φᵀRφ = 2Δt fᵀφ`, where `J = |Δφ|²_M + |Δd|²_K`.

use crate::dof::{DofLayout, Field};
use crate::forms::{assemble_forms, FormError, Forms, MaterialParams};
use crate::mesh::MultilayerMesh;
use crate::saddle::{SaddleFactor, SolveError};
use crate::scalar::{axpy, dot, norm2, Real};
use crate::sparse::CsrMatrix;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error("fixed-point iteration did not converge; increment history {history:?}")]
    Picard { history: Vec<f64> },
}

/// Discrete state: displacements (η, w blocks), velocities and pressures
/// (ζ, p_b, v, p_p, u blocks), Stokes pressure, time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    pub disp: Vec<T>,
    pub vel: Vec<T>,
    pub pi: Vec<T>,
    pub t: T,
}

impl<T: Real> StateVector<T> {
    pub fn zeros(layout: &DofLayout) -> Self {
        Self { disp: vec![T::zero(); layout.n_free], vel: vec![T::zero(); layout.n_free], pi: vec![T::zero(); layout.n_pi], t: T::zero() }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            disp: self.disp.iter().map(|&x| c * x).collect(),
            vel: self.vel.iter().map(|&x| c * x).collect(),
            pi: self.pi.iter().map(|&x| c * x).collect(),
            t: self.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.disp.iter().chain(&self.vel).chain(&self.pi).all(|x| x.is_finite())
    }
}

/// Energy split into its seven contributions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBlocks<T> {
    pub eta: T,
    pub zeta: T,
    pub pb: T,
    pub w: T,
    pub v: T,
    pub pp: T,
    pub u: T,
}

impl<T: Real> EnergyBlocks<T> {
    pub fn total(&self) -> T {
        self.eta + self.zeta + self.pb + self.w + self.v + self.pp + self.u
    }

    pub fn as_array(&self) -> [T; 7] {
        [self.eta, self.zeta, self.pb, self.w, self.v, self.pp, self.u]
    }
}

/// One row of the energy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport<T> {
    pub t: T,
    pub e: T,
    pub blocks: EnergyBlocks<T>,
    pub d_diss: T,
    pub j: T,
    /// `fᵀφⁿ⁺¹`, the work of the external load.
    pub work: T,
    pub identity_residual: T,
    /// `‖Bφ‖` after the solve.
    pub constraint_residual: T,
    /// Nonlinear plate potential, when present.
    pub potential: Option<T>,
}

/// Mesh, layout and assembled operators shared by all drivers.
pub struct System<T: Real> {
    pub mesh: MultilayerMesh<T>,
    pub layout: DofLayout,
    pub params: MaterialParams<T>,
    pub forms: Forms<T>,
    pub energy_mass: CsrMatrix<T>,
    pub stiffness: CsrMatrix<T>,
    pub dissipation: CsrMatrix<T>,
    /// 1 on displacement-carrying blocks (η, w), 0 elsewhere.
    pub disp_mask: Vec<T>,
    step_cache: Option<(T, SaddleFactor<T>)>,
}

impl<T: Real> System<T> {
    pub fn new(mesh: MultilayerMesh<T>, params: MaterialParams<T>, parallel: bool) -> Result<Self, FormError> {
        params.validate()?;
        Ok(Self::new_unchecked(mesh, params, parallel))
    }

    /// Like [`System::new`] but accepts zero coefficients (for isolating single terms).
    pub fn new_unchecked(mesh: MultilayerMesh<T>, params: MaterialParams<T>, parallel: bool) -> Self {
        let layout = crate::dof::build_dof_layout(&mesh);
        let forms = assemble_forms(&mesh, &layout, &params, parallel);
        let mut disp_mask = vec![T::zero(); layout.n_free];
        for f in [Field::Eta, Field::W] {
            for i in layout.block(f) {
                disp_mask[i] = T::one();
            }
        }
        Self {
            energy_mass: forms.energy_mass(),
            stiffness: forms.stiffness(),
            dissipation: forms.dissipation(),
            mesh,
            layout,
            params,
            forms,
            disp_mask,
            step_cache: None,
        }
    }

    pub fn blocks(&self) -> Vec<(Range<usize>, &'static str)> {
        Field::ALL.iter().map(|&f| (self.layout.block(f), f.name())).collect()
    }

    /// Energy of a state, split by field.
    pub fn energy_blocks(&self, s: &StateVector<T>) -> EnergyBlocks<T> {
        let f = &self.forms;
        EnergyBlocks {
            eta: f.elastic.quad_form(&s.disp),
            zeta: f.mass_eta.quad_form(&s.vel),
            pb: f.mass_pb.quad_form(&s.vel),
            w: f.bend.quad_form(&s.disp) + f.gamma_w.quad_form(&s.disp),
            v: f.mass_w.quad_form(&s.vel),
            pp: f.mass_pp.quad_form(&s.vel),
            u: f.mass_u.quad_form(&s.vel),
        }
    }

    /// Squared energy norm `‖y‖²_X`.
    pub fn energy(&self, s: &StateVector<T>) -> T {
        self.stiffness.quad_form(&s.disp) + self.energy_mass.quad_form(&s.vel)
    }

    /// Energy part of a report (no step quantities).
    pub fn compute_energy(&self, s: &StateVector<T>) -> EnergyReport<T> {
        let blocks = self.energy_blocks(s);
        EnergyReport {
            t: s.t,
            e: self.energy(s),
            blocks,
            d_diss: self.dissipation.quad_form(&s.vel),
            j: T::zero(),
            work: T::zero(),
            identity_residual: T::zero(),
            constraint_residual: norm2(&self.forms.b.matvec(&s.vel)),
            potential: None,
        }
    }

    /// Masks a free vector to its displacement blocks.
    pub fn displacement_part(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.disp_mask).map(|(&a, &m)| a * m).collect()
    }

    /// Solves the unit-shift resolvent problem for data `F = (F_d, F_v)`.
    ///
    /// `F_d` carries displacement data in the η/w blocks; `F_v` carries
    /// velocity and pressure data. Returns `y` with `ζ = η − f₁`, `v = w − f₄`.
    pub fn resolvent_solve(&self, data: &StateVector<T>) -> Result<StateVector<T>, EvolutionError> {
        let f_disp = self.displacement_part(&data.disp);
        let load = self.forms.resolvent_load(&f_disp, &data.vel)?;
        let a = self.forms.resolvent_matrix();
        let factor = SaddleFactor::new(&a, &self.forms.b, &self.blocks())?;
        let sol = factor.solve(&load, &vec![T::zero(); self.layout.n_pi])?;
        let disp = self.displacement_part(&sol.phi);
        let mut vel = sol.phi;
        axpy(-T::one(), &f_disp, &mut vel);
        Ok(StateVector { disp, vel, pi: sol.pi, t: data.t })
    }

    fn factor_for(&mut self, dt: T) -> Result<&SaddleFactor<T>, EvolutionError> {
        let stale = !matches!(&self.step_cache, Some((d, _)) if *d == dt);
        if stale {
            let a = self.forms.velocity_matrix(dt)?;
            let factor = SaddleFactor::new(&a, &self.forms.b, &self.blocks())?;
            self.step_cache = Some((dt, factor));
        }
        Ok(&self.step_cache.as_ref().unwrap().1)
    }

    /// Solves one velocity-form step with external load `f` (free test vector).
    /// The input state is left untouched on failure.
    pub fn step_implicit_euler(&mut self, state: &StateVector<T>, dt: T, f: &[T]) -> Result<(StateVector<T>, EnergyReport<T>), EvolutionError> {
        let load = self.forms.velocity_load(dt, &state.disp, &state.vel, f)?;
        let zeros = vec![T::zero(); self.layout.n_pi];
        let sol = self.factor_for(dt)?.solve(&load, &zeros)?;
        let next = self.advance(state, dt, sol.phi, sol.pi);
        let report = self.step_report(state, &next, dt, f);
        Ok((next, report))
    }

    /// Builds the next state from the solved velocities.
    pub(crate) fn advance(&self, state: &StateVector<T>, dt: T, phi: Vec<T>, pi: Vec<T>) -> StateVector<T> {
        let mut disp = state.disp.clone();
        for ((d, &p), &m) in disp.iter_mut().zip(&phi).zip(&self.disp_mask) {
            *d += dt * p * m;
        }
        StateVector { disp, vel: phi, pi, t: state.t + dt }
    }

    /// Energy report for the transition `prev → next` under load `f`.
    pub fn step_report(&self, prev: &StateVector<T>, next: &StateVector<T>, dt: T, f: &[T]) -> EnergyReport<T> {
        let mut r = self.compute_energy(next);
        let e0 = self.energy(prev);
        let dv: Vec<T> = next.vel.iter().zip(&prev.vel).map(|(&a, &b)| a - b).collect();
        let dd: Vec<T> = next.disp.iter().zip(&prev.disp).map(|(&a, &b)| a - b).collect();
        r.j = self.energy_mass.quad_form(&dv) + self.stiffness.quad_form(&dd);
        r.work = dot(f, &next.vel);
        let two = T::lit(2.0);
        r.identity_residual = r.e - e0 + r.j + two * dt * r.d_diss - two * dt * r.work;
        r
    }
}

/// States and reports of a run. On a failed step the trajectory stops and
/// `error` records why.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub dt: T,
    pub states: Vec<StateVector<T>>,
    pub reports: Vec<EnergyReport<T>>,
    pub error: Option<EvolutionError>,
}

/// Runs `steps` implicit Euler steps; `forcing(t)` returns the load at `t`.
pub fn simulate<T: Real>(
    sys: &mut System<T>,
    initial: StateVector<T>,
    dt: T,
    steps: usize,
    forcing: Option<&dyn Fn(T) -> Vec<T>>,
) -> Trajectory<T> {
    let zero = vec![T::zero(); sys.layout.n_free];
    let mut states = vec![initial];
    let mut reports = Vec::with_capacity(steps);
    let mut error = None;
    for _ in 0..steps {
        let cur = states.last().unwrap();
        let f = forcing.map_or_else(|| zero.clone(), |g| g(cur.t + dt));
        match sys.step_implicit_euler(cur, dt, &f) {
            Ok((s, r)) => {
                states.push(s);
                reports.push(r);
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    Trajectory { dt, states, reports, error }
}

#[derive(Debug, Clone)]
pub struct AuditSummary {
    /// Identity residual of each step, recomputed from the states.
    pub residuals: Vec<f64>,
    pub max_relative: f64,
    pub mean_relative: f64,
    /// `Eⁿ⁺¹ ≤ Eⁿ` (up to `tolerance`) at every step.
    pub monotone: bool,
    /// Indices of states whose recorded energy disagrees with the state itself.
    pub flagged_states: Vec<usize>,
    /// Steps whose identity residual exceeds the tolerance.
    pub flagged_steps: Vec<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Recomputes the dissipation identity along a trajectory.
///
/// `works[n]` is the external work recorded for step `n` (taken from the
/// reports). Relative residuals are scaled by `max(Eⁿ, 1)`.
pub fn energy_audit<T: Real>(sys: &System<T>, traj: &Trajectory<T>, tolerance: f64, require_monotone: bool) -> AuditSummary {
    let energies: Vec<f64> = traj.states.iter().map(|s| sys.energy(s).to_f64_lossy()).collect();
    let mut residuals = Vec::new();
    let mut rel = Vec::new();
    let mut monotone = true;
    let mut flagged_states = Vec::new();
    let mut flagged_steps = Vec::new();
    let dt = traj.dt.to_f64_lossy();
    for (n, rep) in traj.reports.iter().enumerate() {
        let (prev, next) = (&traj.states[n], &traj.states[n + 1]);
        let dv: Vec<T> = next.vel.iter().zip(&prev.vel).map(|(&a, &b)| a - b).collect();
        let dd: Vec<T> = next.disp.iter().zip(&prev.disp).map(|(&a, &b)| a - b).collect();
        let j = (sys.energy_mass.quad_form(&dv) + sys.stiffness.quad_form(&dd)).to_f64_lossy();
        let d = sys.dissipation.quad_form(&next.vel).to_f64_lossy();
        let r = energies[n + 1] - energies[n] + j + 2.0 * dt * d - 2.0 * dt * rep.work.to_f64_lossy();
        let scale = energies[n].max(1.0);
        residuals.push(r);
        rel.push(r.abs() / scale);
        if r.abs() / scale > tolerance {
            flagged_steps.push(n);
        }
        if energies[n + 1] > energies[n] + tolerance * scale {
            monotone = false;
        }
        let recorded = rep.e.to_f64_lossy();
        if (recorded - energies[n + 1]).abs() > tolerance * energies[n + 1].abs().max(1.0) {
            flagged_states.push(n + 1);
        }
    }
    let max_relative = rel.iter().cloned().fold(0.0, f64::max);
    let mean_relative = if rel.is_empty() { 0.0 } else { rel.iter().sum::<f64>() / rel.len() as f64 };
    let pass = flagged_steps.is_empty() && flagged_states.is_empty() && (monotone || !require_monotone);
    AuditSummary { residuals, max_relative, mean_relative, monotone, flagged_states, flagged_steps, tolerance, pass }
}

/// Largest mismatch between slaved raw DOFs and their masters, and `‖B φ‖₂`.
pub fn constraint_defects<T: Real>(sys: &System<T>, s: &StateVector<T>) -> (f64, f64) {
    let mut slave = 0.0f64;
    for x in [&s.disp, &s.vel] {
        let raw = sys.layout.expand(x);
        for sl in &sys.layout.slave_map {
            let d = (raw.get(sl.field)[sl.raw] - raw.get(sl.master_field)[sl.master_raw]).abs().to_f64_lossy();
            slave = slave.max(d);
        }
        // tangential skeleton displacement vanishes on the interface
        for node in 0..sys.mesh.biot.n_nodes() {
            if sys.mesh.biot.node_ijk(node)[2] == 0 {
                for c in 0..2 {
                    slave = slave.max(raw.eta[3 * node + c].abs().to_f64_lossy());
                }
            }
        }
    }
    (slave, norm2(&sys.forms.b.matvec(&s.vel)).to_f64_lossy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::random_state;
    use crate::mesh::build_mesh;

    fn system(n: usize) -> System<f64> {
        System::new(build_mesh(n, n, n, 2, 0.2).unwrap(), MaterialParams::default(), false).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let mut s = system(2);
        let z = StateVector::zeros(&s.layout);
        let f = vec![0.0; s.layout.n_free];
        let (next, r) = s.step_implicit_euler(&z, 0.01, &f).unwrap();
        assert!(next.vel.iter().chain(&next.disp).chain(&next.pi).all(|&x| x == 0.0));
        assert_eq!((r.e, r.d_diss, r.j), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_step_decreases_energy() {
        let mut s = system(2);
        let y0 = random_state(&s, 3, 1.0).unwrap();
        let f = vec![0.0; s.layout.n_free];
        let (_, r) = s.step_implicit_euler(&y0, 0.01, &f).unwrap();
        assert!(r.e < s.energy(&y0));
        assert!(r.identity_residual.abs() <= 1e-8 * s.energy(&y0).max(1.0));
    }

    #[test]
    fn energy_is_quadratic() {
        let s = system(2);
        let y = random_state(&s, 5, 1.0).unwrap();
        let (e1, e2) = (s.energy(&y), s.energy(&y.scaled(2.0)));
        assert!((e2 - 4.0 * e1).abs() < 1e-12 * e2);
        let r = s.compute_energy(&y);
        assert!((r.blocks.total() - r.e).abs() < 1e-12 * r.e);
        assert_eq!(s.energy(&StateVector::zeros(&s.layout)), 0.0);
    }

    #[test]
    fn resolvent_of_zero_is_zero() {
        let s = system(2);
        let y = s.resolvent_solve(&StateVector::zeros(&s.layout)).unwrap();
        assert!(y.vel.iter().chain(&y.disp).all(|&x| x == 0.0));
    }

    #[test]
    fn audit_flags_perturbed_state() {
        let mut s = system(2);
        let y0 = random_state(&s, 9, 1.0).unwrap();
        let mut traj = simulate(&mut s, y0, 0.01, 6, None);
        let clean = energy_audit(&s, &traj, 1e-8, true);
        assert!(clean.pass, "{clean:?}");
        for x in traj.states[3].vel.iter_mut().take(40) {
            *x += 0.1;
        }
        let bad = energy_audit(&s, &traj, 1e-8, true);
        assert!(!bad.pass);
        assert_eq!(bad.flagged_states, vec![3]);
    }
}
