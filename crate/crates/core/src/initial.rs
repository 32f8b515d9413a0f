//! Initial states: zero, seeded random, and a smooth Fourier-mode field.
//!
//! Every constructor returns a state whose velocity satisfies the discrete
//! divergence constraint, so the first step starts on the constraint manifold.

use crate::dof::Field;
use crate::evolution::{EvolutionError, StateVector, System};
use crate::mms::Manufactured;
use crate::saddle::SaddleFactor;
use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    Random { seed: u64, amplitude: f64 },
    Fourier { amplitude: f64, wavenumber: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Random { seed: 0, amplitude: 1.0 }
    }
}

impl InitialCondition {
    pub fn build<T: Real>(&self, sys: &System<T>) -> Result<StateVector<T>, EvolutionError> {
        match *self {
            InitialCondition::Zero => Ok(StateVector::zeros(&sys.layout)),
            InitialCondition::Random { seed, amplitude } => random_state(sys, seed, T::lit(amplitude)),
            InitialCondition::Fourier { amplitude, wavenumber } => fourier_state(sys, amplitude, wavenumber),
        }
    }
}

/// Uniform entries in `[-amplitude, amplitude]`: displacements on the η/w
/// blocks, velocities and pressures on every block. The same seed always
/// gives the same state.
pub fn random_state<T: Real>(sys: &System<T>, seed: u64, amplitude: T) -> Result<StateVector<T>, EvolutionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.layout.n_free;
    let mut draw = || amplitude * T::lit(rng.random_range(-1.0..=1.0));
    let disp: Vec<T> = (0..n).map(|_| draw()).collect();
    let vel: Vec<T> = (0..n).map(|_| draw()).collect();
    let mut s = StateVector { disp: sys.displacement_part(&disp), vel, pi: vec![T::zero(); sys.layout.n_pi], t: T::zero() };
    project_velocity(sys, &mut s.vel)?;
    Ok(s)
}

/// Interpolant of the smooth manufactured field family, used both as
/// displacement and as velocity/pressure data.
pub fn fourier_state<T: Real>(sys: &System<T>, amplitude: f64, wavenumber: f64) -> Result<StateVector<T>, EvolutionError> {
    let m = Manufactured::new(amplitude, wavenumber, sys.mesh.h_p.to_f64_lossy());
    let x = sys.layout.restrict(&m.interpolate(&sys.mesh, &sys.layout));
    let mut s = StateVector { disp: sys.displacement_part(&x), vel: x, pi: vec![T::zero(); sys.layout.n_pi], t: T::zero() };
    project_velocity(sys, &mut s.vel)?;
    Ok(s)
}

/// Replaces the Stokes velocity block by its fluid-mass-orthogonal projection
/// onto the discretely divergence-free subspace.
pub fn project_velocity<T: Real>(sys: &System<T>, vel: &mut [T]) -> Result<(), EvolutionError> {
    let r = sys.layout.block(Field::U);
    if r.is_empty() || sys.layout.n_pi == 0 {
        return Ok(());
    }
    let m = sys.forms.mass_u.submatrix(r.clone(), r.clone());
    let b = sys.forms.b.submatrix(0..sys.layout.n_pi, r.clone());
    let rhs = m.matvec(&vel[r.clone()]);
    let factor = SaddleFactor::new(&m, &b, &[(0..r.len(), "u")])?;
    let sol = factor.solve(&rhs, &vec![T::zero(); sys.layout.n_pi])?;
    vel[r].copy_from_slice(&sol.phi);
    Ok(())
}
