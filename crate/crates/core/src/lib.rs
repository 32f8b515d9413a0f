//! Finite-element simulator for a Biot bulk, a poroelastic plate and a
//! Stokes channel coupled through a shared interface.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! the aliases at the crate root fix it to `f64`.

pub mod cli;
pub mod dof;
pub mod element;
pub mod evolution;
pub mod forms;
pub mod initial;
pub mod io;
pub mod mesh;
pub mod mms;
pub mod quadrature;
pub mod saddle;
pub mod scalar;
pub mod sparse;
pub mod verify;
pub mod vonkarman;

pub use dof::{build_dof_layout, DofLayout, Field, RawFields};
pub use element::{eval_basis, map_to_physical, ElementFamily};
pub use evolution::{energy_audit, simulate};
pub use forms::assemble_forms;
pub use mesh::{build_mesh, interface_quadrature_cells};
pub use quadrature::{quadrature_rule, QuadRule};
pub use scalar::Real;

pub type Mesh = mesh::MultilayerMesh<f64>;
pub type Matrix = sparse::CsrMatrix<f64>;
pub type Params = forms::MaterialParams<f64>;
pub type Forms = forms::Forms<f64>;
pub type State = evolution::StateVector<f64>;
pub type Report = evolution::EnergyReport<f64>;
pub type Simulator = evolution::System<f64>;
