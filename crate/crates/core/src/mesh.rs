//! Four-layer structured mesh sharing one in-plane lattice.
//!
//! Layers: the Biot bulk `(0,1)²×(0,1)`, the Stokes region `(0,1)²×(-1,0)`,
//! the plate midsurface at `x3 = 0`, and the plate pressure slab
//! `(0,1)²×(-h/2,h/2)` in the inflation variable `s`.

use crate::quadrature::{quadrature_rule, QuadRule};
use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell count `{name}` must be at least 1 (got {value})")]
    BadCount { name: &'static str, value: usize },
    #[error("plate thickness must be positive and finite (got {0})")]
    BadThickness(f64),
}

/// Axis-aligned box layer `(0,1)² × (z0, z1)` split into `n × n × nz` cells.
///
/// Nodes are numbered `i + (n+1)(j + (n+1)k)`, cells `i + n(j + n k)`.
#[derive(Debug, Clone)]
pub struct BoxLayer<T> {
    pub n: usize,
    pub nz: usize,
    pub z0: T,
    pub z1: T,
    pub node_coords: Vec<[T; 3]>,
    pub cell_nodes: Vec<[usize; 8]>,
}

impl<T: Real> BoxLayer<T> {
    fn new(n: usize, nz: usize, z0: T, z1: T) -> Self {
        let (fx, fz) = (T::count(n), T::count(nz));
        let mut node_coords = Vec::with_capacity((n + 1) * (n + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=n {
                for i in 0..=n {
                    let z = if k == nz { z1 } else { z0 + (z1 - z0) * T::count(k) / fz };
                    node_coords.push([T::count(i) / fx, T::count(j) / fx, z]);
                }
            }
        }
        let mut cell_nodes = Vec::with_capacity(n * n * nz);
        let id = |i: usize, j: usize, k: usize| i + (n + 1) * (j + (n + 1) * k);
        for k in 0..nz {
            for j in 0..n {
                for i in 0..n {
                    cell_nodes.push(std::array::from_fn(|a| id(i + (a & 1), j + ((a >> 1) & 1), k + (a >> 2))));
                }
            }
        }
        Self { n, nz, z0, z1, node_coords, cell_nodes }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.n + 1) * (j + (self.n + 1) * k)
    }

    pub fn node_ijk(&self, node: usize) -> [usize; 3] {
        let m = self.n + 1;
        [node % m, (node / m) % m, node / (m * m)]
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    pub fn cell_ijk(&self, cell: usize) -> [usize; 3] {
        [cell % self.n, (cell / self.n) % self.n, cell / (self.n * self.n)]
    }

    pub fn cell_extent(&self) -> [T; 3] {
        [
            T::one() / T::count(self.n),
            T::one() / T::count(self.n),
            (self.z1 - self.z0) / T::count(self.nz),
        ]
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [T; 3] {
        self.node_coords[self.cell_nodes[cell][0]]
    }

    /// Node carrying the same DOFs after lateral periodic wraparound.
    pub fn periodic_partner(&self, node: usize) -> usize {
        let [i, j, k] = self.node_ijk(node);
        self.node_index(i % self.n, j % self.n, k)
    }
}

/// Plate midsurface `(0,1)²` at `x3 = 0`, nodes `i + (n+1)j`, cells `i + n j`.
#[derive(Debug, Clone)]
pub struct PlateLayer<T> {
    pub n: usize,
    pub node_coords: Vec<[T; 2]>,
    pub cell_nodes: Vec<[usize; 4]>,
}

impl<T: Real> PlateLayer<T> {
    fn new(n: usize) -> Self {
        let f = T::count(n);
        let mut node_coords = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                node_coords.push([T::count(i) / f, T::count(j) / f]);
            }
        }
        let mut cell_nodes = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let b = i + (n + 1) * j;
                cell_nodes.push([b, b + 1, b + n + 1, b + n + 2]);
            }
        }
        Self { n, node_coords, cell_nodes }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len()
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = (node % (self.n + 1), node / (self.n + 1));
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    pub fn cell_extent(&self) -> [T; 3] {
        let h = T::one() / T::count(self.n);
        [h, h, T::one()]
    }

    pub fn cell_origin(&self, cell: usize) -> [T; 2] {
        self.node_coords[self.cell_nodes[cell][0]]
    }
}

/// Cells sharing one in-plane lattice square on the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceCell {
    pub plate_cell: usize,
    /// Top-layer cell of the Stokes region (its top face lies on the interface).
    pub fluid_cell: usize,
    /// Bottom-layer cell of the Biot region.
    pub biot_cell: usize,
    /// Plate pressure cell touching `s = -h/2`.
    pub pp_bottom_cell: usize,
    /// Plate pressure cell touching `s = +h/2`.
    pub pp_top_cell: usize,
}

#[derive(Debug, Clone)]
pub struct MultilayerMesh<T> {
    pub n_plane: usize,
    pub nz_b: usize,
    pub nz_f: usize,
    pub ns_p: usize,
    pub h_p: T,
    pub biot: BoxLayer<T>,
    pub fluid: BoxLayer<T>,
    pub plate: PlateLayer<T>,
    pub plate_pressure: BoxLayer<T>,
    pub interface_cells: Vec<InterfaceCell>,
}

pub fn build_mesh<T: Real>(n_plane: usize, nz_b: usize, nz_f: usize, ns_p: usize, h_p: T) -> Result<MultilayerMesh<T>, MeshError> {
    for (name, value) in [("n_plane", n_plane), ("nz_b", nz_b), ("nz_f", nz_f), ("ns_p", ns_p)] {
        if value == 0 {
            return Err(MeshError::BadCount { name, value });
        }
    }
    if !(h_p > T::zero()) || !h_p.is_finite() {
        return Err(MeshError::BadThickness(h_p.to_f64_lossy()));
    }
    let half = h_p / T::lit(2.0);
    let biot = BoxLayer::new(n_plane, nz_b, T::zero(), T::one());
    let fluid = BoxLayer::new(n_plane, nz_f, -T::one(), T::zero());
    let plate_pressure = BoxLayer::new(n_plane, ns_p, -half, half);
    let plate = PlateLayer::new(n_plane);
    let interface_cells = (0..n_plane * n_plane)
        .map(|c| {
            let (i, j) = (c % n_plane, c / n_plane);
            InterfaceCell {
                plate_cell: c,
                fluid_cell: fluid.cell_index(i, j, nz_f - 1),
                biot_cell: biot.cell_index(i, j, 0),
                pp_bottom_cell: plate_pressure.cell_index(i, j, 0),
                pp_top_cell: plate_pressure.cell_index(i, j, ns_p - 1),
            }
        })
        .collect();
    Ok(MultilayerMesh { n_plane, nz_b, nz_f, ns_p, h_p, biot, fluid, plate, plate_pressure, interface_cells })
}

/// Interface cell plus its in-plane quadrature rule on the physical square.
#[derive(Debug, Clone)]
pub struct InterfacePatch<T> {
    pub cells: InterfaceCell,
    pub origin: [T; 2],
    pub extent: [T; 2],
    /// Reference in-plane points (third coordinate unused).
    pub ref_points: Vec<[T; 3]>,
    /// Physical weights (scaled by the patch area).
    pub weights: Vec<T>,
}

/// Interface patches with the shared 4×4 Gauss rule.
pub fn interface_quadrature_cells<T: Real>(mesh: &MultilayerMesh<T>) -> Vec<InterfacePatch<T>> {
    let rule: QuadRule<T> = quadrature_rule(2, 4);
    let ext = mesh.plate.cell_extent();
    let area = ext[0] * ext[1];
    mesh.interface_cells
        .iter()
        .map(|&cells| InterfacePatch {
            cells,
            origin: mesh.plate.cell_origin(cells.plate_cell),
            extent: [ext[0], ext[1]],
            ref_points: rule.points.clone(),
            weights: rule.weights.iter().map(|&w| w * area).collect(),
        })
        .collect()
}
