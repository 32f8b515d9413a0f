//! Constrained global numbering of the primal unknowns.
//!
//! Every field owns a raw array over its full (non-periodic) lattice. Each raw
//! entry resolves to one free index or to zero; lateral periodicity, essential
//! zeros and the cross-layer identities (`η = w e3` and `p_b = p_p` on the
//! interface) are all encoded this way, so slaved values are copies of their
//! masters.

use crate::mesh::MultilayerMesh;
use crate::scalar::Real;
use std::ops::Range;

/// Primal fields in free-vector block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    /// Biot displacement (and its velocity), trilinear vector, `3·node + c`.
    Eta,
    /// Biot pore pressure, trilinear.
    Pb,
    /// Plate deflection (and its velocity), Hermite, `4·node + d`.
    W,
    /// Plate pressure on `(x1, x2, s)`.
    Pp,
    /// Stokes velocity, triquadratic vector, `3·node + c`.
    U,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Eta, Field::Pb, Field::W, Field::Pp, Field::U];

    pub fn block(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Eta => "eta",
            Field::Pb => "p_b",
            Field::W => "w",
            Field::Pp => "p_p",
            Field::U => "u",
        }
    }
}

/// Raw per-field coefficient arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFields<T> {
    pub eta: Vec<T>,
    pub pb: Vec<T>,
    pub w: Vec<T>,
    pub pp: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> RawFields<T> {
    pub fn get(&self, f: Field) -> &[T] {
        match f {
            Field::Eta => &self.eta,
            Field::Pb => &self.pb,
            Field::W => &self.w,
            Field::Pp => &self.pp,
            Field::U => &self.u,
        }
    }

    pub fn get_mut(&mut self, f: Field) -> &mut Vec<T> {
        match f {
            Field::Eta => &mut self.eta,
            Field::Pb => &mut self.pb,
            Field::W => &mut self.w,
            Field::Pp => &mut self.pp,
            Field::U => &mut self.u,
        }
    }
}

/// A constrained raw DOF whose value is copied from another field's DOF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slave {
    pub field: Field,
    pub raw: usize,
    pub master_field: Field,
    /// Canonical (periodic representative) raw index of the master.
    pub master_raw: usize,
}

#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_plane: usize,
    pub nz_b: usize,
    pub nz_f: usize,
    pub ns_p: usize,
    maps: [Vec<Option<usize>>; 5],
    pub blocks: [Range<usize>; 5],
    pub n_free: usize,
    /// `(field, raw)` owning each free index.
    pub representative: Vec<(Field, usize)>,
    /// Raw Stokes pressure node → pressure index.
    pub pi_map: Vec<usize>,
    pub pi_representative: Vec<usize>,
    pub n_pi: usize,
    /// `(field, raw, partner)`: raw DOF sharing the index of `partner` across the lateral boundary.
    pub periodic_map: Vec<(Field, usize, usize)>,
    pub essential_zeros: Vec<(Field, usize)>,
    pub slave_map: Vec<Slave>,
}

/// Index of a node on the triquadratic Stokes lattice.
pub fn q2_node(n: usize, i: usize, j: usize, k: usize) -> usize {
    i + (2 * n + 1) * (j + (2 * n + 1) * k)
}

pub fn build_dof_layout<T: Real>(mesh: &MultilayerMesh<T>) -> DofLayout {
    let n = mesh.n_plane;
    let (nzb, nzf, nsp) = (mesh.nz_b, mesh.nz_f, mesh.ns_p);
    let nb = mesh.biot.n_nodes();
    let npl = mesh.plate.n_nodes();
    let npp = mesh.plate_pressure.n_nodes();
    let m2 = 2 * n + 1;
    let nq2 = m2 * m2 * (2 * nzf + 1);

    let mut maps: [Vec<Option<usize>>; 5] = [vec![None; 3 * nb], vec![None; nb], vec![None; 4 * npl], vec![None; npp], vec![None; 3 * nq2]];
    let mut representative = Vec::new();
    let mut periodic_map = Vec::new();
    let mut essential_zeros = Vec::new();
    let mut slave_map = Vec::new();
    let mut blocks: [Range<usize>; 5] = std::array::from_fn(|_| 0..0);

    let wrap = |i: usize, m: usize| if i == m { 0 } else { i };

    // Biot displacement: masters are non-interface, non-top nodes.
    let start = representative.len();
    for node in 0..nb {
        let [i, j, k] = mesh.biot.node_ijk(node);
        if k == 0 || k == nzb || i == n || j == n {
            continue;
        }
        for c in 0..3 {
            maps[0][3 * node + c] = Some(representative.len());
            representative.push((Field::Eta, 3 * node + c));
        }
    }
    blocks[0] = start..representative.len();

    let start = representative.len();
    for node in 0..nb {
        let [i, j, k] = mesh.biot.node_ijk(node);
        if k == 0 || k == nzb || i == n || j == n {
            continue;
        }
        maps[1][node] = Some(representative.len());
        representative.push((Field::Pb, node));
    }
    blocks[1] = start..representative.len();

    let start = representative.len();
    for node in 0..npl {
        if mesh.plate.is_boundary_node(node) {
            for d in 0..4 {
                essential_zeros.push((Field::W, 4 * node + d));
            }
            continue;
        }
        for d in 0..4 {
            maps[2][4 * node + d] = Some(representative.len());
            representative.push((Field::W, 4 * node + d));
        }
    }
    blocks[2] = start..representative.len();

    let start = representative.len();
    for node in 0..npp {
        let [i, j, _] = mesh.plate_pressure.node_ijk(node);
        if i == n || j == n {
            continue;
        }
        maps[3][node] = Some(representative.len());
        representative.push((Field::Pp, node));
    }
    blocks[3] = start..representative.len();

    let start = representative.len();
    for k in 1..=2 * nzf {
        for j in 0..2 * n {
            for i in 0..2 * n {
                let node = q2_node(n, i, j, k);
                for c in 0..3 {
                    maps[4][3 * node + c] = Some(representative.len());
                    representative.push((Field::U, 3 * node + c));
                }
            }
        }
    }
    blocks[4] = start..representative.len();

    // Periodic copies of lateral-face DOFs.
    for node in 0..nb {
        let [i, j, k] = mesh.biot.node_ijk(node);
        if (i == n || j == n) && k != 0 && k != nzb {
            let p = mesh.biot.node_index(wrap(i, n), wrap(j, n), k);
            for c in 0..3 {
                maps[0][3 * node + c] = maps[0][3 * p + c];
                periodic_map.push((Field::Eta, 3 * node + c, 3 * p + c));
            }
            maps[1][node] = maps[1][p];
            periodic_map.push((Field::Pb, node, p));
        }
    }
    for node in 0..npp {
        let [i, j, k] = mesh.plate_pressure.node_ijk(node);
        if i == n || j == n {
            let p = mesh.plate_pressure.node_index(wrap(i, n), wrap(j, n), k);
            maps[3][node] = maps[3][p];
            periodic_map.push((Field::Pp, node, p));
        }
    }
    for k in 0..=2 * nzf {
        for j in 0..m2 {
            for i in 0..m2 {
                let node = q2_node(n, i, j, k);
                if k == 0 {
                    for c in 0..3 {
                        essential_zeros.push((Field::U, 3 * node + c));
                    }
                } else if i == 2 * n || j == 2 * n {
                    let p = q2_node(n, wrap(i, 2 * n), wrap(j, 2 * n), k);
                    for c in 0..3 {
                        maps[4][3 * node + c] = maps[4][3 * p + c];
                        periodic_map.push((Field::U, 3 * node + c, 3 * p + c));
                    }
                }
            }
        }
    }

    // Top of the Biot region is held at zero.
    for j in 0..=n {
        for i in 0..=n {
            let node = mesh.biot.node_index(i, j, nzb);
            for c in 0..3 {
                essential_zeros.push((Field::Eta, 3 * node + c));
            }
            essential_zeros.push((Field::Pb, node));
        }
    }

    // Interface: η = w e3 and p_b = p_p(s = h/2) nodewise.
    for j in 0..=n {
        for i in 0..=n {
            let node = mesh.biot.node_index(i, j, 0);
            essential_zeros.push((Field::Eta, 3 * node));
            essential_zeros.push((Field::Eta, 3 * node + 1));
            let plate_node = i + (n + 1) * j;
            maps[0][3 * node + 2] = maps[2][4 * plate_node];
            slave_map.push(Slave { field: Field::Eta, raw: 3 * node + 2, master_field: Field::W, master_raw: 4 * plate_node });
            let pp_master = mesh.plate_pressure.node_index(wrap(i, n), wrap(j, n), nsp);
            maps[1][node] = maps[3][pp_master];
            slave_map.push(Slave { field: Field::Pb, raw: node, master_field: Field::Pp, master_raw: pp_master });
        }
    }

    // Stokes pressure: trilinear on the fluid lattice, periodic, unconstrained.
    let nf = mesh.fluid.n_nodes();
    let mut pi_map = vec![usize::MAX; nf];
    let mut pi_representative = Vec::new();
    for node in 0..nf {
        let [i, j, _] = mesh.fluid.node_ijk(node);
        if i < n && j < n {
            pi_map[node] = pi_representative.len();
            pi_representative.push(node);
        }
    }
    for node in 0..nf {
        if pi_map[node] == usize::MAX {
            pi_map[node] = pi_map[mesh.fluid.periodic_partner(node)];
        }
    }

    DofLayout {
        n_plane: n,
        nz_b: nzb,
        nz_f: nzf,
        ns_p: nsp,
        maps,
        blocks,
        n_free: representative.len(),
        representative,
        n_pi: pi_representative.len(),
        pi_map,
        pi_representative,
        periodic_map,
        essential_zeros,
        slave_map,
    }
}

impl DofLayout {
    /// Raw-to-free map of one field.
    pub fn map(&self, f: Field) -> &[Option<usize>] {
        &self.maps[f.block()]
    }

    pub fn block(&self, f: Field) -> Range<usize> {
        self.blocks[f.block()].clone()
    }

    pub fn raw_len(&self, f: Field) -> usize {
        self.maps[f.block()].len()
    }

    /// Which block a free index belongs to.
    pub fn field_of(&self, free: usize) -> Field {
        self.representative[free].0
    }

    pub fn zero_raw<T: Real>(&self) -> RawFields<T> {
        RawFields {
            eta: vec![T::zero(); self.raw_len(Field::Eta)],
            pb: vec![T::zero(); self.raw_len(Field::Pb)],
            w: vec![T::zero(); self.raw_len(Field::W)],
            pp: vec![T::zero(); self.raw_len(Field::Pp)],
            u: vec![T::zero(); self.raw_len(Field::U)],
        }
    }

    /// Free vector to raw field arrays (constrained entries resolved).
    pub fn expand<T: Real>(&self, x: &[T]) -> RawFields<T> {
        assert_eq!(x.len(), self.n_free, "free vector length");
        let mut raw = self.zero_raw();
        for f in Field::ALL {
            for (r, m) in raw.get_mut(f).iter_mut().zip(self.map(f)) {
                if let Some(i) = m {
                    *r = x[*i];
                }
            }
        }
        raw
    }

    /// Raw arrays to a free vector, reading each free DOF from its owner.
    pub fn restrict<T: Real>(&self, raw: &RawFields<T>) -> Vec<T> {
        self.representative.iter().map(|&(f, r)| raw.get(f)[r]).collect()
    }

    pub fn expand_pi<T: Real>(&self, p: &[T]) -> Vec<T> {
        assert_eq!(p.len(), self.n_pi, "pressure vector length");
        self.pi_map.iter().map(|&i| p[i]).collect()
    }

    pub fn restrict_pi<T: Real>(&self, raw: &[T]) -> Vec<T> {
        self.pi_representative.iter().map(|&r| raw[r]).collect()
    }
}
