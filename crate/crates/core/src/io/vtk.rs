//! Legacy ASCII VTK snapshots, one unstructured grid per layer, and a reader
//! for the subset written here.

use super::{IoError, ParseError};
use crate::dof::q2_node;
use crate::evolution::{StateVector, System};
use crate::scalar::Real;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const VTK_QUAD: u8 = 9;
const VTK_HEXAHEDRON: u8 = 12;

/// Point data arrays keyed by name: `(components, values)`.
pub type PointData = BTreeMap<String, (usize, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct VtkGrid {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_data: PointData,
}

impl VtkGrid {
    fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", self.title).unwrap();
        writeln!(s, "POINTS {} double", self.points.len()).unwrap();
        for p in &self.points {
            writeln!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]).unwrap();
        }
        let size: usize = self.cells.iter().map(|c| c.len() + 1).sum();
        writeln!(s, "CELLS {} {}", self.cells.len(), size).unwrap();
        for c in &self.cells {
            let ids: Vec<String> = c.iter().map(|i| i.to_string()).collect();
            writeln!(s, "{} {}", c.len(), ids.join(" ")).unwrap();
        }
        writeln!(s, "CELL_TYPES {}", self.cell_types.len()).unwrap();
        for t in &self.cell_types {
            writeln!(s, "{t}").unwrap();
        }
        writeln!(s, "POINT_DATA {}", self.points.len()).unwrap();
        for (name, (ncomp, vals)) in &self.point_data {
            if *ncomp == 3 {
                writeln!(s, "VECTORS {name} double").unwrap();
            } else {
                writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            }
            for chunk in vals.chunks(*ncomp) {
                let row: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s
    }
}

/// VTK vertex order of a hexahedron from lattice corners `a = i + 2j + 4k`.
fn hex_order(c: [usize; 8]) -> Vec<usize> {
    vec![c[0], c[1], c[3], c[2], c[4], c[5], c[7], c[6]]
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Builds the four layer grids of a state.
pub fn snapshot_grids<T: Real>(sys: &System<T>, state: &StateVector<T>) -> Vec<(&'static str, VtkGrid)> {
    let mesh = &sys.mesh;
    let disp = sys.layout.expand(&state.disp);
    let vel = sys.layout.expand(&state.vel);
    let pi = sys.layout.expand_pi(&state.pi);
    let p3 = |p: &[T; 3]| [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()];
    let mut out = Vec::new();

    let b = &mesh.biot;
    let mut pd = PointData::new();
    pd.insert("eta".into(), (3, f64s(&disp.eta)));
    pd.insert("zeta".into(), (3, f64s(&vel.eta)));
    pd.insert("p_b".into(), (1, f64s(&vel.pb)));
    out.push((
        "biot",
        VtkGrid {
            title: format!("biot t={:.16e}", state.t.to_f64_lossy()),
            points: b.node_coords.iter().map(p3).collect(),
            cells: b.cell_nodes.iter().map(|&c| hex_order(c)).collect(),
            cell_types: vec![VTK_HEXAHEDRON; b.n_cells()],
            point_data: pd,
        },
    ));

    // Stokes velocity at the cell vertices of the triquadratic lattice
    let f = &mesh.fluid;
    let mut u = Vec::with_capacity(3 * f.n_nodes());
    for node in 0..f.n_nodes() {
        let [i, j, k] = f.node_ijk(node);
        let q = q2_node(mesh.n_plane, 2 * i, 2 * j, 2 * k);
        u.extend(f64s(&vel.u[3 * q..3 * q + 3]));
    }
    let mut pd = PointData::new();
    pd.insert("u".into(), (3, u));
    pd.insert("pi".into(), (1, f64s(&pi)));
    out.push((
        "fluid",
        VtkGrid {
            title: format!("fluid t={:.16e}", state.t.to_f64_lossy()),
            points: f.node_coords.iter().map(p3).collect(),
            cells: f.cell_nodes.iter().map(|&c| hex_order(c)).collect(),
            cell_types: vec![VTK_HEXAHEDRON; f.n_cells()],
            point_data: pd,
        },
    ));

    let pl = &mesh.plate;
    let mut pd = PointData::new();
    pd.insert("w".into(), (1, disp.w.iter().step_by(4).map(|x| x.to_f64_lossy()).collect()));
    pd.insert("v".into(), (1, vel.w.iter().step_by(4).map(|x| x.to_f64_lossy()).collect()));
    out.push((
        "plate",
        VtkGrid {
            title: format!("plate t={:.16e}", state.t.to_f64_lossy()),
            points: pl.node_coords.iter().map(|p| [p[0].to_f64_lossy(), p[1].to_f64_lossy(), 0.0]).collect(),
            cells: pl.cell_nodes.iter().map(|c| vec![c[0], c[1], c[3], c[2]]).collect(),
            cell_types: vec![VTK_QUAD; pl.n_cells()],
            point_data: pd,
        },
    ));

    // (x1, x2, s): the slab is drawn across the midsurface between the layers
    let pp = &mesh.plate_pressure;
    let mut pd = PointData::new();
    pd.insert("p_p".into(), (1, f64s(&vel.pp)));
    out.push((
        "plate_pressure",
        VtkGrid {
            title: format!("plate_pressure t={:.16e}", state.t.to_f64_lossy()),
            points: pp.node_coords.iter().map(p3).collect(),
            cells: pp.cell_nodes.iter().map(|&c| hex_order(c)).collect(),
            cell_types: vec![VTK_HEXAHEDRON; pp.n_cells()],
            point_data: pd,
        },
    ));
    out
}

/// Writes `{stem}_{layer}.vtk` into `dir` and returns the paths.
pub fn write_vtk_snapshot<T: Real>(sys: &System<T>, state: &StateVector<T>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, IoError> {
    let mut paths = Vec::new();
    for (layer, grid) in snapshot_grids(sys, state) {
        let p = dir.join(format!("{stem}_{layer}.vtk"));
        std::fs::write(&p, grid.render()).map_err(IoError::at(&p))?;
        paths.push(p);
    }
    Ok(paths)
}

/// Reads a file written by [`write_vtk_snapshot`].
pub fn read_vtk(path: &Path) -> Result<VtkGrid, ParseError> {
    let text = std::fs::read_to_string(path).map_err(IoError::at(path))?;
    let lines: Vec<&str> = text.lines().collect();
    let err = |line: usize, message: String| ParseError::Format { path: path.into(), line: line + 1, message };
    if lines.len() < 4 || !lines[0].starts_with("# vtk DataFile") || lines[2] != "ASCII" {
        return Err(err(0, "not a legacy ASCII VTK file".into()));
    }
    let title = lines[1].to_string();
    let nums = |l: usize, n: usize| -> Result<Vec<f64>, ParseError> {
        let v: Vec<f64> = lines
            .get(l)
            .ok_or_else(|| err(l, "unexpected end of file".into()))?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| err(l, format!("`{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if n > 0 && v.len() != n {
            return Err(err(l, format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    };
    let count = |l: usize, key: &str| -> Result<Vec<usize>, ParseError> {
        let line = lines.get(l).ok_or_else(|| err(l, format!("missing {key}")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(err(l, format!("expected {key}, found `{line}`")));
        }
        it.take(2).filter_map(|s| s.parse::<usize>().ok()).map(Ok).collect()
    };
    let mut l = 4;
    let np = count(l, "POINTS")?[0];
    let mut points = Vec::with_capacity(np);
    for k in 0..np {
        let v = nums(l + 1 + k, 3)?;
        points.push([v[0], v[1], v[2]]);
    }
    l += np + 1;
    let nc = count(l, "CELLS")?[0];
    let mut cells = Vec::with_capacity(nc);
    for k in 0..nc {
        let v = nums(l + 1 + k, 0)?;
        let ids: Vec<usize> = v[1..].iter().map(|&x| x as usize).collect();
        if ids.len() != v[0] as usize || ids.iter().any(|&i| i >= np) {
            return Err(err(l + 1 + k, "bad cell connectivity".into()));
        }
        cells.push(ids);
    }
    l += nc + 1;
    let nt = count(l, "CELL_TYPES")?[0];
    let cell_types: Vec<u8> = (0..nt).map(|k| nums(l + 1 + k, 1).map(|v| v[0] as u8)).collect::<Result<_, _>>()?;
    l += nt + 1;
    let mut point_data = PointData::new();
    if l < lines.len() {
        count(l, "POINT_DATA")?;
        l += 1;
        while l < lines.len() {
            let head: Vec<&str> = lines[l].split_whitespace().collect();
            let (name, ncomp, skip) = match head.as_slice() {
                ["VECTORS", name, _] => (name.to_string(), 3, 1),
                ["SCALARS", name, _, _] => (name.to_string(), 1, 2),
                _ => return Err(err(l, format!("unexpected `{}`", lines[l]))),
            };
            let mut vals = Vec::with_capacity(ncomp * np);
            for k in 0..np {
                vals.extend(nums(l + skip + k, ncomp)?);
            }
            point_data.insert(name, (ncomp, vals));
            l += skip + np;
        }
    }
    Ok(VtkGrid { title, points, cells, cell_types, point_data })
}
