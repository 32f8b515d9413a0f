//! Energy trace CSV: one row per step, 17 significant digits.

use super::{IoError, ParseError};
use crate::evolution::EnergyReport;
use crate::scalar::Real;
use std::fmt::Write as _;
use std::path::Path;

pub const ENERGY_HEADER: &str = "t,E,E_eta,E_zeta,E_pb,E_w,E_v,E_pp,E_u,D_diss,J,identity_residual";

/// One parsed row; `pi` is present for nonlinear runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub e: f64,
    pub blocks: [f64; 7],
    pub d_diss: f64,
    pub j: f64,
    pub identity_residual: f64,
    pub pi: Option<f64>,
}

/// Renders the trace. When every report carries a potential a trailing `Pi`
/// column is added.
pub fn energy_csv_string<T: Real>(reports: &[EnergyReport<T>]) -> String {
    let with_pi = !reports.is_empty() && reports.iter().all(|r| r.potential.is_some());
    let mut out = String::from(ENERGY_HEADER);
    if with_pi {
        out.push_str(",Pi");
    }
    out.push('\n');
    for r in reports {
        let f = |x: T| x.to_f64_lossy();
        let mut cols = vec![f(r.t), f(r.e)];
        cols.extend(r.blocks.as_array().iter().map(|&b| f(b)));
        cols.extend([f(r.d_diss), f(r.j), f(r.identity_residual)]);
        if with_pi {
            cols.push(f(r.potential.unwrap()));
        }
        for (k, c) in cols.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{c:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_energy_csv<T: Real>(reports: &[EnergyReport<T>], path: &Path) -> Result<(), IoError> {
    std::fs::write(path, energy_csv_string(reports)).map_err(IoError::at(path))
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRow>, ParseError> {
    let text = std::fs::read_to_string(path).map_err(IoError::at(path))?;
    let err = |line: usize, message: String| ParseError::Format { path: path.into(), line, message };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let with_pi = match header {
        h if h == ENERGY_HEADER => false,
        h if h.strip_suffix(",Pi") == Some(ENERGY_HEADER) => true,
        h => return Err(err(1, format!("unexpected header `{h}`"))),
    };
    let ncol = if with_pi { 13 } else { 12 };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| err(i + 2, format!("`{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != ncol {
            return Err(err(i + 2, format!("expected {ncol} columns, found {}", vals.len())));
        }
        rows.push(EnergyRow {
            t: vals[0],
            e: vals[1],
            blocks: vals[2..9].try_into().unwrap(),
            d_diss: vals[9],
            j: vals[10],
            identity_residual: vals[11],
            pi: with_pi.then(|| vals[12]),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{simulate, System};
    use crate::forms::MaterialParams;
    use crate::initial::random_state;
    use crate::mesh::build_mesh;

    #[test]
    fn zero_trajectory_rows() {
        let mut sys = System::new(build_mesh(1, 1, 1, 1, 0.2).unwrap(), MaterialParams::default(), false).unwrap();
        let z = crate::evolution::StateVector::zeros(&sys.layout);
        let traj = simulate(&mut sys, z, 0.1, 3, None);
        let s = energy_csv_string(&traj.reports);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], ENERGY_HEADER);
        for l in &lines[1..] {
            assert!(l.split(',').skip(1).all(|c| c.parse::<f64>().unwrap() == 0.0));
        }
    }

    #[test]
    fn round_trip_and_block_sum() {
        let mut sys = System::new(build_mesh(2, 2, 2, 1, 0.2).unwrap(), MaterialParams::default(), false).unwrap();
        let y = random_state(&sys, 4, 1.0).unwrap();
        let traj = simulate(&mut sys, y, 0.01, 4, None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_energy_csv(&traj.reports, &p).unwrap();
        let rows = read_energy_csv(&p).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, rep) in rows.iter().zip(&traj.reports) {
            assert_eq!(row.e, rep.e);
            assert_eq!(row.t, rep.t);
            assert!((row.blocks.iter().sum::<f64>() - row.e).abs() <= 1e-12 * row.e.max(1.0));
            assert_eq!(row.pi, None);
        }
        std::fs::write(&p, "t,E\n").unwrap();
        assert!(read_energy_csv(&p).is_err());
    }
}
