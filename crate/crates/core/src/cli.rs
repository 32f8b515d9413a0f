//! Command-line entry points.
//!
//! Every subcommand prints one JSON object per check on stdout, writes
//! `summary.json` into the output directory, and exits 0 only if every
//! check passes. Usage errors exit 2; runtime failures exit 1.

use crate::evolution::{constraint_defects, energy_audit, simulate, EvolutionError, System, Trajectory};
use crate::io::config::{parse_config, Config, ConfigError};
use crate::io::csv::write_energy_csv;
use crate::io::summary::{all_pass, write_summary, Check};
use crate::io::vtk::write_vtk_snapshot;
use crate::io::IoError;
use crate::initial::InitialCondition;
use crate::mesh::build_mesh;
use crate::mms::observed_orders;
use crate::verify;
use crate::vonkarman::{lyapunov_series, simulate_nonlinear, VkConfig, VonKarman};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "filtration", version, about = "Coupled Biot / poroelastic plate / Stokes simulator and verification suites")]
struct Cli {
    /// JSON configuration file (defaults apply to missing keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for random initial data and random probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for assembly; 0 runs single-threaded and deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    n_plane: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time integration with the energy audit.
    Simulate {
        /// Include the von Kármán restoring force.
        #[arg(long)]
        nonlinear: bool,
        #[command(flatten)]
        o: Overrides,
    },
    /// Unit-shift resolvent solves with random data; reports ‖y‖/‖F‖.
    Resolvent {
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[command(flatten)]
        o: Overrides,
    },
    /// Inf-sup constants over a refinement sweep.
    Infsup {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        levels: Vec<usize>,
    },
    /// Smallest eigenvalue of the symmetric part of the resolvent operator.
    Coercivity {
        #[command(flatten)]
        o: Overrides,
    },
    /// Manufactured-solution convergence table.
    Mms {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        levels: Vec<usize>,
    },
    /// Bracket, Airy and potential checks.
    VkVerify {
        #[command(flatten)]
        o: Overrides,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] EvolutionError),
    #[error(transparent)]
    Io(#[from] IoError),
}

fn apply(cfg: &mut Config, o: &Overrides) {
    if let Some(dt) = o.dt {
        cfg.run.dt = dt;
    }
    if let Some(s) = o.steps {
        cfg.run.steps = s;
    }
    if let Some(n) = o.n_plane {
        cfg.mesh.n_plane = n;
    }
}

fn build_system(cfg: &Config, parallel: bool) -> Result<System<f64>, CliError> {
    let m = &cfg.mesh;
    let mesh = build_mesh(m.n_plane, m.nz_b, m.nz_f, m.ns_p, m.h_p).map_err(EvolutionError::from)?;
    Ok(System::new(mesh, cfg.params, parallel).map_err(EvolutionError::from)?)
}

fn create_dir(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(IoError::at(dir))
}

fn snapshot_steps(stride: usize, n_states: usize) -> Vec<usize> {
    if stride == 0 {
        vec![0, n_states - 1]
    } else {
        (0..n_states).filter(|k| k % stride == 0 || *k == n_states - 1).collect()
    }
}

fn trajectory_checks(sys: &System<f64>, traj: &Trajectory<f64>, cfg: &Config, nonlinear: bool) -> Vec<Check> {
    let mut checks = Vec::new();
    let done = traj.reports.len();
    checks.push(Check::at_least("steps_completed", done as f64, cfg.run.steps as f64));
    let audit = energy_audit(sys, traj, cfg.run.audit_tol, !nonlinear);
    checks.push(Check::at_most("energy_identity_max_relative", audit.max_relative, cfg.run.audit_tol));
    checks.push(Check::at_most("energy_records_flagged", audit.flagged_states.len() as f64, 0.0));
    if !nonlinear {
        checks.push(Check::at_least("energy_monotone", audit.monotone as u8 as f64, 1.0));
    }
    let (mut slave, mut div) = (0.0f64, 0.0f64);
    for s in &traj.states {
        let (a, b) = constraint_defects(sys, s);
        slave = slave.max(a);
        div = div.max(b);
    }
    checks.push(Check::at_most("slaved_dof_mismatch", slave, 0.0));
    checks.push(Check::at_most("divergence_residual_max", div, 1e-10));
    checks
}

fn run_simulate(cfg: &Config, out: &Path, nonlinear: bool, parallel: bool) -> Result<Vec<Check>, CliError> {
    let mut sys = build_system(cfg, parallel)?;
    let y0 = cfg.ic.build(&sys)?;
    let (traj, extra) = if nonlinear {
        let vcfg = VkConfig { f0: Vec::new(), picard_tol: cfg.run.picard_tol, picard_max_iter: cfg.run.picard_max_iter };
        let vk = VonKarman::new(&sys, vcfg).map_err(EvolutionError::from)?;
        let traj = simulate_nonlinear(&mut sys, &vk, y0, cfg.run.dt, cfg.run.steps);
        let l = lyapunov_series(&sys, &vk, &traj);
        let rise = l.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let sup = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let extra = vec![
            Check::at_most("lyapunov_max_increase", rise, 1e-6 * l[0].max(1.0)),
            Check::at_most("lyapunov_sup_minus_initial", sup - l[0], 1e-3),
        ];
        (traj, extra)
    } else {
        (simulate(&mut sys, y0, cfg.run.dt, cfg.run.steps, None), Vec::new())
    };
    if let Some(e) = &traj.error {
        eprintln!("run stopped early: {e}");
    }
    if cfg.output.wants("csv") {
        write_energy_csv(&traj.reports, &out.join("energy.csv"))?;
    }
    if cfg.output.wants("vtk") {
        for k in snapshot_steps(cfg.output.snapshot_stride, traj.states.len()) {
            write_vtk_snapshot(&sys, &traj.states[k], out, &format!("state_{k:06}"))?;
        }
    }
    let mut checks = trajectory_checks(&sys, &traj, cfg, nonlinear);
    checks.extend(extra);
    Ok(checks)
}

fn execute(cli: &Cli) -> Result<Vec<Check>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = d.clone();
    }
    if let (Some(s), InitialCondition::Random { seed, .. }) = (cli.seed, &mut cfg.ic) {
        *seed = s;
    }
    let seed = cli.seed.unwrap_or(0);
    let parallel = cli.threads > 0;
    let out = cfg.output.dir.clone();
    create_dir(&out)?;
    let checks = match &cli.command {
        Command::Simulate { nonlinear, o } => {
            apply(&mut cfg, o);
            cfg.run.nonlinear |= *nonlinear;
            cfg.validate("")?;
            run_simulate(&cfg, &out, cfg.run.nonlinear, parallel)?
        }
        Command::Resolvent { samples, o } => {
            apply(&mut cfg, o);
            let sys = build_system(&cfg, parallel)?;
            let ratios = verify::resolvent_ratios(&sys, *samples, seed)?;
            println!("# ‖y‖_X/‖F‖_X over {} samples: max {:.6e}", ratios.len(), ratios.iter().cloned().fold(0.0, f64::max));
            verify::resolvent_checks(&ratios)
        }
        Command::Infsup { levels } => {
            let rows = verify::infsup_sweep(levels, &cfg.params, cfg.mesh.h_p)?;
            println!("# n_plane  beta_taylor_hood  beta_equal_order");
            for r in &rows {
                println!("# {:7}  {:16.8e}  {:16.8e}", r.n_plane, r.beta_taylor_hood, r.beta_equal_order);
            }
            verify::infsup_checks(&rows)
        }
        Command::Coercivity { o } => {
            apply(&mut cfg, o);
            verify::coercivity_checks(&build_system(&cfg, parallel)?)?
        }
        Command::Mms { levels } => {
            let lv = verify::mms_sweep(levels, &cfg.params, cfg.mesh.h_p)?;
            let names = lv[0].errors.named().map(|(n, _)| n);
            println!("# n_plane  {}", names.join("  "));
            for l in &lv {
                let e: Vec<String> = l.errors.named().iter().map(|(_, v)| format!("{v:.4e}")).collect();
                println!("# {:7}  {}", l.n_plane, e.join("  "));
            }
            for k in 0..names.len() {
                let o: Vec<String> = observed_orders(&lv, |e| e.named()[k].1).iter().map(|v| format!("{v:.3}")).collect();
                println!("# order {}: {}", names[k], o.join(" "));
            }
            verify::mms_checks(&lv)
        }
        Command::VkVerify { o } => {
            apply(&mut cfg, o);
            verify::vk_checks(&build_system(&cfg, parallel)?, seed)?
        }
    };
    write_summary(&checks, &out.join("summary.json"))?;
    Ok(checks)
}

/// Runs the command line with `argv` (including the program name) and
/// returns the process exit code.
pub fn run_cli<S: AsRef<str>>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    faer::set_global_parallelism(faer::Par::Seq);
    if cli.threads > 0 {
        // a second initialization only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match execute(&cli) {
        Ok(checks) => {
            for c in &checks {
                println!("{}", c.to_json());
            }
            if all_pass(&checks) {
                0
            } else {
                1
            }
        }
        Err(e) => {
            println!("{}", serde_json::json!({ "name": "error", "message": e.to_string(), "pass": false }));
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_cli(&["filtration", "frobnicate"]), 2);
        assert_eq!(run_cli(&["filtration"]), 2);
        assert_eq!(run_cli(&["filtration", "--help"]), 0);
    }

    #[test]
    fn snapshot_selection() {
        assert_eq!(snapshot_steps(0, 5), vec![0, 4]);
        assert_eq!(snapshot_steps(2, 6), vec![0, 2, 4, 5]);
    }
}
