//! JSON run configuration with defaults and validation.
//!
//! Every block and key is optional; missing values take the defaults below.
//! Unknown keys are rejected.
//!
//! ```json
//! {
//!   "mesh":   { "n_plane": 4, "nz_b": 4, "nz_f": 4, "ns_p": 2, "h_p": 0.2 },
//!   "params": { "lambda_b": 1.0, "c_b": 1.0, "beta_bjs": 1.0, ... },
//!   "run":    { "dt": 0.01, "steps": 100, "nonlinear": false, "picard_tol": 1e-10 },
//!   "ic":     { "kind": "random", "seed": 0, "amplitude": 1.0 },
//!   "output": { "dir": "out", "snapshot_stride": 0, "formats": ["csv"] }
//! }
//! ```

use crate::forms::MaterialParams;
use crate::initial::InitialCondition;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config file {path} could not be read: {message}")]
    Missing { path: PathBuf, message: String },
    #[error("line {line}, column {column}: malformed JSON: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Invalid { key: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n_plane: usize,
    pub nz_b: usize,
    pub nz_f: usize,
    pub ns_p: usize,
    pub h_p: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_plane: 4, nz_b: 4, nz_f: 4, ns_p: 2, h_p: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub steps: usize,
    pub nonlinear: bool,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Relative tolerance of the per-step energy identity.
    pub audit_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { dt: 0.01, steps: 100, nonlinear: false, picard_tol: 1e-10, picard_max_iter: 50, audit_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// VTK snapshot every `snapshot_stride` steps; 0 writes the first and last state only.
    pub snapshot_stride: usize,
    /// Any of `csv`, `vtk`.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_stride: 0, formats: vec!["csv".into()] }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mesh: MeshConfig,
    pub params: MaterialParams<f64>,
    pub run: RunConfig,
    pub ic: InitialCondition,
    pub output: OutputConfig,
}

/// 1-based line of the first occurrence of `"key"` in `text`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

impl Config {
    /// Checks the value constraints; `text` is used only to locate keys.
    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let bad = |key: &str, message: String| ConfigError::Invalid { key: key.to_string(), line: line_of(text, key), message };
        for (name, v) in self.params.named() {
            if !(v > 0.0) || !v.is_finite() {
                let why = match name {
                    "c_b" | "c_p" => "storage coefficients c_b, c_p must be > 0",
                    _ => "physical parameters must be positive and finite",
                };
                return Err(bad(name, format!("{why} (got {v})")));
            }
        }
        let m = &self.mesh;
        for (name, v) in [("n_plane", m.n_plane), ("nz_b", m.nz_b), ("nz_f", m.nz_f), ("ns_p", m.ns_p)] {
            if v == 0 {
                return Err(bad(name, "cell counts must be at least 1".into()));
            }
        }
        if !(m.h_p > 0.0) || !m.h_p.is_finite() {
            return Err(bad("h_p", format!("plate thickness must be > 0 (got {})", m.h_p)));
        }
        let r = &self.run;
        if !(r.dt > 0.0) || !r.dt.is_finite() {
            return Err(bad("dt", format!("time step must be > 0 (got {})", r.dt)));
        }
        if r.steps == 0 {
            return Err(bad("steps", "at least one step is required".into()));
        }
        if !(r.picard_tol > 0.0) {
            return Err(bad("picard_tol", format!("tolerance must be > 0 (got {})", r.picard_tol)));
        }
        if !(r.audit_tol > 0.0) {
            return Err(bad("audit_tol", format!("tolerance must be > 0 (got {})", r.audit_tol)));
        }
        if r.picard_max_iter == 0 {
            return Err(bad("picard_max_iter", "at least one iteration is required".into()));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "vtk" {
                return Err(bad("formats", format!("unsupported format `{f}` (expected csv or vtk)")));
            }
        }
        match self.ic {
            InitialCondition::Random { amplitude, .. } | InitialCondition::Fourier { amplitude, .. } if !amplitude.is_finite() => {
                Err(bad("amplitude", "amplitude must be finite".into()))
            }
            InitialCondition::Fourier { wavenumber, .. } if wavenumber.fract() != 0.0 || wavenumber < 1.0 => {
                Err(bad("wavenumber", format!("a positive integer is required for periodicity (got {wavenumber})")))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        if let Some(rest) = msg.strip_prefix("unknown field `") {
            let key = rest.split('`').next().unwrap_or_default().to_string();
            ConfigError::UnknownKey { key, line: e.line() }
        } else if e.is_data() {
            // type errors carry no key name; report the position
            ConfigError::Invalid { key: "<value>".into(), line: e.line(), message: msg }
        } else {
            ConfigError::Syntax { line: e.line(), column: e.column(), message: msg }
        }
    })?;
    cfg.validate(text)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Missing { path: path.into(), message: e.to_string() })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config_str("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.mesh.h_p, 0.2);
        assert_eq!((c.run.dt, c.run.steps), (0.01, 100));
        assert!(c.params.named().iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn zero_storage_rejected() {
        let text = "{\n  \"params\": {\n    \"c_b\": 0.0\n  }\n}";
        match parse_config_str(text).unwrap_err() {
            ConfigError::Invalid { key, line, message } => {
                assert_eq!((key.as_str(), line), ("c_b", 3));
                assert!(message.contains("c_b, c_p must be > 0"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_and_malformed() {
        let e = parse_config_str("{\n \"run\": {\"dtt\": 1}\n}").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { key: "dtt".into(), line: 2 });
        assert!(matches!(parse_config_str("{\"run\": "), Err(ConfigError::Syntax { .. })));
        assert!(matches!(parse_config(Path::new("/nonexistent/cfg.json")), Err(ConfigError::Missing { .. })));
        assert!(matches!(parse_config_str(r#"{"run": {"dt": -1}}"#), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse_config_str(r#"{"output": {"formats": ["png"]}}"#), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn round_trip() {
        let text = r#"{"mesh": {"n_plane": 2}, "ic": {"kind": "fourier", "amplitude": 0.5, "wavenumber": 2},
                      "params": {"mu_f": 0.3}, "output": {"formats": ["csv", "vtk"]}}"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.params.mu_f, 0.3);
        assert_eq!(parse_config_str(&c.to_json()).unwrap(), c);
    }
}
