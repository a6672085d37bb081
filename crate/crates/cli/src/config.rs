//! Flat key-value run configuration. Values come from an optional TOML file,
//! then the `FREEFIELD_OUT` environment variable (output directory only),
//! then command-line overrides.

use std::path::{Path, PathBuf};

use freefield::acceptance::AcceptanceConfig;
use freefield::lattice::{Lattice, LatticeSpec};
use freefield::observables::Truncation;
use freefield::theory::FreeField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::suites;

pub const OUT_ENV: &str = "FREEFIELD_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatticeChoice {
    #[default]
    Time1d,
    Mink2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Lattice used by `dump`; the suites run on both lattices.
    pub lattice: LatticeChoice,
    pub time1d_n_time: usize,
    pub time1d_dt: f64,
    pub time1d_mass: f64,
    pub mink2d_n_time: usize,
    pub mink2d_n_space: usize,
    pub mink2d_dt: f64,
    pub mink2d_dx: f64,
    pub mink2d_mass: f64,
    pub d_max: usize,
    pub a_max: usize,
    pub h_max: usize,
    pub residual_tol: f64,
    pub rank_tol: f64,
    pub suites: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
    /// Dump targets written after `verify`, same syntax as `dump --what`.
    pub dump: Vec<String>,
    /// Highest total degree attempted by cohomology dumps.
    pub cohomology_degree: usize,
    pub corrupt_kernel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AcceptanceConfig::default();
        Self {
            lattice: LatticeChoice::Time1d,
            time1d_n_time: a.time1d.n_time,
            time1d_dt: a.time1d.dt,
            time1d_mass: a.time1d.mass,
            mink2d_n_time: a.mink2d.n_time,
            mink2d_n_space: a.mink2d.n_space,
            mink2d_dt: a.mink2d.dt,
            mink2d_dx: a.mink2d.dx,
            mink2d_mass: a.mink2d.mass,
            d_max: a.truncation.d_max,
            a_max: a.truncation.a_max,
            h_max: a.truncation.h_max,
            residual_tol: a.residual_tol,
            rank_tol: a.rank_tol,
            suites: vec!["all".to_string()],
            seed: a.seed,
            out: PathBuf::from("reports"),
            dump: Vec::new(),
            cohomology_degree: 2,
            corrupt_kernel: false,
        }
    }
}

impl RunConfig {
    pub fn time1d(&self) -> LatticeSpec {
        LatticeSpec::time1d(self.time1d_n_time, self.time1d_dt, self.time1d_mass)
    }

    pub fn mink2d(&self) -> LatticeSpec {
        LatticeSpec::minkowski2d(
            self.mink2d_n_time,
            self.mink2d_n_space,
            self.mink2d_dt,
            self.mink2d_dx,
            self.mink2d_mass,
        )
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            d_max: self.d_max,
            a_max: self.a_max,
            h_max: self.h_max,
        }
    }

    pub fn selected_spec(&self) -> LatticeSpec {
        match self.lattice {
            LatticeChoice::Time1d => self.time1d(),
            LatticeChoice::Mink2d => self.mink2d(),
        }
    }

    pub fn theory(&self) -> freefield::Result<FreeField> {
        FreeField::new(self.selected_spec(), self.truncation())
    }

    pub fn acceptance(&self) -> AcceptanceConfig {
        AcceptanceConfig {
            time1d: self.time1d(),
            mink2d: self.mink2d(),
            truncation: self.truncation(),
            seed: self.seed,
            residual_tol: self.residual_tol,
            rank_tol: self.rank_tol,
            corrupt_kernel: self.corrupt_kernel,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("time1d_dt", self.time1d_dt),
            ("mink2d_dt", self.mink2d_dt),
            ("mink2d_dx", self.mink2d_dx),
            ("residual_tol", self.residual_tol),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [("time1d_mass", self.time1d_mass), ("mink2d_mass", self.mink2d_mass)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        if self.suites.is_empty() {
            return Err(invalid("suites", "no suite selected"));
        }
        for s in &self.suites {
            if suites::criteria_for(s).is_none() {
                return Err(invalid("suites", format!("unknown suite `{s}`")));
            }
        }
        Lattice::new(self.time1d()).map_err(|e| invalid("time1d", e.to_string()))?;
        Lattice::new(self.mink2d()).map_err(|e| invalid("mink2d", e.to_string()))?;
        Ok(())
    }
}

/// Parses `key=value` into a TOML value; bare words become strings.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Builds a validated config from file text, the output-directory
/// environment override and `key=value` overrides, in that precedence order.
pub fn parse_config_str(text: &str, env_out: Option<&str>, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if let Some(out) = env_out {
        table.insert("out".into(), toml::Value::String(out.to_string()));
    }
    for (k, v) in overrides {
        let value = match k.as_str() {
            "suites" | "dump" => toml::Value::Array(v.split(',').map(|s| toml::Value::String(s.trim().to_string())).collect()),
            "out" | "lattice" => toml::Value::String(v.clone()),
            _ => override_value(v),
        };
        table.insert(k.clone(), value);
    }
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
            path: p.to_path_buf(),
            message: e.to_string(),
        })?,
        None => String::new(),
    };
    let env_out = std::env::var(OUT_ENV).ok();
    parse_config_str(&text, env_out.as_deref(), overrides)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config is always representable as TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_config_is_default() {
        let cfg = parse_config_str("", None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.time1d(), LatticeSpec::time1d(100, 0.05, 1.0));
        assert_eq!(cfg.truncation(), Truncation::default());
        assert_eq!(cfg.residual_tol, 1e-9);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let cfg = parse_config_str("seed = 5\ntime1d_n_time = 40", None, &[kv("seed", "9")]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.time1d_n_time, 40);
    }

    #[test]
    fn env_out_sits_between_file_and_flag() {
        let cfg = parse_config_str("out = \"a\"", Some("b"), &[]).unwrap();
        assert_eq!(cfg.out, PathBuf::from("b"));
        let cfg = parse_config_str("out = \"a\"", Some("b"), &[kv("out", "c")]).unwrap();
        assert_eq!(cfg.out, PathBuf::from("c"));
    }

    #[test]
    fn negative_dt_names_field() {
        match parse_config_str("time1d_dt = -0.1", None, &[]) {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "time1d_dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unstable_lattice_rejected() {
        let err = parse_config_str("mink2d_dx = 0.1", None, &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "mink2d"), "{err}");
    }

    #[test]
    fn unknown_suite_and_key() {
        assert!(matches!(
            parse_config_str("", None, &[kv("suites", "propagators,bogus")]),
            Err(ConfigError::Validation { .. })
        ));
        assert!(matches!(parse_config_str("colour = 1", None, &[]), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config_str("seed = ", None, &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn zero_tolerance_rejected() {
        assert!(parse_config_str("rank_tol = 0.0", None, &[]).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = parse_config_str(
            "lattice = \"mink2d\"\nmink2d_dt = 0.0731\nsuites = [\"bv\", \"net\"]\ndump = [\"kernel:causal\"]",
            None,
            &[],
        )
        .unwrap();
        let back = parse_config_str(&to_toml(&cfg), None, &[]).unwrap();
        assert_eq!(cfg, back);
    }
}
