//! Layered run configuration: a checked-in defaults file, an optional user
//! config, `--set section.key=value` overrides, and (for replay) the numeric
//! parameter map recorded in a manifest. Everything numeric that an
//! experiment consumes flows back out into its manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    BadOverride(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config i/o error: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
            ConfigError::BadOverride(e) => write!(f, "bad --set override: {e}"),
        }
    }
}

macro_rules! cfg_section {
    ($name:ident { $($(#[$doc:meta])* $field:ident : $ty:ty = $default:expr),+ $(,)? }) => {
        #[derive(Debug, Clone, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$doc])* pub $field: $ty,)+
        }
        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)+ }
            }
        }
    };
}

cfg_section!(ModelCfg {
    /// Path to a model text file; empty string selects the built-in default
    /// model.
    file: String = String::new(),
});

cfg_section!(DiagnoseCfg {
    points_a: u64 = 40,
    points_b: u64 = 12,
    points_c: u64 = 12,
    bracket_depth: u64 = 3,
});

cfg_section!(LyapunovCfg {
    seeds: u64 = 8,
    t: f64 = 500.0,
    h: f64 = 1e-3,
    renorm: f64 = 1.0,
    /// Gate: pooled lambda_1 must exceed this many standard errors.
    gate_sigma: f64 = 3.0,
    /// Gate: |lambda_1 + lambda_2| below this (volume preservation).
    sum_tol: f64 = 0.05,
});

cfg_section!(CltCfg {
    t: f64 = 100.0,
    count: u64 = 2000,
    h: f64 = 1e-2,
    /// Initial segment endpoints.
    ax: f64 = 0.2, ay: f64 = 0.4, bx: f64 = 0.7, by: f64 = 0.55,
    skew_tol: f64 = 0.15,
    kurt_tol: f64 = 0.3,
    /// Gate: relative covariance change between T and 2T.
    cov_tol: f64 = 0.15,
});

cfg_section!(ShapeCfg {
    t_max: f64 = 40.0,
    n_boundary: u64 = 256,
    snapshots: u64 = 5,
    h: f64 = 1e-2,
    cx: f64 = 0.5, cy: f64 = 0.5, radius: f64 = 0.05,
});

cfg_section!(HyptimesCfg {
    trials: u64 = 100,
    e_threshold: f64 = 10.0,
    t_max: f64 = 200.0,
    r: f64 = 0.05,
    lambda1p: f64 = 0.05,
    n0: f64 = 1.0,
    /// Gate: fraction of trials that must find a hyperbolic time.
    found_frac: f64 = 0.95,
    /// Gate: minimum R^2 of the log-survival tail fit.
    r2_min: f64 = 0.9,
});

cfg_section!(PartitionCfg {
    /// Seed segment scale (1.0 = the standard calibration segment).
    scale: f64 = 0.4,
    eps_cover: f64 = 1e-3,
    coverage_min: f64 = 0.999,
    r: f64 = 0.05,
    lambda1p: f64 = 0.05,
});

cfg_section!(CantorCfg {
    depth: u64 = 4,
    theta_cut: f64 = 0.3,
    /// Branch walks for the mass-distribution dimension estimate.
    branches: u64 = 60,
    /// Node partitions may be looser than standalone partitions: uncovered
    /// material renormalizes out of the measure.
    eps_cover: f64 = 0.02,
    ex: f64 = 1.0, ey: f64 = 0.0,
    r2_min: f64 = 0.9,
});

cfg_section!(EscapeCfg {
    depth: u64 = 4,
    theta_cut: f64 = 0.3,
    samples: u64 = 100,
    t_horizon: f64 = 60.0,
    eps_cover: f64 = 0.02,
    ex: f64 = 1.0, ey: f64 = 0.0,
    /// Gate (only when theta_cut > 0): fraction of samples with positive
    /// late-window drift.
    positive_frac: f64 = 0.9,
});

cfg_section!(ModelExampleCfg {
    depth: u64 = 14,
    /// Dimension check runs at these three cut fractions.
    eps_a: f64 = 0.1,
    eps_b: f64 = 0.3,
    eps_c: f64 = 0.5,
    dim_tol: f64 = 0.05,
    drift_eps: f64 = 0.2,
    drift_tau: f64 = 1.0,
    drift_n: u64 = 2000,
    drift_count: u64 = 500,
    drift_tol: f64 = 0.1,
});

cfg_section!(LdCfg {
    replicas: u64 = 4000,
    n_max: u64 = 400,
    eps: f64 = 0.15,
    walk_bias: f64 = 0.25,
    walk_replicas: u64 = 8,
    walk_steps: u64 = 40000,
    r2_min: f64 = 0.9,
});

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelCfg,
    pub diagnose: DiagnoseCfg,
    pub lyapunov: LyapunovCfg,
    pub clt: CltCfg,
    pub shape: ShapeCfg,
    pub hyptimes: HyptimesCfg,
    pub partition: PartitionCfg,
    pub cantor: CantorCfg,
    pub escape: EscapeCfg,
    pub model_example: ModelExampleCfg,
    pub ld: LdCfg,
}

impl Config {
    /// Load from an optional TOML file, then apply `--set` overrides, then
    /// (for replay) a manifest's numeric parameter map.
    pub fn load(
        path: Option<&std::path::Path>,
        overrides: &[String],
        params: Option<&BTreeMap<String, f64>>,
    ) -> Result<Config, ConfigError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(ConfigError::Io)?;
                text.parse().map_err(|e: toml::de::Error| {
                    ConfigError::Parse(format!("{}: {e}", p.display()))
                })?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(format!("{ov}: expected key=value")))?;
            // Wrap the raw value in a one-entry document so scalars, strings,
            // and arrays all parse with TOML syntax.
            let doc: toml::Table = format!("v = {raw}")
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::BadOverride(format!("{ov}: {e}")))?;
            let value = doc.get("v").cloned().unwrap();
            set_path(&mut table, key, value)
                .map_err(|e| ConfigError::BadOverride(format!("{ov}: {e}")))?;
        }
        if let Some(params) = params {
            for (key, &v) in params {
                // Integer-valued parameters round-trip through f64 exactly in
                // their useful range; the typed deserialize below restores
                // them.
                let val = if v.fract() == 0.0 && v.abs() < 9e15 {
                    toml::Value::Integer(v as i64)
                } else {
                    toml::Value::Float(v)
                };
                set_path(&mut table, key, val)
                    .map_err(|e| ConfigError::Parse(format!("manifest param {key}: {e}")))?;
            }
        }
        Config::deserialize(table).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut cur = table;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty path component".into());
    }
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("{part} is not a section"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
