//! Run configuration: a JSON file merged with command-line overrides.
//!
//! Precedence, highest first: explicit flags, the config file, the
//! `QRELAX_SEED` environment variable (seed only), built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::filtering::{OutcomeMode, SdeConfig, TimeGrid};
use crate::spectrum::{UnitMode, WellModel};

pub const SEED_ENV: &str = "QRELAX_SEED";

/// Short spellings accepted in config files.
const ALIASES: [(&str, &str); 2] = [("N", "truncation"), ("M", "runs")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Expansion factor of the well.
    pub alpha: f64,
    /// Initial level of the unexpanded well.
    pub n: usize,
    pub sigma: f64,
    #[serde(alias = "N")]
    pub truncation: usize,
    /// Ensemble size.
    #[serde(alias = "M")]
    pub runs: usize,
    pub seed: u64,
    pub mass: f64,
    pub width: f64,
    pub unit_mode: UnitMode,
    /// Simulated horizon; defaults to ten relaxation times.
    pub t_end: Option<f64>,
    /// Intervals of the uniform trajectory grid.
    pub steps: usize,
    /// Condition every run on this level instead of sampling it.
    pub outcome: Option<usize>,
    /// Integrator step for the cross-check.
    pub dt: Option<f64>,
    /// Worker threads; 0 = automatic.
    pub threads: usize,
    pub out: PathBuf,
    /// Points of the position grid for densities.
    pub density_points: Option<usize>,
    pub keep_paths: bool,
    pub lambda: f64,
    pub confidence: f64,
    pub tol_energy: f64,
    /// Relative expansion speed of the slowly varying well.
    pub rate: f64,
    /// Start the occupation process in this eigenstate.
    pub eigenstate: Option<usize>,
    /// Paths in the cross-check study.
    pub paths: usize,
    /// Also write posterior columns to trajectory files.
    pub posterior: bool,
    /// Write gnuplot scripts next to the CSV files.
    pub plots: bool,
    pub quick: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 2.5,
            n: 1,
            sigma: 1.0,
            truncation: 50,
            runs: 1000,
            seed: 0,
            mass: 1.0,
            width: 1.0,
            unit_mode: UnitMode::Dimensionless,
            t_end: None,
            steps: 2000,
            outcome: None,
            dt: None,
            threads: 0,
            out: PathBuf::from("qrelax-out"),
            density_points: None,
            keep_paths: false,
            lambda: 10.0,
            confidence: 0.95,
            tol_energy: 1e-3,
            rate: 0.05,
            eigenstate: None,
            paths: 10,
            posterior: false,
            plots: false,
            quick: false,
        }
    }
}

fn invalid(field: &str, constraint: &str) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        constraint: constraint.into(),
    }
}

impl RunConfig {
    /// Merge `file` (if any), `overrides` and the seed environment variable,
    /// then validate.
    pub fn resolve(
        file: Option<&Path>,
        overrides: Map<String, Value>,
        env_seed: Option<&str>,
    ) -> Result<Self> {
        let mut merged = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    invalid("config", &format!("cannot read {}: {e}", path.display()))
                })?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(invalid("config", "top level must be a JSON object")),
                    Err(e) => return Err(invalid("config", &format!("malformed JSON: {e}"))),
                }
            }
            None => Map::new(),
        };
        for (alias, field) in ALIASES {
            if let Some(v) = merged.remove(alias) {
                if merged.contains_key(field) {
                    return Err(invalid(
                        "config",
                        &format!("both `{alias}` and `{field}` given"),
                    ));
                }
                merged.insert(field.into(), v);
            }
        }
        merged.extend(overrides);
        if !merged.contains_key("seed") {
            if let Some(s) = env_seed {
                let seed: u64 = s.trim().parse().map_err(|_| {
                    invalid(
                        "seed",
                        &format!("{SEED_ENV} must be an unsigned integer, got {s:?}"),
                    )
                })?;
                merged.insert("seed".into(), Value::from(seed));
            }
        }
        let config: RunConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| invalid("config", &e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        if self.n < 1 {
            return Err(invalid("n", "level index starts at 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be finite and > 0"));
        }
        if self.runs < 1 {
            return Err(invalid("runs", "must be >= 1"));
        }
        if self.steps < 1 {
            return Err(invalid("steps", "must be >= 1"));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("t-end", "must be finite and > 0"));
            }
        }
        if let Some(j) = self.outcome {
            if j < 1 || j > self.truncation {
                return Err(invalid("outcome", "must lie in 1..=truncation"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(invalid("dt", "must be > 0"));
            }
        }
        if let Some(p) = self.density_points {
            if p < 2 {
                return Err(invalid("density-points", "must be >= 2"));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", "must be > 0"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", "must lie in (0, 1)"));
        }
        if !(self.tol_energy > 0.0) {
            return Err(invalid("tol-energy", "must be > 0"));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", "must be finite and >= 0"));
        }
        if let Some(k) = self.eigenstate {
            if k < 1 || k > self.truncation {
                return Err(invalid("eigenstate", "must lie in 1..=truncation"));
            }
        }
        if self.paths < 1 {
            return Err(invalid("paths", "must be >= 1"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<WellModel> {
        WellModel::new(
            self.mass,
            self.width,
            self.alpha,
            self.truncation,
            self.unit_mode,
        )
    }

    pub fn outcome_mode(&self) -> OutcomeMode {
        self.outcome
            .map_or(OutcomeMode::Sample, OutcomeMode::Forced)
    }

    /// Volatility in dimensionless units.
    pub fn scaled_sigma(&self) -> Result<f64> {
        Ok(self.model()?.sigma_from_units(self.sigma))
    }

    /// Horizon in dimensionless units, if one was given.
    pub fn scaled_t_end(&self) -> Result<Option<f64>> {
        let model = self.model()?;
        Ok(self.t_end.map(|t| model.time_from_units(t)))
    }

    /// Filtering configuration on a dimensionless grid.
    pub fn sde_config(&self, grid: TimeGrid) -> Result<SdeConfig> {
        SdeConfig::new(self.scaled_sigma()?, grid, self.seed, self.outcome_mode())
    }
}
