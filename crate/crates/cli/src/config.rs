//! Run configuration: a flat TOML table.
//!
//! A [`PartialConfig`] is what a file or the command line supplies; every
//! field is optional. [`PartialConfig::resolve`] fills defaults (some depend
//! on the command or system) and validates, producing a [`RunConfig`] whose
//! serialization is canonical: fixed key order, every key present.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rough_symplectic::integrators::{Scheme, SolverConfig, StageStrategy, SCHEME_NAMES};

use crate::CliError;

pub const COMMANDS: [&str; 5] = ["sample-path", "integrate", "convergence", "area", "invariant"];

/// Keys a manifest adds on top of the config. Ignored when a manifest is
/// loaded as a config, except that `method2_root` is checked.
const MANIFEST_KEYS: [&str; 4] = ["method2_root", "config_hash", "version", "outputs"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub command: Option<String>,
    pub system: Option<String>,
    pub schemes: Option<Vec<String>>,
    pub hurst: Option<f64>,
    pub epsilon: Option<f64>,
    pub dims: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    /// Converted to `steps` during resolution; never serialized.
    #[serde(skip)]
    pub h: Option<f64>,
    pub z: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub coarsest_level: Option<u32>,
    pub finest_level: Option<u32>,
    pub reference: Option<String>,
    pub reference_level: Option<u32>,
    pub reference_scheme: Option<String>,
    pub zero_noise: Option<bool>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub strategy: Option<String>,
    pub snapshots: Option<Vec<f64>>,
    pub jacobian: Option<bool>,
    pub strict_range: Option<bool>,
    pub workers: Option<usize>,
}

/// Fully resolved configuration. Field order is the canonical key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub system: String,
    pub schemes: Vec<String>,
    pub hurst: f64,
    pub epsilon: f64,
    pub dims: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    pub z: Vec<f64>,
    pub seed: u64,
    pub paths: usize,
    pub coarsest_level: u32,
    pub finest_level: u32,
    /// `"exact"` or `"fine"`.
    pub reference: String,
    pub reference_level: u32,
    pub reference_scheme: String,
    pub zero_noise: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub strategy: String,
    pub snapshots: Vec<f64>,
    pub jacobian: bool,
    pub strict_range: bool,
    /// Not part of the hash: outputs do not depend on it.
    pub workers: usize,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl PartialConfig {
    /// Parses a config file or a manifest.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| config_error(format!("invalid config: {e}")))?;
        if let Some(root) = table.get("method2_root") {
            let root = root
                .as_float()
                .ok_or_else(|| config_error("method2_root must be a float"))?;
            let expected = rough_symplectic::integrators::method_two_root();
            if root.to_bits() != expected.to_bits() {
                return Err(config_error(format!(
                    "manifest records method2_root = {root}, this build computes {expected}"
                )));
            }
        }
        for key in MANIFEST_KEYS {
            table.remove(key);
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("invalid config: {}", e.message())))
    }

    /// Fields set in `over` take precedence.
    pub fn overlay(self, over: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($($f:ident),*) => { PartialConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            command,
            system,
            schemes,
            hurst,
            epsilon,
            dims,
            horizon,
            steps,
            h,
            z,
            seed,
            paths,
            coarsest_level,
            finest_level,
            reference,
            reference_level,
            reference_scheme,
            zero_noise,
            tolerance,
            max_iterations,
            strategy,
            snapshots,
            jacobian,
            strict_range,
            workers
        )
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let command = self.command.ok_or_else(|| config_error("no command given"))?;
        if !COMMANDS.contains(&command.as_str()) {
            return Err(config_error(format!("unknown command `{command}`")));
        }
        let system = self.system.unwrap_or_else(|| "kubo".into());
        let default_z = match system.as_str() {
            "kubo" => vec![1.0, 1.0],
            "trig" => vec![1.0, 2.0],
            other => return Err(config_error(format!("unknown system `{other}`"))),
        };
        let has_exact = system == "kubo";
        let horizon = self.horizon.unwrap_or(1.0);
        let steps = match (self.h, self.steps) {
            (Some(h), _) => steps_from_h(horizon, h)?,
            (None, Some(n)) => n,
            (None, None) => 1 << 10,
        };
        let paths = self.paths.unwrap_or(if command == "convergence" { 10 } else { 1 });
        let snapshots = self
            .snapshots
            .unwrap_or_else(|| vec![horizon / 20.0, horizon / 5.0, horizon]);
        let cfg = RunConfig {
            schemes: self.schemes.unwrap_or_else(|| vec!["midpoint".into()]),
            hurst: self.hurst.unwrap_or(0.4),
            epsilon: self.epsilon.unwrap_or(1.0),
            dims: self.dims.unwrap_or(if system == "kubo" { 3 } else { 2 }),
            horizon,
            steps,
            z: self.z.unwrap_or(default_z),
            seed: self.seed.unwrap_or(2024),
            paths,
            coarsest_level: self.coarsest_level.unwrap_or(4),
            finest_level: self.finest_level.unwrap_or(10),
            reference: self
                .reference
                .unwrap_or_else(|| if has_exact { "exact" } else { "fine" }.into()),
            reference_level: self.reference_level.unwrap_or(13),
            reference_scheme: self.reference_scheme.unwrap_or_else(|| "method-1".into()),
            zero_noise: self.zero_noise.unwrap_or(false),
            tolerance: self.tolerance.unwrap_or(SolverConfig::default().tolerance),
            max_iterations: self.max_iterations.unwrap_or(SolverConfig::default().max_iterations),
            strategy: self.strategy.unwrap_or_else(|| StageStrategy::default().name().into()),
            snapshots,
            jacobian: self.jacobian.unwrap_or(false),
            strict_range: self.strict_range.unwrap_or(false),
            workers: self.workers.unwrap_or(0),
            command,
            system,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn steps_from_h(horizon: f64, h: f64) -> Result<usize, CliError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(config_error(format!("h must be positive, got {h}")));
    }
    let n = (horizon / h).round();
    if n < 1.0 || ((n * h - horizon) / horizon).abs() > 1e-9 {
        return Err(config_error(format!(
            "T = {horizon} is not a whole number of steps of h = {h}"
        )));
    }
    Ok(n as usize)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let hurst_ok = if self.strict_range {
            self.hurst > 0.25 && self.hurst <= 0.5
        } else {
            self.hurst > 0.0 && self.hurst < 1.0
        };
        if !hurst_ok {
            let range = if self.strict_range { "(1/4, 1/2]" } else { "(0, 1)" };
            return Err(config_error(format!("hurst = {} is outside {range}", self.hurst)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config_error(format!("T must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 || self.paths == 0 || self.dims == 0 {
            return Err(config_error("steps, paths and dims must be at least 1"));
        }
        if self.z.len() != 2 {
            return Err(config_error("z must have two components"));
        }
        if self.schemes.is_empty() {
            return Err(config_error("at least one scheme is required"));
        }
        if self.system == "trig" && self.dims != 2 {
            return Err(config_error("the trig system has exactly two noise channels"));
        }
        for s in self.schemes.iter().chain([&self.reference_scheme]) {
            if !SCHEME_NAMES.contains(&s.as_str()) {
                return Err(config_error(format!(
                    "unknown scheme `{s}`; known: {}",
                    SCHEME_NAMES.join(", ")
                )));
            }
        }
        if !["exact", "fine"].contains(&self.reference.as_str()) {
            return Err(config_error(format!(
                "reference must be `exact` or `fine`, got `{}`",
                self.reference
            )));
        }
        if self.coarsest_level > self.finest_level || self.finest_level > 24 {
            return Err(config_error("levels must satisfy coarsest_level <= finest_level <= 24"));
        }
        if self.reference == "fine" && self.reference_level < self.finest_level {
            return Err(config_error("reference_level must be at least finest_level"));
        }
        if self.reference_level > 24 {
            return Err(config_error("reference_level must be at most 24"));
        }
        if self.command == "invariant" && self.system != "kubo" {
            return Err(config_error("invariant drift is defined for the kubo system"));
        }
        self.solver()?;
        Ok(())
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let strategy = StageStrategy::from_name(&self.strategy).map_err(|e| config_error(e.to_string()))?;
        let cfg = SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            strategy,
        };
        cfg.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(cfg)
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        let solver = self.solver()?;
        self.schemes
            .iter()
            .map(|s| Scheme::from_name(s, solver).map_err(|e| config_error(e.to_string())))
            .collect()
    }

    /// Canonical TOML: every key, fixed order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the canonical form, with
    /// `workers` zeroed.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            workers: 0,
            ..self.clone()
        }
        .to_toml();
        hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string()
    }
}
