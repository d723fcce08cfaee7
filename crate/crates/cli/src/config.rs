//! Scenario configuration (JSON).

use std::path::{Path, PathBuf};

use omega_pension::preferences::{self, PowerPair};
use omega_pension::quadrature::QuadratureSpec;
use omega_pension::replicate::{PiFormula, Scheme};
use omega_pension::{MarketParams, PreferencePair};
use serde::{Deserialize, Serialize};

/// Marker carried by run manifests; a manifest may be passed wherever a
/// config is expected.
pub const MANIFEST_KIND: &str = "omega-pension-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "MarketParams::baseline")]
    pub market: MarketParams,
    #[serde(default = "default_preferences")]
    pub preferences: PowerPair,
    pub theta: f64,
    pub floor: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Rescale (x₀, c₀) so that x̃₀ sits at this fraction of the feasible
    /// window. Sweeps use the window common to all points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strategy: StrategyOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationOptions>,
    /// (ν, λ, β) triples evaluated in diagnostic mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Probe>,
    /// Output directory; the command line `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_preferences() -> PowerPair {
    PowerPair::new(0.3, 2.2, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Theta,
    Gamma1,
    Gamma2,
    Floor,
    Epsilon,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Theta => "theta",
            SweepParameter::Gamma1 => "gamma1",
            SweepParameter::Gamma2 => "gamma2",
            SweepParameter::Floor => "floor",
            SweepParameter::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyOptions {
    pub formula: PiFormula,
    pub steps: usize,
    /// Keep every n-th step in the CSV.
    pub every: usize,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self { formula: PiFormula::default(), steps: 4000, every: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOptions {
    pub paths: usize,
    pub steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Martingale check times as fractions of the horizon.
    #[serde(default = "default_check_fractions")]
    pub check_fractions: Vec<f64>,
}

fn default_check_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}, column {column}: at `{field}`: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, field: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn pair(&self) -> PreferencePair {
        PreferencePair::Power(self.preferences)
    }

    /// Reads a config, or the config embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::parse(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let parse_err = |e: serde_path_to_error::Error<serde_json::Error>| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                path: path.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        };
        let value: serde_json::Value = {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(parse_err)?
        };
        if value.get("kind").and_then(|k| k.as_str()) == Some(MANIFEST_KIND) {
            let inner = value.get("config").ok_or_else(|| ConfigError::Invalid("manifest has no `config` entry".into()))?;
            let text = serde_json::to_string_pretty(inner).expect("value serializes");
            return Self::parse(&text, path);
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(parse_err)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.market.validate().map_err(|e| ConfigError::Invalid(format!("market: {e}")))?;
        check_point(self).map_err(ConfigError::Invalid)?;
        if self.quadrature.nodes < omega_pension::quadrature::MIN_NODES {
            return invalid(format!(
                "quadrature.nodes = {} is below {}",
                self.quadrature.nodes,
                omega_pension::quadrature::MIN_NODES
            ));
        }
        if let Some(f) = self.rescale {
            if !(f > 0.0 && f < 1.0) {
                return invalid(format!("rescale = {f} must lie in (0, 1)"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return invalid("sweep.values is empty".into());
            }
            for v in &s.values {
                check_point(&self.at(s.parameter, *v))
                    .map_err(|m| ConfigError::Invalid(format!("sweep {} = {v}: {m}", s.parameter.name())))?;
            }
        }
        if self.strategy.steps == 0 || self.strategy.every == 0 {
            return invalid("strategy.steps and strategy.every must be >= 1".into());
        }
        if let Some(sim) = &self.simulation {
            if sim.paths < 2 || sim.steps == 0 {
                return invalid("simulation needs paths >= 2 and steps >= 1".into());
            }
            if sim.check_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                return invalid("simulation.check_fractions must lie in (0, 1)".into());
            }
        }
        for p in &self.probes {
            if !(p.nu >= 0.0 && p.lambda >= 0.0 && p.beta > 0.0)
                || !(p.nu.is_finite() && p.lambda.is_finite() && p.beta.is_finite())
            {
                return invalid(format!("probe {p:?} needs ν ≥ 0, λ ≥ 0, β > 0"));
            }
        }
        Ok(())
    }

    /// This config with one parameter replaced and the sweep removed.
    pub fn at(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        c.sweep = None;
        match parameter {
            SweepParameter::Theta => c.theta = value,
            SweepParameter::Gamma1 => c.preferences.reward_exponent = value,
            SweepParameter::Gamma2 => c.preferences.penalty_exponent = value,
            SweepParameter::Floor => c.floor = value,
            SweepParameter::Epsilon => c.epsilon = value,
        }
        c
    }

    /// Sweep points in order; a config without a sweep is its own single point.
    pub fn points(&self) -> Vec<(Option<f64>, ScenarioConfig)> {
        match &self.sweep {
            None => vec![(None, self.clone())],
            Some(s) => s.values.iter().map(|v| (Some(*v), self.at(s.parameter, *v))).collect(),
        }
    }
}

fn check_point(c: &ScenarioConfig) -> Result<(), String> {
    if !(c.theta > 0.0 && c.theta.is_finite()) {
        return Err(format!("theta = {} must be > 0", c.theta));
    }
    if !(c.floor >= 0.0 && c.floor.is_finite()) {
        return Err(format!("floor = {} must be >= 0", c.floor));
    }
    if !(0.0..=1.0).contains(&c.epsilon) {
        return Err(format!("epsilon = {} must lie in [0, 1]", c.epsilon));
    }
    let v = preferences::validate(&c.pair());
    if let Some(first) = v.first() {
        return Err(format!("preferences: {:?}: {}", first.assumption, first.detail));
    }
    Ok(())
}
