//! Experiment configuration: loading, command-line overrides and validation.
//!
//! A config file is either a JSON object or plain `key = value` lines. List
//! fields accept comma-separated values in the plain format and a bare scalar
//! in either format. A manifest written by a previous run is also accepted
//! and replays its embedded config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mcmccoup_core::couplings::CouplingKind;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    OdeSpherical,
    McmcVsOde,
    AsymptoteSpherical,
    AsymptoteElliptical,
    McmcElliptical,
    SvmConvergence,
    SvmBias,
    SvmThresholdSweep,
    HugHopConvergence,
    HopThresholdSweep,
    Validate,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Self::OdeSpherical,
        Self::McmcVsOde,
        Self::AsymptoteSpherical,
        Self::AsymptoteElliptical,
        Self::McmcElliptical,
        Self::SvmConvergence,
        Self::SvmBias,
        Self::SvmThresholdSweep,
        Self::HugHopConvergence,
        Self::HopThresholdSweep,
        Self::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::OdeSpherical => "ode-spherical",
            Self::McmcVsOde => "mcmc-vs-ode",
            Self::AsymptoteSpherical => "asymptote-spherical",
            Self::AsymptoteElliptical => "asymptote-elliptical",
            Self::McmcElliptical => "mcmc-elliptical",
            Self::SvmConvergence => "svm-convergence",
            Self::SvmBias => "svm-bias",
            Self::SvmThresholdSweep => "svm-threshold-sweep",
            Self::HugHopConvergence => "hug-hop-convergence",
            Self::HopThresholdSweep => "hop-threshold-sweep",
            Self::Validate => "validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::validation("experiment", format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Paper,
    #[default]
    Desk,
}

impl Scale {
    /// Chooses between a full-scale and a desk-scale default.
    pub fn pick<T>(self, paper: T, desk: T) -> T {
        match self {
            Self::Paper => paper,
            Self::Desk => desk,
        }
    }
}

impl FromStr for Scale {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(CliError::validation("scale", format!("expected paper or desk, got {other:?}"))),
        }
    }
}

/// Initial condition (x₀, y₀, ρ₀): scaled squared norms and correlation of
/// the two chains. Written `x0:y0:rho0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Start {
    pub x0: f64,
    pub y0: f64,
    pub rho0: f64,
}

impl Start {
    pub const STANDARD: [Start; 4] = [
        Start { x0: 1.0, y0: 1.0, rho0: 0.0 },
        Start { x0: 1.0, y0: 1.0, rho0: 0.9 },
        Start { x0: 1.5, y0: 0.5, rho0: 0.0 },
        Start { x0: 0.4, y0: 0.01, rho0: -0.5 },
    ];

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.x0 > 0.0 && self.y0 > 0.0 && self.x0.is_finite() && self.y0.is_finite()) {
            return Err(format!("{self}: x0 and y0 must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.rho0) {
            return Err(format!("{self}: rho0 must lie in [-1, 1]"));
        }
        Ok(())
    }
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.x0, self.y0, self.rho0)
    }
}

impl From<Start> for String {
    fn from(s: Start) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for Start {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let nums: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
        match nums[..] {
            [x0, y0, rho0] if parts.len() == 3 => Ok(Start { x0, y0, rho0 }),
            _ => Err(format!("expected x0:y0:rho0, got {s:?}")),
        }
    }
}

/// Everything needed to run one experiment. Unset fields take the
/// experiment's default at the chosen scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub scale: Scale,
    pub seed: Option<u64>,
    /// Dimension of Gaussian targets.
    pub d: Option<usize>,
    /// Scaled step sizes: l for spherical targets, l₁ for elliptical ones.
    pub l: Option<Vec<f64>>,
    /// Absolute step size, overriding the automatic choice on SVM targets.
    pub h: Option<f64>,
    pub couplings: Option<Vec<String>>,
    /// Target names, e.g. `ar1`, `chi2`, `two-eigen`.
    pub targets: Option<Vec<String>>,
    pub starts: Option<Vec<Start>>,
    pub lag: Option<u64>,
    pub replicates: Option<usize>,
    /// Coupling thresholds δ on ‖X − Y‖².
    pub deltas: Option<Vec<f64>>,
    /// Ellipticities for asymptote sweeps.
    pub epsilons: Option<Vec<f64>>,
    /// Horizon in units of t/d.
    pub t_end: Option<f64>,
    /// Iteration budget per replicate.
    pub max_iter: Option<u64>,
    pub burn_in: Option<u64>,
    /// Number of observations of the SVM data set.
    pub svm_t: Option<usize>,
    /// Monte Carlo sample size for oracles.
    pub samples: Option<u64>,
    pub out: Option<PathBuf>,
}

const LIST_KEYS: [&str; 6] = ["l", "couplings", "targets", "starts", "deltas", "epsilons"];

impl ExperimentConfig {
    /// Config for `experiment` at `scale` with every other field defaulted.
    pub fn new(experiment: Experiment, scale: Scale, seed: u64) -> Self {
        Self { experiment: Some(experiment), scale, seed: Some(seed), ..Self::default() }
    }

    /// Parses a JSON object, a manifest, or `key = value` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let map = if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))?;
            let Value::Object(mut map) = v else {
                return Err(CliError::validation("config", "expected a JSON object"));
            };
            if map.contains_key("code_version") {
                match map.remove("config") {
                    Some(Value::Object(inner)) => inner,
                    _ => return Err(CliError::validation("config", "manifest has no config object")),
                }
            } else {
                map
            }
        } else {
            parse_key_values(text)?
        };
        Self::from_map(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides on top of this config.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        let mut map = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        map.retain(|_, v| !v.is_null());
        for pair in pairs {
            let (k, v) = split_pair(pair)?;
            map.insert(k.to_string(), value_for(k, v));
        }
        *self = Self::from_map(map)?;
        Ok(())
    }

    fn from_map(mut map: Map<String, Value>) -> Result<Self> {
        for (k, v) in map.iter_mut() {
            if LIST_KEYS.contains(&k.as_str()) && !v.is_array() && !v.is_null() {
                *v = Value::Array(vec![v.take()]);
            }
            let single = Value::Object(Map::from_iter([(k.clone(), v.clone())]));
            serde_json::from_value::<Self>(single).map_err(|e| CliError::validation(k.clone(), e.to_string()))?;
        }
        Ok(serde_json::from_value(Value::Object(map))?)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.ok_or_else(|| CliError::validation("experiment", "required"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| CliError::validation("seed", "required"))
    }

    /// Field-level checks that do not depend on the experiment.
    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        self.seed()?;
        fn err(field: &str, message: impl Into<String>) -> CliError {
            CliError::validation(field, message)
        }
        if let Some(d) = self.d {
            if d < 2 {
                return Err(err("d", format!("must be at least 2, got {d}")));
            }
        }
        let positive = |name: &str, vs: &[f64]| -> Result<()> {
            match vs.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                Some(v) => Err(err(name, format!("values must be positive and finite, got {v}"))),
                None if vs.is_empty() => Err(err(name, "must not be empty")),
                None => Ok(()),
            }
        };
        for (name, vs) in [("l", &self.l), ("deltas", &self.deltas), ("epsilons", &self.epsilons)] {
            if let Some(vs) = vs {
                positive(name, vs)?;
            }
        }
        if let Some(eps) = &self.epsilons {
            if let Some(e) = eps.iter().find(|e| **e < 1.0) {
                return Err(err("epsilons", format!("ellipticity is at least 1, got {e}")));
            }
        }
        for (name, v) in [("h", self.h), ("t_end", self.t_end)] {
            if let Some(v) = v {
                positive(name, &[v])?;
            }
        }
        for (name, v) in [("lag", self.lag), ("max_iter", self.max_iter), ("samples", self.samples)] {
            if v == Some(0) {
                return Err(err(name, "must be positive"));
            }
        }
        if self.replicates == Some(0) {
            return Err(err("replicates", "must be positive"));
        }
        if let Some(t) = self.svm_t {
            if t < 2 {
                return Err(err("svm_t", format!("needs at least 2 observations, got {t}")));
            }
        }
        if let (Some(lag), Some(max)) = (self.lag, self.max_iter) {
            if max <= lag {
                return Err(err("max_iter", format!("budget {max} must exceed the lag {lag}")));
            }
        }
        if let Some(starts) = &self.starts {
            for s in starts {
                s.validate().map_err(|m| err("starts", m))?;
            }
        }
        self.coupling_kinds(&[])?;
        Ok(())
    }

    /// Parsed couplings, or `default` when unset.
    pub fn coupling_kinds(&self, default: &[&str]) -> Result<Vec<CouplingKind>> {
        let names: Vec<String> = match &self.couplings {
            Some(c) if c.is_empty() => return Err(CliError::validation("couplings", "must not be empty")),
            Some(c) => c.clone(),
            None => default.iter().map(|s| s.to_string()).collect(),
        };
        names
            .iter()
            .map(|n| n.parse::<CouplingKind>().map_err(|e| CliError::validation("couplings", e.to_string())))
            .collect()
    }

    pub fn starts_or_standard(&self) -> Vec<Start> {
        self.starts.clone().unwrap_or_else(|| Start::STANDARD.to_vec())
    }
}

fn split_pair(pair: &str) -> Result<(&str, &str)> {
    let (k, v) = pair
        .split_once('=')
        .ok_or_else(|| CliError::validation(pair.trim(), "expected key=value"))?;
    Ok((k.trim(), v.trim()))
}

fn scalar(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn value_for(key: &str, raw: &str) -> Value {
    if raw.starts_with('[') {
        return scalar(raw);
    }
    if LIST_KEYS.contains(&key) {
        return Value::Array(raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(scalar).collect());
    }
    scalar(raw)
}

fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_pair(line)?;
        if map.insert(k.to_string(), value_for(k, v)).is_some() {
            return Err(CliError::validation(k, "given more than once"));
        }
    }
    Ok(map)
}
