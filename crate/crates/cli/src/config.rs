//! Run configuration: a flat `key = value` file with `#` comments.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ghostgame::sim::Monitoring;
use ghostgame::{validate, BoundaryMode, GameSpec, ModelError, Payoff, PlayerSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything one run needs. Grid bounds left unset are chosen from the
/// boundary at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub x0: f64,
    pub g1: Payoff,
    pub h1: Payoff,
    pub g2: Payoff,
    pub h2: Payoff,
    pub p1: f64,
    pub p2: f64,
    pub mode: BoundaryMode,
    pub dt: f64,
    /// Length of the sample path and time of the last martingale checkpoint.
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub monitoring: Monitoring,
    pub out: PathBuf,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub x_points: usize,
    pub p1_values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mu: 0.0,
            sigma: std::f64::consts::SQRT_2,
            r: 2.0,
            x0: 5.0,
            g1: Payoff::Call { strike: 3.0 },
            h1: Payoff::Call { strike: 4.0 },
            g2: Payoff::Call { strike: 3.0 },
            h2: Payoff::Call { strike: 4.0 },
            p1: 0.3,
            p2: 0.6,
            mode: BoundaryMode::Martingale,
            dt: 1e-3,
            horizon: 2.0,
            paths: 100_000,
            seed: 1,
            monitoring: Monitoring::Bridge,
            out: PathBuf::from("."),
            x_min: None,
            x_max: None,
            x_points: 201,
            p1_values: Vec::new(),
        }
    }
}

const KEYS: [&str; 21] = [
    "mu", "sigma", "r", "x0", "g1", "h1", "g2", "h2", "p1", "p2", "mode", "dt", "horizon", "paths", "seed",
    "monitoring", "out", "x_min", "x_max", "x_points", "p1_values",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn optional(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Reads `path` on top of the defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value.trim())?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "mu" => self.mu = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "r" => self.r = parse(key, value)?,
            "x0" => self.x0 = parse(key, value)?,
            "g1" => self.g1 = parse(key, value)?,
            "h1" => self.h1 = parse(key, value)?,
            "g2" => self.g2 = parse(key, value)?,
            "h2" => self.h2 = parse(key, value)?,
            "p1" => self.p1 = parse(key, value)?,
            "p2" => self.p2 = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "paths" => self.paths = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "monitoring" => self.monitoring = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "x_min" => self.x_min = optional(key, value)?,
            "x_max" => self.x_max = optional(key, value)?,
            "x_points" => self.x_points = parse(key, value)?,
            "p1_values" => {
                self.p1_values = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: item.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The file form; [`RunConfig::parse_str`] reads it back unchanged.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        let auto = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
        match key {
            "mu" => self.mu.to_string(),
            "sigma" => self.sigma.to_string(),
            "r" => self.r.to_string(),
            "x0" => self.x0.to_string(),
            "g1" => self.g1.to_string(),
            "h1" => self.h1.to_string(),
            "g2" => self.g2.to_string(),
            "h2" => self.h2.to_string(),
            "p1" => self.p1.to_string(),
            "p2" => self.p2.to_string(),
            "mode" => self.mode.to_string(),
            "dt" => self.dt.to_string(),
            "horizon" => self.horizon.to_string(),
            "paths" => self.paths.to_string(),
            "seed" => self.seed.to_string(),
            "monitoring" => self.monitoring.to_string(),
            "out" => self.out.display().to_string(),
            "x_min" => auto(self.x_min),
            "x_max" => auto(self.x_max),
            "x_points" => self.x_points.to_string(),
            "p1_values" => self
                .p1_values
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
            _ => unreachable!("every key in KEYS has a value"),
        }
    }

    pub fn game_with_p1(&self, p1: f64) -> Result<GameSpec, ConfigError> {
        let params = validate(self.mu, self.sigma, self.r)?;
        Ok(GameSpec::new(
            params,
            self.x0,
            PlayerSpec::new(self.g1, self.h1, p1),
            PlayerSpec::new(self.g2, self.h2, self.p2),
        )?)
    }

    /// Simulation settings checked before any work starts.
    pub fn check_sim(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| ConfigError::Value {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad("horizon", "must be positive"));
        }
        if self.paths < 2 {
            return Err(bad("paths", "need at least 2"));
        }
        if self.x_points < 2 {
            return Err(bad("x_points", "need at least 2"));
        }
        Ok(())
    }
}
