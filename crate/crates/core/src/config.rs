//! Service configuration (TOML file) and the environment overrides shared by the
//! service and the command line.
//!
//! | variable               | effect                                              |
//! |------------------------|-----------------------------------------------------|
//! | `SCFTWIN_PORT`         | listening port                                      |
//! | `SCFTWIN_DATA_DIR`     | data directory                                      |
//! | `SCFTWIN_RISK_WEIGHTS` | `default,late,alert,neutral` risk weights           |
//! | `SCFTWIN_EPSILON`      | closeness band for the liquidity ratios             |
//! | `SCFTWIN_DELTA`        | return-of-capital alert floor                       |
//! | `SCFTWIN_THETA`        | contagion exposure fraction                         |
//! | `SCFTWIN_ADVANCE_RATE` | default securitization advance rate                 |
//! | `SCFTWIN_GRACE`        | grace period in ticks                               |
//! | `SCFTWIN_HORIZON`      | forecast horizon in ticks                           |
//!
//! Platform parameters are fixed when a data directory is created; overrides only
//! shape new platforms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::health::RiskWeights;
use crate::ids::{ActorId, Tick};
use crate::ledger::Role;
use crate::platform::PlatformSpec;
use crate::rational::{parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid value for {var}: {value:?}")]
    BadVar { var: String, value: String },
}

/// Parameter overrides, typically from the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub risk_weights: Option<RiskWeights>,
    pub epsilon: Option<Rational>,
    pub delta: Option<Rational>,
    pub theta: Option<Rational>,
    pub advance_rate: Option<Rational>,
    pub grace: Option<Tick>,
    pub horizon: Option<u64>,
}

impl Overrides {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_vars(std::env::vars())
    }

    /// Read the `SCFTWIN_*` entries of `vars`; others are ignored.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut o = Overrides::default();
        for (var, value) in vars {
            let bad = || ConfigError::BadVar { var: var.clone(), value: value.clone() };
            let rational = || parse_rational(&value).ok_or_else(bad);
            match var.as_str() {
                "SCFTWIN_PORT" => o.port = Some(value.trim().parse().map_err(|_| bad())?),
                "SCFTWIN_DATA_DIR" => o.data_dir = Some(PathBuf::from(&value)),
                "SCFTWIN_RISK_WEIGHTS" => {
                    let parts: Vec<Rational> =
                        value.split(',').map(parse_rational).collect::<Option<_>>().ok_or_else(bad)?;
                    let [default, late, alert, neutral] = parts[..] else {
                        return Err(bad());
                    };
                    o.risk_weights = Some(RiskWeights { default, late, alert, neutral });
                }
                "SCFTWIN_EPSILON" => o.epsilon = Some(rational()?),
                "SCFTWIN_DELTA" => o.delta = Some(rational()?),
                "SCFTWIN_THETA" => o.theta = Some(rational()?),
                "SCFTWIN_ADVANCE_RATE" => o.advance_rate = Some(rational()?),
                "SCFTWIN_GRACE" => o.grace = Some(value.trim().parse().map_err(|_| bad())?),
                "SCFTWIN_HORIZON" => o.horizon = Some(value.trim().parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        Ok(o)
    }

    /// Apply the platform-parameter overrides and validate the result.
    pub fn apply(&self, spec: &mut PlatformSpec) -> Result<(), ConfigError> {
        let p = &mut spec.params;
        if let Some(w) = &self.risk_weights {
            p.risk_weights = w.clone();
        }
        if let Some(e) = self.epsilon {
            p.thresholds.closeness = e;
        }
        if let Some(d) = self.delta {
            p.thresholds.roc_floor = d;
        }
        if let Some(a) = self.advance_rate {
            p.advance_rate = a;
        }
        if let Some(g) = self.grace {
            p.grace = g;
        }
        if let Some(t) = self.theta {
            spec.theta = t;
        }
        if let Some(h) = self.horizon {
            spec.monitor.horizon = h;
        }
        validate_spec(spec)
    }
}

pub fn validate_spec(spec: &PlatformSpec) -> Result<(), ConfigError> {
    spec.params.validate().map_err(ConfigError::Invalid)?;
    spec.params.thresholds.validate().map_err(ConfigError::Invalid)?;
    spec.params.risk_weights.validate().map_err(ConfigError::Invalid)?;
    if spec.theta <= Rational::from_integer(0) {
        return Err(ConfigError::Invalid("theta must be positive".into()));
    }
    if spec.monitor.horizon == 0 || spec.monitor.window < 2 {
        return Err(ConfigError::Invalid("horizon must be >= 1 and window >= 2".into()));
    }
    if !spec.members.iter().any(|(_, r)| *r == Role::StakeholderValidator) {
        return Err(ConfigError::Invalid("at least one stakeholder-validator is required".into()));
    }
    Ok(())
}

fn default_port() -> u16 {
    8080
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

/// Service configuration file.
///
/// ```toml
/// port = 8080
/// data_dir = "data"
///
/// [platform]
/// network_seed = "desk"
/// members = [["S01", "stakeholder-validator"], ["I1", "external-investor"]]
///
/// [tokens]
/// "token-s01" = "S01"
/// "token-i1" = "I1"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: String,
    pub data_dir: PathBuf,
    /// Used when `data_dir` holds no platform yet.
    pub platform: PlatformSpec,
    /// Bearer token → principal.
    pub tokens: BTreeMap<String, ActorId>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(p) = o.port {
            self.port = p;
        }
        if let Some(d) = &o.data_dir {
            self.data_dir = d.clone();
        }
        o.apply(&mut self.platform)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_spec(&self.platform)?;
        for (token, who) in &self.tokens {
            if token.is_empty() {
                return Err(ConfigError::Invalid("empty token".into()));
            }
            if !self.platform.members.iter().any(|(m, _)| m == who) {
                return Err(ConfigError::Invalid(format!("token principal {who} is not a network member")));
            }
        }
        Ok(())
    }
}
