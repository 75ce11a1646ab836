//! JSON model configuration.
//!
//! Schema:
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "conservative": true,
//!   "has_cemetery": false,
//!   "transitions": [
//!     { "from": 0, "to": 1,
//!       "profile": { "kind": "piecewise-constant",
//!                    "breakpoints": [1.0], "values": [1.0, 3.0] } }
//!   ],
//!   "kill": [ { "state": 0, "profile": { "kind": "constant", "values": [2.0] } } ]
//! }
//! ```
//!
//! `breakpoints` may be omitted for constant profiles; `kill` and
//! `has_cemetery` are optional.  Validation errors cite the JSON path of the
//! offending field.

use crate::profile::{ProfileKind, TimeProfile};
use crate::qmodel::{QModel, StateSpace, Transition};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub kind: ProfileKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProfileConfig {
    fn build(&self, path: &str) -> Result<TimeProfile, ConfigError> {
        let r = match self.kind {
            ProfileKind::Constant => {
                if !self.breakpoints.is_empty() {
                    return Err(invalid(
                        format!("{path}.breakpoints"),
                        "constant profiles take no breakpoints",
                    ));
                }
                if self.values.len() != 1 {
                    return Err(invalid(
                        format!("{path}.values"),
                        format!("constant profiles take exactly one value, got {}", self.values.len()),
                    ));
                }
                TimeProfile::constant(self.values[0])
            }
            ProfileKind::PiecewiseConstant => {
                TimeProfile::piecewise_constant(self.breakpoints.clone(), self.values.clone())
            }
            ProfileKind::PiecewiseLinear => {
                TimeProfile::piecewise_linear(self.breakpoints.clone(), self.values.clone())
            }
        };
        r.map_err(|e| invalid(path, e))
    }

    fn from_profile(p: &TimeProfile) -> Self {
        Self {
            kind: p.kind(),
            breakpoints: p.breakpoints().to_vec(),
            values: p.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionConfig {
    pub from: usize,
    pub to: usize,
    pub profile: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KillConfig {
    pub state: usize,
    pub profile: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_states: usize,
    #[serde(default)]
    pub conservative: bool,
    #[serde(default)]
    pub has_cemetery: bool,
    #[serde(default)]
    pub transitions: Vec<TransitionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kill: Vec<KillConfig>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<QModel, ConfigError> {
        if self.n_states == 0 {
            return Err(invalid("n_states", "must be at least 1"));
        }
        let space = if self.has_cemetery {
            StateSpace::with_cemetery(self.n_states)
        } else {
            StateSpace::new(self.n_states)
        }
        .map_err(|e| invalid("n_states", e))?;

        let mut transitions = Vec::with_capacity(self.transitions.len());
        for (i, tc) in self.transitions.iter().enumerate() {
            let path = format!("transitions[{i}]");
            let profile = tc.profile.build(&format!("{path}.profile"))?;
            transitions.push(Transition {
                from: tc.from,
                to: tc.to,
                profile,
            });
        }
        let mut kill = Vec::with_capacity(self.kill.len());
        for (i, kc) in self.kill.iter().enumerate() {
            let path = format!("kill[{i}]");
            let profile = kc.profile.build(&format!("{path}.profile"))?;
            kill.push((kc.state, profile));
        }
        let model = QModel::new(space, transitions, kill)
            .map_err(|e| invalid("transitions", e))?;
        if self.conservative && !model.is_conservative() {
            return Err(invalid(
                "conservative",
                "declared conservative but kill rates are present",
            ));
        }
        Ok(model)
    }

    pub fn from_model(model: &QModel) -> Self {
        Self {
            n_states: model.space().n_states(),
            conservative: model.is_conservative(),
            has_cemetery: model.space().has_cemetery(),
            transitions: model
                .transitions()
                .iter()
                .map(|tr| TransitionConfig {
                    from: tr.from,
                    to: tr.to,
                    profile: ProfileConfig::from_profile(&tr.profile),
                })
                .collect(),
            kill: (0..model.space().n_states())
                .filter_map(|x| {
                    model.kill_profile(x).map(|p| KillConfig {
                        state: x,
                        profile: ProfileConfig::from_profile(p),
                    })
                })
                .collect(),
        }
    }
}

/// Parse a model straight from JSON text.
pub fn model_from_json(text: &str) -> Result<QModel, ConfigError> {
    ModelConfig::from_json(text)?.build()
}
