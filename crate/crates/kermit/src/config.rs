//! Tunable-parameter spaces and concrete configurations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("value {value} is not in the domain of {parameter}")]
    ValueNotInDomain { parameter: String, value: String },
    #[error("configuration is missing parameter {0}")]
    MissingParameter(String),
}

/// A concrete assignment of one discrete value per parameter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub values: BTreeMap<String, String>,
}

impl Configuration {
    pub fn get(&self, parameter: &str) -> Option<&str> {
        self.values.get(parameter).map(|s| s.as_str())
    }
}

/// One tunable parameter with its finite ordered domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigParameter {
    pub name: String,
    pub domain: Vec<String>,
    pub default: String,
}

/// The declared search space: ordered parameters, each with an ordered
/// finite domain, plus the default configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub parameters: Vec<ConfigParameter>,
}

impl ConfigSpace {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.parameters {
            if !p.domain.contains(&p.default) {
                return Err(ConfigError::ValueNotInDomain {
                    parameter: p.name.clone(),
                    value: p.default.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn default_config(&self) -> Configuration {
        Configuration {
            values: self
                .parameters
                .iter()
                .map(|p| (p.name.clone(), p.default.clone()))
                .collect(),
        }
    }

    /// The rule-of-thumb baseline: the middle of every domain.
    pub fn mid_grid_config(&self) -> Configuration {
        Configuration {
            values: self
                .parameters
                .iter()
                .map(|p| (p.name.clone(), p.domain[p.domain.len() / 2].clone()))
                .collect(),
        }
    }

    /// Map a configuration onto per-parameter domain indices.
    pub fn indices_of(&self, config: &Configuration) -> Result<Vec<usize>, ConfigError> {
        self.parameters
            .iter()
            .map(|p| {
                let v = config
                    .get(&p.name)
                    .ok_or_else(|| ConfigError::MissingParameter(p.name.clone()))?;
                p.domain.iter().position(|d| d == v).ok_or_else(|| {
                    ConfigError::ValueNotInDomain {
                        parameter: p.name.clone(),
                        value: v.to_string(),
                    }
                })
            })
            .collect()
    }

    pub fn config_from_indices(&self, indices: &[usize]) -> Configuration {
        assert_eq!(indices.len(), self.parameters.len());
        Configuration {
            values: self
                .parameters
                .iter()
                .zip(indices)
                .map(|(p, &i)| (p.name.clone(), p.domain[i].clone()))
                .collect(),
        }
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        config.values.len() == self.parameters.len() && self.indices_of(config).is_ok()
    }

    /// Total number of grid points.
    pub fn grid_size(&self) -> usize {
        self.parameters.iter().map(|p| p.domain.len()).product()
    }

    /// Enumerate every configuration in row-major domain order.
    pub fn enumerate(&self) -> Vec<Configuration> {
        let mut out = Vec::with_capacity(self.grid_size());
        let mut indices = vec![0usize; self.parameters.len()];
        loop {
            out.push(self.config_from_indices(&indices));
            let mut k = indices.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                indices[k] += 1;
                if indices[k] < self.parameters[k].domain.len() {
                    break;
                }
                indices[k] = 0;
            }
        }
    }
}
