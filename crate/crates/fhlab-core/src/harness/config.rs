//! Experiment configuration: a JSON document with an `experiment` tag, an
//! explicit seed, and per-kind parameters. Seeds are never defaulted from
//! wall clock; reproducibility is the product.

use crate::error::{Error, Result};
use crate::transforms::Charge;
use serde::{Deserialize, Serialize};

fn default_tolerance_floor() -> f64 {
    0.1
}

fn default_nodes_per_symbol() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Closed-form predictions only.
    Predict {
        seed: u64,
        n_list: Vec<u32>,
        charge: Charge,
    },
    /// Monte Carlo joint moments only.
    Simulate {
        seed: u64,
        n_list: Vec<u32>,
        charge: Charge,
        n_samples: u64,
    },
    /// Prediction vs Monte Carlo rows with pass flags.
    Compare {
        seed: u64,
        n_list: Vec<u32>,
        charge: Charge,
        n_samples: u64,
        #[serde(default = "default_tolerance_floor")]
        tolerance_floor: f64,
    },
    /// Kernel identity and decay checks plus a kernel table export.
    Kernel {
        seed: u64,
        n: usize,
        #[serde(default = "default_nodes_per_symbol")]
        nodes_per_symbol: usize,
    },
    /// Field sampling and chaos-measure checks.
    Gmc {
        seed: u64,
        n: usize,
        truncation: usize,
        gamma: f64,
        n_field_draws: u64,
        n_trajectories: u64,
    },
    /// Max-statistic trend experiment over a matrix-size sweep.
    Maxstat {
        seed: u64,
        n_list: Vec<u32>,
        grid_e: usize,
        grid_t: usize,
        replicas: u64,
    },
    /// Fast end-to-end invariant suite.
    Selftest { seed: u64 },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            pointer: "/".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentConfig::Predict { .. } => "predict",
            ExperimentConfig::Simulate { .. } => "simulate",
            ExperimentConfig::Compare { .. } => "compare",
            ExperimentConfig::Kernel { .. } => "kernel",
            ExperimentConfig::Gmc { .. } => "gmc",
            ExperimentConfig::Maxstat { .. } => "maxstat",
            ExperimentConfig::Selftest { .. } => "selftest",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Predict { seed, .. }
            | ExperimentConfig::Simulate { seed, .. }
            | ExperimentConfig::Compare { seed, .. }
            | ExperimentConfig::Kernel { seed, .. }
            | ExperimentConfig::Gmc { seed, .. }
            | ExperimentConfig::Maxstat { seed, .. }
            | ExperimentConfig::Selftest { seed } => *seed,
        }
    }

    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            ExperimentConfig::Predict { seed, .. }
            | ExperimentConfig::Simulate { seed, .. }
            | ExperimentConfig::Compare { seed, .. }
            | ExperimentConfig::Kernel { seed, .. }
            | ExperimentConfig::Gmc { seed, .. }
            | ExperimentConfig::Maxstat { seed, .. }
            | ExperimentConfig::Selftest { seed } => *seed = new_seed,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_charge = |charge: &Charge| -> Result<()> {
            charge.validate().map_err(|e| Error::Config {
                pointer: "/charge".into(),
                message: e.to_string(),
            })?;
            for (i, s) in charge.singularities.iter().enumerate() {
                if !(s.gamma >= 0.0) {
                    return Err(Error::Config {
                        pointer: format!("/charge/singularities/{i}/gamma"),
                        message: format!("must be >= 0, got {}", s.gamma),
                    });
                }
            }
            Ok(())
        };
        let check_n_list = |n_list: &[u32]| -> Result<()> {
            if n_list.is_empty() || n_list.iter().any(|&n| n == 0) {
                return Err(Error::Config {
                    pointer: "/n_list".into(),
                    message: "need at least one positive matrix size".into(),
                });
            }
            Ok(())
        };
        match self {
            ExperimentConfig::Predict { n_list, charge, .. } => {
                check_n_list(n_list)?;
                check_charge(charge)
            }
            ExperimentConfig::Simulate { n_list, charge, n_samples, .. }
            | ExperimentConfig::Compare { n_list, charge, n_samples, .. } => {
                check_n_list(n_list)?;
                check_charge(charge)?;
                if *n_samples == 0 {
                    return Err(Error::Config {
                        pointer: "/n_samples".into(),
                        message: "need a positive sample count".into(),
                    });
                }
                if let ExperimentConfig::Compare { tolerance_floor, .. } = self {
                    if !(*tolerance_floor > 0.0) {
                        return Err(Error::Config {
                            pointer: "/tolerance_floor".into(),
                            message: "must be positive".into(),
                        });
                    }
                }
                Ok(())
            }
            ExperimentConfig::Kernel { n, nodes_per_symbol, .. } => {
                if *n == 0 {
                    return Err(Error::Config {
                        pointer: "/n".into(),
                        message: "matrix size must be positive".into(),
                    });
                }
                if *nodes_per_symbol == 0 {
                    return Err(Error::Config {
                        pointer: "/nodes_per_symbol".into(),
                        message: "must be positive".into(),
                    });
                }
                Ok(())
            }
            ExperimentConfig::Gmc { n, truncation, gamma, n_field_draws, n_trajectories, .. } => {
                if *n == 0 || *truncation == 0 {
                    return Err(Error::Config {
                        pointer: "/n".into(),
                        message: "matrix size and truncation must be positive".into(),
                    });
                }
                if !(*gamma >= 0.0) {
                    return Err(Error::Config {
                        pointer: "/gamma".into(),
                        message: "gamma must be >= 0".into(),
                    });
                }
                if *n_field_draws == 0 || *n_trajectories == 0 {
                    return Err(Error::Config {
                        pointer: "/n_field_draws".into(),
                        message: "draw counts must be positive".into(),
                    });
                }
                Ok(())
            }
            ExperimentConfig::Maxstat { n_list, grid_e, grid_t, replicas, .. } => {
                check_n_list(n_list)?;
                if *grid_e == 0 || *grid_t == 0 || *replicas == 0 {
                    return Err(Error::Config {
                        pointer: "/grid_e".into(),
                        message: "grid sizes and replica count must be positive".into(),
                    });
                }
                Ok(())
            }
            ExperimentConfig::Selftest { .. } => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_compare_config() {
        let text = r#"{
            "experiment": "compare",
            "seed": 7,
            "n_list": [50, 100],
            "n_samples": 1000,
            "charge": {
                "singularities": [{"t": 0.0, "e": 0.0, "gamma": 1.0, "beta": 0.0}]
            }
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.kind_name(), "compare");
        assert_eq!(cfg.seed(), 7);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let text = r#"{"experiment": "selftest"}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn semantic_errors_carry_pointers() {
        let text = r#"{
            "experiment": "predict",
            "seed": 1,
            "n_list": [],
            "charge": {}
        }"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/n_list"),
            other => panic!("unexpected {other}"),
        }
        let text = r#"{
            "experiment": "predict",
            "seed": 1,
            "n_list": [10],
            "charge": {"singularities": [{"t": 0.0, "e": 3.0, "gamma": 1.0, "beta": 0.0}]}
        }"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/charge"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"experiment": "selftest", "seed": 3, "bogus": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn seed_override() {
        let cfg = ExperimentConfig::Selftest { seed: 1 }.with_seed(99);
        assert_eq!(cfg.seed(), 99);
    }
}
