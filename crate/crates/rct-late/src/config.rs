//! Run configuration: design choice, column mapping, and estimation options,
//! parsed from a JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocked::{BlockPolicy, PoolingScheme};
use crate::clustered::WeightScheme;
use crate::error::{Error, Result};
use crate::estimator::{Reference, VarianceMethod};

/// Which estimator pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Simple,
    Blocked,
    Clustered,
    BlockedClustered,
}

impl Design {
    pub fn as_str(&self) -> &'static str {
        match self {
            Design::Simple => "simple",
            Design::Blocked => "blocked",
            Design::Clustered => "clustered",
            Design::BlockedClustered => "blocked_clustered",
        }
    }
}

/// Maps dataset roles to CSV column names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub outcome: String,
    pub receipt: String,
    pub assignment: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub block: Option<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub weight: Option<String>,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_methods() -> Vec<VarianceMethod> {
    vec![VarianceMethod::Db]
}
fn default_reference() -> Reference {
    Reference::T
}

/// Full configuration for an `estimate` or `diagnose` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub design: Design,
    pub columns: ColumnMap,
    #[serde(default = "default_methods")]
    pub variance_methods: Vec<VarianceMethod>,
    #[serde(default = "default_reference")]
    pub inference: Reference,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub block_policy: BlockPolicy,
    #[serde(default)]
    pub weight_scheme: WeightScheme,
    #[serde(default)]
    pub pooling_scheme: PoolingScheme,
    /// Default report destination; the `--out` flag overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.variance_methods.is_empty() {
            return Err(Error::Config("variance_methods must not be empty".into()));
        }
        match self.design {
            Design::Simple => {}
            Design::Blocked => {
                if self.columns.block.is_none() {
                    return Err(Error::Config("blocked design needs columns.block".into()));
                }
            }
            Design::Clustered => {
                if self.columns.cluster.is_none() {
                    return Err(Error::Config(
                        "clustered design needs columns.cluster".into(),
                    ));
                }
            }
            Design::BlockedClustered => {
                if self.columns.block.is_none() || self.columns.cluster.is_none() {
                    return Err(Error::Config(
                        "blocked_clustered design needs columns.block and columns.cluster".into(),
                    ));
                }
            }
        }
        // The bounded and classical-IV estimators are defined for the
        // simple design only.
        if self.design != Design::Simple
            && self
                .variance_methods
                .iter()
                .any(|m| *m != VarianceMethod::Db)
        {
            return Err(Error::Config(
                "only the `db` variance method applies outside the simple design".into(),
            ));
        }
        if self.weight_scheme == WeightScheme::Column && self.columns.weight.is_none() {
            return Err(Error::Config(
                "weight scheme `column` needs columns.weight".into(),
            ));
        }
        Ok(())
    }
}
