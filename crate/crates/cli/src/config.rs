use std::path::Path;

use ram_core::auction::BiddingRule;
use ram_core::domain::FeatureSchema;
use ram_core::env::{BehaviorPolicy, CatalogConfig, EnvConfig};
use ram_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SNAPSHOT_FILE: &str = "resolved_config.toml";

/// Everything a command needs; every key has a default and unknown keys are
/// rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub catalog: CatalogConfig,
    pub schema: FeatureSchema,
    pub env: EnvConfig,
    pub behavior: BehaviorPolicy,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Seeds the catalog and the behavior log.
    pub seed: u64,
    pub sessions: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 0,
            sessions: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Ram,
    Random,
    Greedy,
    Behavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seed: u64,
    pub sessions: u64,
    pub policy: PolicyKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 1000,
            sessions: 500,
            policy: PolicyKind::Ram,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    N,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: SweepParam::Alpha,
            values: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

impl SweepParam {
    /// The bidding rule for one sweep value.
    pub fn rule(self, value: f64) -> Result<BiddingRule> {
        let rule = match self {
            SweepParam::Alpha => BiddingRule::RamL { alpha: value },
            SweepParam::N => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(CliError::Config(format!(
                        "N must be a positive integer, got {value}"
                    )));
                }
                BiddingRule::RamN { n: value as usize }
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.behavior.validate()?;
        self.train.validate()?;
        if self.data.sessions == 0 {
            return Err(CliError::Config("data.sessions must be >= 1".into()));
        }
        if self.eval.sessions == 0 {
            return Err(CliError::Config("eval.sessions must be >= 1".into()));
        }
        if self.catalog.items == 0 || self.catalog.ads == 0 {
            return Err(CliError::Config(
                "catalog needs at least one item and one ad".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}
