//! Model specification files: a JSON document mirroring the portfolio
//! types. See the repository README for the grammar.

use crate::CliError;
use ruin_core::model::{
    self, DefaultTimeDistribution, LossDistribution, MultiGroupModel, ObligorGroup,
    PortfolioModel, TabulatedDistribution, ValidatedModel,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
}

impl LossSpec {
    fn build(&self) -> LossDistribution {
        match *self {
            LossSpec::Exponential { rate } => LossDistribution::Exponential { rate },
            LossSpec::Deterministic { value } => LossDistribution::Deterministic { value },
            LossSpec::Erlang { shape, rate } => LossDistribution::Erlang { shape, rate },
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RatesSpec {
    /// `lambda[i] = lambda * i`, `income[i] = income * i`.
    Proportional { lambda: f64, income: f64 },
    /// Explicit per-level vectors (level 1 first).
    PerLevel { lambda: Vec<f64>, income: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DefaultTimeSpec {
    Exponential { rate: f64 },
    Tabulated { grid: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NonDefaultSpec {
    pub rates: Vec<f64>,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub count: usize,
    pub lambda: f64,
    pub income: f64,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub rates: Option<RatesSpec>,
    #[serde(default)]
    pub loss: Option<LossSpec>,
    #[serde(default)]
    pub sigma2: Option<Vec<f64>>,
    #[serde(default)]
    pub nondefault: Option<NonDefaultSpec>,
    #[serde(default)]
    pub default_time: Option<DefaultTimeSpec>,
    #[serde(default)]
    pub groups: Option<Vec<GroupSpec>>,
}

/// A parsed model file plus the content hash used in output headers.
#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub file: ModelFile,
    pub sha256: String,
}

impl ParsedModel {
    /// Build and validate the single-portfolio model.
    pub fn portfolio(&self) -> Result<ValidatedModel, CliError> {
        let rates = self.file.rates.as_ref().ok_or_else(|| {
            CliError::Validation("model file needs a \"rates\" section for this command".into())
        })?;
        let loss = self
            .file
            .loss
            .as_ref()
            .ok_or_else(|| CliError::Validation("model file needs a \"loss\" section".into()))?
            .build();
        let mut raw = match rates {
            RatesSpec::Proportional { lambda, income } => {
                let n_max = self.file.n_max.ok_or_else(|| {
                    CliError::Validation("proportional rates need \"n_max\"".into())
                })?;
                PortfolioModel::proportional(n_max, *lambda, *income, loss)
            }
            RatesSpec::PerLevel { lambda, income } => {
                PortfolioModel::with_levels(lambda.clone(), income.clone(), loss)
            }
        };
        if let Some(sigma2) = &self.file.sigma2 {
            raw = raw.with_sigma2(sigma2.clone());
        }
        if let Some(nd) = &self.file.nondefault {
            raw = raw.with_nondefault(nd.rates.clone(), nd.loss.build());
        }
        if let Some(dt) = &self.file.default_time {
            let dist = match dt {
                DefaultTimeSpec::Exponential { rate } => {
                    DefaultTimeDistribution::Exponential { rate: *rate }
                }
                DefaultTimeSpec::Tabulated { grid, density } => DefaultTimeDistribution::Tabulated(
                    TabulatedDistribution::from_density(grid.clone(), density.clone())
                        .map_err(CliError::from)?,
                ),
            };
            raw = raw.with_default_time(dist);
        }
        model::validate(raw).map_err(CliError::from)
    }

    /// Build and validate the multi-group model.
    pub fn multigroup(&self) -> Result<MultiGroupModel, CliError> {
        let groups = self.file.groups.as_ref().ok_or_else(|| {
            CliError::Validation("model file needs a \"groups\" section for this command".into())
        })?;
        let mg = MultiGroupModel {
            groups: groups
                .iter()
                .map(|g| ObligorGroup {
                    count: g.count,
                    lambda: g.lambda,
                    income_rate: g.income,
                    loss: g.loss.build(),
                })
                .collect(),
        };
        mg.validate().map_err(CliError::from)?;
        Ok(mg)
    }
}

/// Read and parse a model file; the hash covers the raw bytes.
pub fn load(path: &Path) -> Result<ParsedModel, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Parse(format!("cannot parse {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let sha256 = hex_string(&hasher.finalize()[..8]);
    Ok(ParsedModel { file, sha256 })
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
