//! Run configurations. Files are TOML, or JSON when the extension is
//! `.json`; unknown keys are rejected and errors name the offending field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use moce_core::losses::LossSpec;
use moce_core::mnig_em::EmConfig;
use moce_core::oracle_bench::{GaussianExpCase, NelderMeadOptions};
use moce_core::sa_engine::{BoxConstraint, EstimatorOptions, StepSchedule};
use moce_core::scenarios::{EmpiricalConfig, MnigConfig, MnigParams, ScenarioModel};
use moce_core::sensitivity::ShockModel;

use crate::error::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, is_json(path))
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn parse<T: DeserializeOwned>(text: &str, json: bool) -> Result<T, CliError> {
    let located = |path: String, msg: String| {
        if path == "." {
            CliError::Config(msg)
        } else {
            CliError::Config(format!("{path}: {msg}"))
        }
    };
    if json {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| located(e.path().to_string(), e.inner().to_string()))
    } else {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner().message().to_string();
            located(e.path().to_string(), inner)
        })
    }
}

fn default_samples() -> usize {
    200_000
}

fn default_mc_samples() -> usize {
    500_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub loss: LossSpec,
    pub scenario: ScenarioModel,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(rename = "box")]
    pub bx: BoxConstraint,
    /// Starting allocation; the origin projected onto the box by default.
    #[serde(default)]
    pub m0: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: EstimatorOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub case: GaussianExpCase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub loss: LossSpec,
    pub scenario: ScenarioModel,
    #[serde(default = "default_mc_samples")]
    pub n_samples: usize,
    /// Starting point; the origin by default.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub nelder_mead: NelderMeadOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSource {
    Oracle,
    Sa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub loss: LossSpec,
    /// Law of `X`.
    pub scenario: ScenarioModel,
    pub shock: ShockModel,
    pub m_source: MSource,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Used when `m_source = "sa"`.
    #[serde(default)]
    pub schedule: StepSchedule,
    /// Required when `m_source = "sa"`.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bx: Option<BoxConstraint>,
}

fn default_tol() -> f64 {
    1e-5
}

fn default_max_iter() -> usize {
    1000
}

fn default_restarts() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub data: EmpiricalConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Random restarts on top of the initial guess.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Starting point; moment matching on the data by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<MnigConfig>,
    #[serde(default)]
    pub track_log_likelihood: bool,
}

impl FitConfig {
    pub fn em_config(&self, initial: MnigParams) -> EmConfig {
        EmConfig {
            track_log_likelihood: self.track_log_likelihood,
            ..EmConfig::new(initial, self.tol, self.max_iter)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub table: moce_core::oracle_bench::reference::TableId,
    pub seed: u64,
    pub schedule: StepSchedule,
    pub mc_samples: usize,
}
