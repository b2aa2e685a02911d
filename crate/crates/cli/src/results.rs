//! Result files written by `fit-optimal` and `train`.
//!
//! Both are JSON documents with the resolved configuration embedded next to
//! its SHA-256, so every reported number can be regenerated.

use std::path::Path;

use serde::{Deserialize, Serialize};

use regopt::estimators::EmpiricalRisk;
use regopt::io_util::atomic_write;

use crate::error::{CliError, CliResult};

pub const OPTIMAL_FILE: &str = "optimal.json";
pub const LEARNED_FILE: &str = "learned.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Optimal,
    Learned,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Optimal => "optimal",
            Family::Learned => "learned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub family: Family,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    /// Resolved configuration as TOML.
    pub config: String,
    pub deterministic: bool,
    /// How the offset enters the maps of this file.
    pub offset_form: String,
    pub levels: Vec<LevelInfo>,
    pub rows: Vec<ResultRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub eta: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Empirical mean of the training signals.
    pub mean_signal: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Risk {
    pub sum_of_squares: f64,
    pub per_dimension: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl From<EmpiricalRisk> for Risk {
    fn from(r: EmpiricalRisk) -> Self {
        Self {
            sum_of_squares: r.sum_of_squares,
            per_dimension: r.per_dimension,
            std_error: r.std_error,
            samples: r.samples,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymmetry: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guarded_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub eta: Option<f64>,
    /// `ok` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub train: Option<Risk>,
    pub test: Option<Risk>,
    pub seconds: f64,
    pub diagnostics: RowDiagnostics,
    /// Map or checkpoint file, relative to the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl ResultRow {
    pub fn failed(method: &str, eta: Option<f64>, error: String) -> Self {
        Self {
            method: method.to_string(),
            eta,
            status: "failed".into(),
            error: Some(error),
            train: None,
            test: None,
            seconds: 0.0,
            diagnostics: RowDiagnostics::default(),
            artifact: None,
            trace: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn save(path: &Path, file: &ResultFile) -> CliResult<()> {
    let text = serde_json::to_string_pretty(file).expect("results serialize");
    atomic_write(path, |f| {
        use std::io::Write;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(())
}

pub fn load(path: &Path) -> CliResult<ResultFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: cannot read result file: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Data(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}
