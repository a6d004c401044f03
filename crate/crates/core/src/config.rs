//! The single JSON run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortFilter, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::CvConfig;
use crate::features::ScoreTable;
use crate::pipeline::ModelConfig;
use crate::survival::DurationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Defaults to `<out_dir>/observations.csv`.
    pub observations: Option<PathBuf>,
    /// Defaults to `<out_dir>/outcomes.csv`.
    pub outcomes: Option<PathBuf>,
    /// Built-in table when absent.
    pub score_table: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            observations: None,
            outcomes: None,
            score_table: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PathsConfig {
    pub fn observations(&self) -> PathBuf {
        self.observations.clone().unwrap_or_else(|| self.out_dir.join("observations.csv"))
    }

    pub fn outcomes(&self) -> PathBuf {
        self.outcomes.clone().unwrap_or_else(|| self.out_dir.join("outcomes.csv"))
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub window_hours: u32,
    pub k_clusters: usize,
    pub target_days: Vec<u32>,
    pub duration_mode: DurationMode,
    pub smoothing: f64,
    pub cv: CvConfig,
    pub seed: u64,
    pub required_variables: Vec<String>,
    /// Generator settings for `synth`.
    pub synth: Option<SynthConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        PipelineConfig {
            paths: PathsConfig::default(),
            window_hours: m.window_hours,
            k_clusters: m.k_clusters,
            target_days: m.target_days,
            duration_mode: m.duration_mode,
            smoothing: m.smoothing,
            cv: CvConfig::default(),
            seed: 0,
            required_variables: CohortFilter::default_required(),
            synth: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            window_hours: self.window_hours,
            k_clusters: self.k_clusters,
            target_days: self.target_days.clone(),
            duration_mode: self.duration_mode,
            smoothing: self.smoothing,
            required_variables: self.required_variables.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.cv.folds < 2 || self.cv.repeats == 0 {
            return Err(Error::Config("cv needs folds >= 2 and repeats >= 1".into()));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    pub fn cohort_filter(&self) -> Result<CohortFilter> {
        CohortFilter::new(self.required_variables.clone(), self.window_hours)
    }

    pub fn score_table(&self) -> Result<ScoreTable> {
        match &self.paths.score_table {
            Some(p) => ScoreTable::load(p).map_err(|e| Error::Config(format!("score table {}: {e}", p.display()))),
            None => Ok(ScoreTable::builtin()),
        }
    }
}
