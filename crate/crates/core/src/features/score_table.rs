use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBin {
    /// Inclusive.
    pub lower: f64,
    /// Exclusive.
    pub upper: f64,
    pub score: u32,
}

/// Per-variable severity bins. Values outside every bin get `default_score`.
///
/// Serialized as a flat JSON object: one key per variable holding its bin
/// list, plus `"default_score"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub default_score: u32,
    #[serde(flatten)]
    pub variables: BTreeMap<String, Vec<ScoreBin>>,
}

impl ScoreTable {
    pub fn new(variables: BTreeMap<String, Vec<ScoreBin>>, default_score: u32) -> Result<Self> {
        let table = ScoreTable {
            default_score,
            variables,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (var, bins) in &self.variables {
            for b in bins {
                if b.lower >= b.upper || !b.lower.is_finite() || !b.upper.is_finite() {
                    return Err(Error::Config(format!(
                        "score table `{var}`: bin [{}, {}) is empty or unbounded",
                        b.lower, b.upper
                    )));
                }
            }
            for pair in bins.windows(2) {
                if pair[1].lower < pair[0].upper {
                    return Err(Error::Config(format!(
                        "score table `{var}`: bins must be sorted and non-overlapping"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ScoreTable = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, variable: &str) -> bool {
        self.variables.contains_key(variable)
    }

    /// Bin score for `value`, or `None` when the variable is not configured.
    pub fn score(&self, variable: &str, value: f64) -> Option<u32> {
        let bins = self.variables.get(variable)?;
        Some(
            bins.iter()
                .find(|b| b.lower <= value && value < b.upper)
                .map_or(self.default_score, |b| b.score),
        )
    }

    /// SAPS-II-style breakpoints for heart rate, systolic blood pressure,
    /// GCS, temperature and age. Clinical fidelity is not claimed.
    pub fn builtin() -> Self {
        fn bins(spec: &[(f64, f64, u32)]) -> Vec<ScoreBin> {
            spec.iter()
                .map(|&(lower, upper, score)| ScoreBin {
                    lower,
                    upper,
                    score,
                })
                .collect()
        }
        let mut variables = BTreeMap::new();
        variables.insert(
            "heart_rate".to_string(),
            bins(&[
                (0.0, 40.0, 11),
                (40.0, 70.0, 2),
                (70.0, 120.0, 0),
                (120.0, 160.0, 4),
                (160.0, 400.0, 7),
            ]),
        );
        variables.insert(
            "blood_pressure".to_string(),
            bins(&[
                (0.0, 70.0, 13),
                (70.0, 100.0, 5),
                (100.0, 200.0, 0),
                (200.0, 400.0, 2),
            ]),
        );
        variables.insert(
            "gcs".to_string(),
            bins(&[
                (0.0, 6.0, 26),
                (6.0, 9.0, 13),
                (9.0, 11.0, 7),
                (11.0, 14.0, 5),
                (14.0, 16.0, 0),
            ]),
        );
        variables.insert(
            "temperature".to_string(),
            bins(&[(0.0, 39.0, 0), (39.0, 50.0, 3)]),
        );
        variables.insert(
            "age".to_string(),
            bins(&[
                (0.0, 40.0, 0),
                (40.0, 60.0, 7),
                (60.0, 70.0, 12),
                (70.0, 75.0, 15),
                (75.0, 80.0, 16),
                (80.0, 150.0, 18),
            ]),
        );
        ScoreTable {
            default_score: 0,
            variables,
        }
    }
}
