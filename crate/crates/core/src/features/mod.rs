//! From raw first-day observations to per-window discrete observation symbols.
//!
//! The first 24 hours are cut into `T = floor(24 / n)` windows of `n` hours.
//! Each variable is scored per sample against a [`ScoreTable`], aggregated by
//! its worst (highest) score in the window, paired with an occurrence
//! indicator, median-imputed, and finally each window row is labeled by its
//! nearest PAM medoid under Gower's distance.

mod gower;
mod pam;
mod score_table;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::{RawObservation, FIRST_DAY_MINUTES};
use crate::error::{Error, Result};

pub use gower::{ColumnKind, GowerSpace};
pub use pam::{pam_cluster, silhouette, DistanceMatrix, PamFit};
pub use score_table::{ScoreBin, ScoreTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub variables: Vec<String>,
    pub window_hours: u32,
}

impl FeatureSpec {
    pub fn new(variables: Vec<String>, window_hours: u32) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Config("at least one variable is required".into()));
        }
        if !(1..=24).contains(&window_hours) {
            return Err(Error::Config(format!(
                "window_hours must be in 1..=24, got {window_hours}"
            )));
        }
        Ok(FeatureSpec {
            variables,
            window_hours,
        })
    }

    pub fn n_windows(&self) -> usize {
        (24 / self.window_hours) as usize
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Length of a window row `[y_1..y_p, b_1..b_p]`.
    pub fn row_width(&self) -> usize {
        2 * self.variables.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// 0-based window of a minute offset, or `None` past the modeled span.
    pub fn window_of(&self, offset_minutes: u32) -> Option<usize> {
        if offset_minutes >= FIRST_DAY_MINUTES {
            return None;
        }
        let w = (offset_minutes / (60 * self.window_hours)) as usize;
        (w < self.n_windows()).then_some(w)
    }
}

/// `samples[t][j]`: values of variable `j` falling in window `t`.
pub type WindowedSamples = Vec<Vec<Vec<f64>>>;

/// Buckets one patient's samples into half-open windows
/// `[60·n·t, 60·n·(t+1))`. Variables outside the spec are skipped.
pub fn window_segment(observations: &[RawObservation], spec: &FeatureSpec) -> WindowedSamples {
    let mut out = vec![vec![Vec::new(); spec.n_variables()]; spec.n_windows()];
    for o in observations {
        let (Some(t), Some(j)) = (spec.window_of(o.offset_minutes), spec.variable_index(&o.variable))
        else {
            continue;
        };
        out[t][j].push(o.value);
    }
    out
}

/// Worst-case score per window and variable; `None` for empty windows.
pub fn discretize_scores(
    samples: &WindowedSamples,
    spec: &FeatureSpec,
    table: &ScoreTable,
) -> Result<Vec<Vec<Option<u32>>>> {
    if let Some(missing) = spec.variables.iter().find(|v| !table.contains(v)) {
        return Err(Error::Config(format!(
            "variable `{missing}` has no score table entry"
        )));
    }
    Ok(samples
        .iter()
        .map(|window| {
            window
                .iter()
                .zip(&spec.variables)
                .map(|(values, var)| {
                    values
                        .iter()
                        .map(|&v| table.score(var, v).expect("checked above"))
                        .max()
                })
                .collect()
        })
        .collect())
}

pub fn missingness_indicators(samples: &WindowedSamples) -> Vec<Vec<bool>> {
    samples
        .iter()
        .map(|w| w.iter().map(|values| !values.is_empty()).collect())
        .collect()
}

/// One patient's window rows: worst-case scores (possibly missing before
/// imputation) and occurrence indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub scores: Vec<Vec<Option<u32>>>,
    pub present: Vec<Vec<bool>>,
}

impl FeatureMatrix {
    pub fn build(
        observations: &[RawObservation],
        spec: &FeatureSpec,
        table: &ScoreTable,
    ) -> Result<Self> {
        let samples = window_segment(observations, spec);
        Ok(FeatureMatrix {
            scores: discretize_scores(&samples, spec, table)?,
            present: missingness_indicators(&samples),
        })
    }

    pub fn n_windows(&self) -> usize {
        self.scores.len()
    }

    pub fn is_complete(&self) -> bool {
        self.scores.iter().flatten().all(Option::is_some)
    }

    /// `[y_1..y_p, b_1..b_p]` for window `t`; `None` if any score is missing.
    pub fn row(&self, t: usize) -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(2 * self.scores[t].len());
        for s in &self.scores[t] {
            row.push(f64::from((*s)?));
        }
        row.extend(self.present[t].iter().map(|&b| if b { 1.0 } else { 0.0 }));
        Some(row)
    }

    pub fn rows(&self) -> Option<Vec<Vec<f64>>> {
        (0..self.n_windows()).map(|t| self.row(t)).collect()
    }
}

fn median(values: &mut [u32]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        f64::from(values[n / 2])
    } else {
        0.5 * (f64::from(values[n / 2 - 1]) + f64::from(values[n / 2]))
    })
}

/// Half-up rounding of a median to an integer score.
fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

/// Training medians per (window, variable), with a per-variable fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub cells: Vec<Vec<Option<f64>>>,
    pub global: Vec<Option<f64>>,
}

impl Medians {
    pub fn fit<'a, I>(matrices: I, spec: &FeatureSpec) -> Self
    where
        I: IntoIterator<Item = &'a FeatureMatrix>,
    {
        let (t_n, p) = (spec.n_windows(), spec.n_variables());
        let mut cell_values = vec![vec![Vec::new(); p]; t_n];
        let mut global_values = vec![Vec::new(); p];
        for m in matrices {
            for (t, row) in m.scores.iter().enumerate() {
                for (j, s) in row.iter().enumerate() {
                    if let Some(s) = *s {
                        cell_values[t][j].push(s);
                        global_values[j].push(s);
                    }
                }
            }
        }
        Medians {
            cells: cell_values
                .iter_mut()
                .map(|row| row.iter_mut().map(|v| median(v)).collect())
                .collect(),
            global: global_values.iter_mut().map(|v| median(v)).collect(),
        }
    }

    /// Imputed score for window `t`, variable `j`.
    pub fn fill(&self, t: usize, j: usize) -> Result<u32> {
        self.cells
            .get(t)
            .and_then(|row| row.get(j).copied().flatten())
            .or_else(|| self.global.get(j).copied().flatten())
            .map(round_half_up)
            .ok_or_else(|| {
                Error::InsufficientData(format!(
                    "no training values for variable {j} in any window"
                ))
            })
    }
}

/// Replaces missing scores by training medians. Indicators are untouched.
pub fn impute_median(matrix: &FeatureMatrix, medians: &Medians) -> Result<FeatureMatrix> {
    let mut out = matrix.clone();
    for (t, row) in out.scores.iter_mut().enumerate() {
        for (j, s) in row.iter_mut().enumerate() {
            if s.is_none() {
                *s = Some(medians.fill(t, j)?);
            }
        }
    }
    Ok(out)
}

/// Cluster labels `x_1..x_T`, each in `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSequence(pub Vec<u32>);

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub medoids: Vec<Vec<f64>>,
    pub space: GowerSpace,
}

impl ClusterModel {
    /// Fits PAM over pooled window rows. Returns the model and the 1-based
    /// label of every input row.
    pub fn fit(rows: &[Vec<f64>], n_variables: usize, k: usize) -> Result<(Self, Vec<u32>)> {
        let space = GowerSpace::fit_feature_rows(rows, n_variables)?;
        let fit = pam_cluster(rows, k, &space)?;
        let model = ClusterModel {
            k,
            medoids: fit.medoids.iter().map(|&i| rows[i].clone()).collect(),
            space,
        };
        let labels = fit.assignments.iter().map(|&c| c as u32 + 1).collect();
        Ok((model, labels))
    }

    /// 1-based label of the nearest medoid; ties go to the lower label.
    pub fn assign(&self, row: &[f64]) -> Result<u32> {
        let mut best = (0usize, f64::INFINITY);
        for (c, m) in self.medoids.iter().enumerate() {
            let d = self.space.distance(row, m)?;
            if d < best.1 {
                best = (c, d);
            }
        }
        Ok(best.0 as u32 + 1)
    }

    /// Labels every window of a complete (imputed) matrix.
    pub fn encode(&self, matrix: &FeatureMatrix) -> Result<ObservationSequence> {
        let rows = matrix
            .rows()
            .ok_or_else(|| Error::InsufficientData("matrix must be imputed before encoding".into()))?;
        rows.iter()
            .map(|r| self.assign(r))
            .collect::<Result<Vec<_>>>()
            .map(ObservationSequence)
    }
}

/// Debug export: `patient_id,window,y_1..y_p,b_1..b_p` (1-based windows,
/// empty cells for missing scores).
pub fn write_feature_csv<'a, W, I>(writer: W, spec: &FeatureSpec, matrices: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a String, &'a FeatureMatrix)>,
{
    let mut w = csv::Writer::from_writer(writer);
    let p = spec.n_variables();
    let mut header = vec!["patient_id".to_string(), "window".to_string()];
    header.extend((1..=p).map(|j| format!("y_{j}")));
    header.extend((1..=p).map(|j| format!("b_{j}")));
    w.write_record(&header)?;
    for (id, m) in matrices {
        for t in 0..m.n_windows() {
            let mut rec = vec![id.clone(), (t + 1).to_string()];
            rec.extend(
                m.scores[t]
                    .iter()
                    .map(|s| s.map(|v| v.to_string()).unwrap_or_default()),
            );
            rec.extend(m.present[t].iter().map(|&b| u8::from(b).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Builds raw (unimputed) matrices for every patient in `patients`.
pub fn build_matrices(
    patients: &BTreeMap<String, Vec<RawObservation>>,
    spec: &FeatureSpec,
    table: &ScoreTable,
) -> Result<BTreeMap<String, FeatureMatrix>> {
    patients
        .iter()
        .map(|(id, obs)| Ok((id.clone(), FeatureMatrix::build(obs, spec, table)?)))
        .collect()
}
