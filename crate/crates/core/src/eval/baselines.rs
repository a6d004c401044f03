//! Comparison scorers built on the per-variable 24-hour maximum score.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::optim::{self, ConcaveObjective, NewtonOptions};
use crate::survival::{fit_exponential_screened, WindowFit};
use crate::survival::{death_prior, design_row, hazard};

/// Largest score per variable over the windows; a variable never measured
/// scores 0.
pub fn max_scores(matrix: &FeatureMatrix) -> Vec<f64> {
    let p = matrix.scores.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| {
            matrix
                .scores
                .iter()
                .filter_map(|row| row[j])
                .max()
                .map_or(0.0, f64::from)
        })
        .collect()
}

/// SAPS-style score: the sum of the per-variable maxima.
pub fn saps_score(max_scores: &[f64]) -> f64 {
    max_scores.iter().sum()
}

/// Binomial log-likelihood with a logit link.
pub struct LogisticLikelihood<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
}

impl<'a> LogisticLikelihood<'a> {
    pub fn new(rows: &'a [Vec<f64>], labels: &'a [bool]) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::Dimension("logistic design and labels must align".into()));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged logistic design".into()));
        }
        Ok(LogisticLikelihood { rows, labels })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl ConcaveObjective for LogisticLikelihood<'_> {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(self.labels)
            .map(|(x, &y)| {
                let z = dot(beta, x);
                if y { z - softplus(z) } else { -softplus(z) }
            })
            .sum()
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (x, &y) in self.rows.iter().zip(self.labels) {
            let r = f64::from(u8::from(y)) - sigmoid(dot(beta, x));
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
        g
    }

    fn hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for x in self.rows {
            let p = sigmoid(dot(beta, x));
            let w = p * (1.0 - p);
            for a in 0..d {
                for b in 0..=a {
                    h[(a, b)] -= w * x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
}

impl LogisticModel {
    /// Newton fit on design rows that start with the intercept column.
    /// Constant or single-column separating covariates are pinned at 0;
    /// any remaining divergence is a separation error.
    pub fn fit(rows: &[Vec<f64>], labels: &[bool]) -> Result<Self> {
        let positives = labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::InsufficientData("logistic fit needs both classes".into()));
        }
        let negatives: Vec<bool> = labels.iter().map(|l| !l).collect();
        let pinned = optim::degenerate_columns(rows, &[labels, &negatives]);
        let keep: Vec<usize> = (0..pinned.len()).filter(|&j| !pinned[j]).collect();
        let reduced: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j]).collect())
            .collect();
        let objective = LogisticLikelihood::new(&reduced, labels)?;
        let prevalence = positives as f64 / labels.len() as f64;
        let mut start = vec![0.0; keep.len()];
        start[0] = (prevalence / (1.0 - prevalence)).ln();
        let out = optim::maximize(&objective, start, &NewtonOptions::default())?;
        let mut beta = vec![0.0; pinned.len()];
        for (&j, b) in keep.iter().zip(&out.beta) {
            beta[j] = *b;
        }
        Ok(LogisticModel { beta })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(dot(&self.beta, row))
    }
}

/// Exponential survival regression on the 24-hour maxima; the risk is the
/// probability of death by the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSurvivalBaseline {
    pub fit: WindowFit,
    pub target_hours: f64,
}

impl ExpSurvivalBaseline {
    pub fn fit(
        max_scores: &[Vec<f64>],
        event_hours: &[f64],
        died_by_target: &[bool],
        target_hours: f64,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = max_scores.iter().map(|r| design_row(r)).collect();
        let exposure: Vec<f64> = event_hours.iter().map(|h| h.min(target_hours)).collect();
        let fit = fit_exponential_screened(&rows, &exposure, died_by_target, &NewtonOptions::default())?;
        Ok(ExpSurvivalBaseline { fit, target_hours })
    }

    pub fn score(&self, max_scores: &[f64]) -> Result<f64> {
        self.score_at(max_scores, self.target_hours)
    }

    pub fn score_at(&self, max_scores: &[f64], hours: f64) -> Result<f64> {
        death_prior(hazard(&self.fit.beta, &design_row(max_scores))?, hours)
    }
}
