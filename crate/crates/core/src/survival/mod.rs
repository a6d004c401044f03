//! Per-window censored exponential survival fits, the cumulative-hazard
//! death prior, and training labels for the hidden states.
//!
//! All durations are in hours; a target day `D` is `24·D` hours.

mod normalize;
mod regression;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NewtonOptions;

pub use normalize::{silverman_bandwidth, DeathProbabilityNormalizer, GaussianKde};
pub use regression::{
    fit_exponential_regression, fit_exponential_screened, CensoredExponential, WindowFit,
};

const HAZARD_EXPONENT_LIMIT: f64 = 700.0;

/// How the per-window exposure `V_t` relates to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// `V_t = 24·D + n·t`.
    #[default]
    AsPrinted,
    /// `V_t = 24·D − n·t`, the time still ahead of window `t`.
    Remaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target_day: u32,
    pub window_hours: u32,
    pub duration_mode: DurationMode,
}

impl TargetSpec {
    pub fn new(target_day: u32, window_hours: u32, duration_mode: DurationMode) -> Result<Self> {
        if target_day == 0 {
            return Err(Error::Config("target_day must be positive".into()));
        }
        if !(1..=24).contains(&window_hours) {
            return Err(Error::Config(format!(
                "window_hours must be in 1..=24, got {window_hours}"
            )));
        }
        Ok(TargetSpec {
            target_day,
            window_hours,
            duration_mode,
        })
    }

    pub fn target_hours(&self) -> f64 {
        24.0 * f64::from(self.target_day)
    }

    pub fn n_windows(&self) -> usize {
        (24 / self.window_hours) as usize
    }

    /// `V_t` for the 1-based window `t`.
    pub fn exposure_duration(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.n_windows() {
            return Err(Error::Range(format!(
                "window index {t} outside 1..={}",
                self.n_windows()
            )));
        }
        let elapsed = f64::from(self.window_hours) * t as f64;
        match self.duration_mode {
            DurationMode::AsPrinted => Ok(self.target_hours() + elapsed),
            DurationMode::Remaining => {
                if elapsed >= self.target_hours() {
                    return Err(Error::Range(format!(
                        "window {t} ends at {elapsed} h, not before the {} h target",
                        self.target_hours()
                    )));
                }
                Ok(self.target_hours() - elapsed)
            }
        }
    }
}

/// Hazard `exp(β·x)` in events per hour.
pub fn hazard(beta: &[f64], x: &[f64]) -> Result<f64> {
    if beta.len() != x.len() {
        return Err(Error::Dimension(format!(
            "coefficients of length {} against features of length {}",
            beta.len(),
            x.len()
        )));
    }
    let lp: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum();
    if lp > HAZARD_EXPONENT_LIMIT {
        return Err(Error::HazardOverflow(lp));
    }
    if lp < -HAZARD_EXPONENT_LIMIT {
        log::warn!("hazard underflow (linear predictor {lp:.1}); clamping");
        return Ok(f64::MIN_POSITIVE);
    }
    Ok(lp.exp())
}

/// Prior probability of the Death state, `1 − exp(−λ·V)`.
pub fn death_prior(rate: f64, duration: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) || !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Range(format!(
            "death prior needs positive rate and duration, got {rate} and {duration}"
        )));
    }
    Ok(-(-rate * duration).exp_m1())
}

/// Prefixes the intercept column to a window feature row.
pub fn design_row(features: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(features.len() + 1);
    row.push(1.0);
    row.extend_from_slice(features);
    row
}

/// One regression per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFit {
    pub windows: Vec<WindowFit>,
}

impl SurvivalFit {
    /// `window_rows[i][t]` is subject `i`'s feature row for window `t`
    /// (without intercept). Follow-up is censored at the target.
    pub fn fit(
        window_rows: &[Vec<Vec<f64>>],
        event_hours: &[f64],
        died: &[bool],
        target: &TargetSpec,
    ) -> Result<Self> {
        let opts = NewtonOptions::default();
        let exposure: Vec<f64> = event_hours
            .iter()
            .map(|h| h.min(target.target_hours()))
            .collect();
        let windows = (0..target.n_windows())
            .map(|t| {
                let rows: Vec<Vec<f64>> = window_rows.iter().map(|w| design_row(&w[t])).collect();
                fit_exponential_screened(&rows, &exposure, died, &opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SurvivalFit { windows })
    }

    /// Death priors `θ_1..θ_T` for one subject's window rows.
    pub fn death_priors(&self, rows: &[Vec<f64>], target: &TargetSpec) -> Result<Vec<f64>> {
        if rows.len() != self.windows.len() {
            return Err(Error::Dimension(format!(
                "{} window rows for {} fitted windows",
                rows.len(),
                self.windows.len()
            )));
        }
        rows.iter()
            .zip(&self.windows)
            .enumerate()
            .map(|(t, (row, fit))| {
                let rate = hazard(&fit.beta, &design_row(row))?;
                death_prior(rate, target.exposure_duration(t + 1)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenState {
    Survival,
    Death,
}

impl HiddenState {
    pub fn index(self) -> usize {
        match self {
            HiddenState::Survival => 0,
            HiddenState::Death => 1,
        }
    }

    pub const ALL: [HiddenState; 2] = [HiddenState::Survival, HiddenState::Death];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLabels {
    pub states: Vec<HiddenState>,
    /// Normalized death probability for windows `1..T-1`.
    pub normalized: Vec<f64>,
}

/// Training hidden states. The last window copies the by-target outcome;
/// earlier windows are Death iff the density-normalized prior is ≥ 0.5,
/// with one normalizer per window fit on that window's training priors.
pub fn label_hidden_states(priors: &[Vec<f64>], died: &[bool]) -> Result<Vec<StateLabels>> {
    if priors.len() != died.len() {
        return Err(Error::Dimension("priors and outcomes differ in length".into()));
    }
    let n_windows = priors.first().map_or(0, Vec::len);
    if priors.iter().any(|p| p.len() != n_windows) || n_windows == 0 {
        return Err(Error::Dimension("ragged or empty prior rows".into()));
    }
    let normalizers = (0..n_windows - 1)
        .map(|t| {
            let samples: Vec<(f64, bool)> = priors.iter().zip(died).map(|(p, &d)| (p[t], d)).collect();
            DeathProbabilityNormalizer::fit(&samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(priors
        .iter()
        .zip(died)
        .map(|(p, &d)| {
            let normalized: Vec<f64> = normalizers
                .iter()
                .enumerate()
                .map(|(t, n)| n.normalize(p[t]))
                .collect();
            let mut states: Vec<HiddenState> = normalized
                .iter()
                .map(|&q| if q >= 0.5 { HiddenState::Death } else { HiddenState::Survival })
                .collect();
            states.push(if d { HiddenState::Death } else { HiddenState::Survival });
            StateLabels { states, normalized }
        })
        .collect())
}
