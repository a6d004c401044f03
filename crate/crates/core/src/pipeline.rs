//! Training and scoring of the full risk model: features, per-window
//! survival fits, state labeling and emissions, one bundle per target day.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{RawCohort, RawObservation, FIRST_DAY_MINUTES};
use crate::error::{Error, Result};
use crate::eval::baselines::max_scores;
use crate::features::{
    impute_median, ClusterModel, FeatureMatrix, FeatureSpec, Medians, ObservationSequence,
    ScoreTable,
};
use crate::hmm::{risk_score, survival_curves, CurveGroup, CurvePoint, EmissionModel, RiskScore};
use crate::survival::{label_hidden_states, DurationMode, StateLabels, SurvivalFit, TargetSpec};

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window_hours: u32,
    pub k_clusters: usize,
    pub target_days: Vec<u32>,
    pub duration_mode: DurationMode,
    pub smoothing: f64,
    pub required_variables: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_hours: 12,
            k_clusters: 4,
            target_days: vec![2, 3, 4, 5],
            duration_mode: DurationMode::AsPrinted,
            smoothing: 1.0,
            required_variables: crate::cohort::CohortFilter::default_required(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_hours == 0 || self.window_hours > 24 {
            return Err(Error::Config(format!("window_hours must be in 1..=24, got {}", self.window_hours)));
        }
        if self.k_clusters == 0 {
            return Err(Error::Config("k_clusters must be positive".into()));
        }
        if self.target_days.is_empty() || self.target_days.contains(&0) {
            return Err(Error::Config("target_days must be a non-empty list of positive days".into()));
        }
        let distinct: BTreeSet<u32> = self.target_days.iter().copied().collect();
        if distinct.len() != self.target_days.len() {
            return Err(Error::Config("target_days contains duplicates".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        for &d in &self.target_days {
            let target = TargetSpec::new(d, self.window_hours, self.duration_mode)?;
            for t in 1..=target.n_windows() {
                target.exposure_duration(t)?;
            }
        }
        Ok(())
    }

    pub fn sorted_days(&self) -> Vec<u32> {
        let mut d = self.target_days.clone();
        d.sort_unstable();
        d
    }
}

/// One patient after feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub raw: FeatureMatrix,
    /// Imputed `[y.., b..]` rows, one per window.
    pub rows: Vec<Vec<f64>>,
    pub sequence: ObservationSequence,
    /// Per-variable 24-hour maxima before imputation.
    pub max_scores: Vec<f64>,
}

/// Everything needed to turn raw observations into a symbol sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub score_table: ScoreTable,
    pub spec: FeatureSpec,
    pub medians: Medians,
    pub cluster: ClusterModel,
}

/// Variables with at least one first-day sample, sorted.
pub fn observed_variables<'a, I>(patients: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a Vec<RawObservation>>,
{
    let set: BTreeSet<&str> = patients
        .into_iter()
        .flatten()
        .filter(|o| o.offset_minutes < FIRST_DAY_MINUTES)
        .map(|o| o.variable.as_str())
        .collect();
    set.into_iter().map(str::to_string).collect()
}

impl FeaturePipeline {
    pub fn fit(
        patients: &BTreeMap<String, Vec<RawObservation>>,
        score_table: ScoreTable,
        window_hours: u32,
        k: usize,
    ) -> Result<(Self, BTreeMap<String, Encoded>)> {
        if patients.is_empty() {
            return Err(Error::InsufficientData("no training patients".into()));
        }
        let variables = observed_variables(patients.values());
        if let Some(v) = variables.iter().find(|v| !score_table.contains(v)) {
            return Err(Error::Config(format!("variable `{v}` has no score-table entry")));
        }
        let spec = FeatureSpec::new(variables, window_hours)?;
        let raw: Vec<(&String, FeatureMatrix)> = patients
            .par_iter()
            .map(|(id, obs)| Ok((id, FeatureMatrix::build(obs, &spec, &score_table)?)))
            .collect::<Result<_>>()?;
        let medians = Medians::fit(raw.iter().map(|(_, m)| m), &spec);
        let imputed: Vec<FeatureMatrix> = raw
            .iter()
            .map(|(_, m)| impute_median(m, &medians))
            .collect::<Result<_>>()?;
        let pooled: Vec<Vec<f64>> = imputed
            .iter()
            .flat_map(|m| m.rows().expect("imputed"))
            .collect();
        let (cluster, labels) = ClusterModel::fit(&pooled, spec.n_variables(), k)?;
        let t_n = spec.n_windows();
        let encoded = raw
            .into_iter()
            .zip(imputed)
            .enumerate()
            .map(|(i, ((id, raw), imp))| {
                let rows = imp.rows().expect("imputed");
                let sequence = ObservationSequence(labels[i * t_n..(i + 1) * t_n].to_vec());
                let max = max_scores(&raw);
                (id.clone(), Encoded { raw, rows, sequence, max_scores: max })
            })
            .collect();
        Ok((
            FeaturePipeline {
                score_table,
                spec,
                medians,
                cluster,
            },
            encoded,
        ))
    }

    /// Rejects first-day samples of variables the model was not trained on.
    pub fn check_variables(&self, observations: &[RawObservation]) -> Result<()> {
        match observations
            .iter()
            .find(|o| o.offset_minutes < FIRST_DAY_MINUTES && self.spec.variable_index(&o.variable).is_none())
        {
            Some(o) => Err(Error::Config(format!(
                "patient `{}`: variable `{}` is not part of the model",
                o.patient_id, o.variable
            ))),
            None => Ok(()),
        }
    }

    pub fn encode(&self, observations: &[RawObservation]) -> Result<Encoded> {
        self.check_variables(observations)?;
        let raw = FeatureMatrix::build(observations, &self.spec, &self.score_table)?;
        let imputed = impute_median(&raw, &self.medians)?;
        let sequence = self.cluster.encode(&imputed)?;
        let max = max_scores(&raw);
        Ok(Encoded {
            rows: imputed.rows().expect("imputed"),
            raw,
            sequence,
            max_scores: max,
        })
    }
}

/// Target-day specific parts of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayModel {
    pub target: TargetSpec,
    pub survival: SurvivalFit,
    pub emissions: EmissionModel,
}

impl DayModel {
    pub fn score(&self, id: &str, encoded: &Encoded) -> Result<RiskScore> {
        let priors = self.survival.death_priors(&encoded.rows, &self.target)?;
        let eta = risk_score(&priors, &self.emissions, &encoded.sequence)?;
        Ok(RiskScore {
            patient_id: id.to_string(),
            eta,
            priors,
            sequence: encoded.sequence.clone(),
        })
    }
}

/// The trained bundle. Serializes as `{"config", "features", "models"}`
/// with `models` keyed by target day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub config: ModelConfig,
    pub features: FeaturePipeline,
    pub models: BTreeMap<u32, DayModel>,
}

/// Intermediate training artifacts, for inspection.
#[derive(Debug, Clone)]
pub struct TrainingDetails {
    pub encoded: BTreeMap<String, Encoded>,
    pub states: BTreeMap<u32, Vec<StateLabels>>,
}

impl RiskModel {
    /// Fits on an already filtered cohort.
    pub fn train(cohort: &RawCohort, score_table: ScoreTable, config: &ModelConfig) -> Result<(Self, TrainingDetails)> {
        config.validate()?;
        let (features, encoded) =
            FeaturePipeline::fit(&cohort.patients, score_table, config.window_hours, config.k_clusters)?;
        let ids: Vec<&String> = encoded.keys().collect();
        let outcomes: Vec<_> = ids
            .iter()
            .map(|id| {
                cohort
                    .outcomes
                    .get(*id)
                    .ok_or_else(|| Error::InsufficientData(format!("patient `{id}` has no outcome")))
            })
            .collect::<Result<_>>()?;
        let event_hours: Vec<f64> = outcomes.iter().map(|o| o.event_hours).collect();
        let window_rows: Vec<Vec<Vec<f64>>> = ids.iter().map(|id| encoded[*id].rows.clone()).collect();
        let sequences: Vec<ObservationSequence> = ids.iter().map(|id| encoded[*id].sequence.clone()).collect();

        let mut models = BTreeMap::new();
        let mut states = BTreeMap::new();
        for day in config.sorted_days() {
            let target = TargetSpec::new(day, config.window_hours, config.duration_mode)?;
            let died: Vec<bool> = outcomes.iter().map(|o| o.died_by(target.target_hours())).collect();
            let survival = SurvivalFit::fit(&window_rows, &event_hours, &died, &target)?;
            let priors: Vec<Vec<f64>> = window_rows
                .par_iter()
                .map(|rows| survival.death_priors(rows, &target))
                .collect::<Result<_>>()?;
            let labels = label_hidden_states(&priors, &died)?;
            let path: Vec<_> = labels.iter().map(|l| l.states.clone()).collect();
            let emissions = EmissionModel::estimate(&sequences, &path, config.k_clusters, config.smoothing)?;
            models.insert(
                day,
                DayModel {
                    target,
                    survival,
                    emissions,
                },
            );
            states.insert(day, labels);
        }
        Ok((
            RiskModel {
                config: config.clone(),
                features,
                models,
            },
            TrainingDetails { encoded, states },
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.features.spec.n_variables();
        let t_n = self.features.spec.n_windows();
        let k = self.features.cluster.k;
        if self.features.cluster.medoids.iter().any(|m| m.len() != 2 * p) {
            return Err(Error::Dimension("medoid width disagrees with the feature spec".into()));
        }
        for (day, m) in &self.models {
            if m.target.target_day != *day || m.target.n_windows() != t_n {
                return Err(Error::Dimension(format!("day {day} model disagrees with the feature spec")));
            }
            if m.emissions.k != k || m.survival.windows.iter().any(|w| w.beta.len() != 2 * p + 1) {
                return Err(Error::Dimension(format!("day {day} model has inconsistent dimensions")));
            }
        }
        Ok(())
    }

    pub fn days(&self) -> Vec<u32> {
        self.models.keys().copied().collect()
    }

    /// Risk for every target day.
    pub fn score(&self, id: &str, observations: &[RawObservation]) -> Result<BTreeMap<u32, RiskScore>> {
        let encoded = self.features.encode(observations)?;
        self.score_encoded(id, &encoded)
    }

    pub fn score_encoded(&self, id: &str, encoded: &Encoded) -> Result<BTreeMap<u32, RiskScore>> {
        self.models
            .iter()
            .map(|(&day, m)| Ok((day, m.score(id, encoded)?)))
            .collect()
    }

    /// `(patient_id, target_day, eta)` rows sorted by patient then day.
    pub fn predict(&self, patients: &BTreeMap<String, Vec<RawObservation>>) -> Result<Vec<(String, u32, f64)>> {
        let per_patient: Vec<Vec<(String, u32, f64)>> = patients
            .par_iter()
            .map(|(id, obs)| {
                Ok(self
                    .score(id, obs)?
                    .into_iter()
                    .map(|(day, r)| (id.clone(), day, r.eta))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(per_patient.into_iter().flatten().collect())
    }

    /// Group mean survival curves, grouped by the recorded outcome.
    pub fn survival_curves(&self, cohort: &RawCohort) -> Result<Vec<CurvePoint>> {
        let per_patient: Vec<(CurveGroup, BTreeMap<u32, f64>)> = cohort
            .patients
            .par_iter()
            .map(|(id, obs)| {
                let outcome = cohort
                    .outcomes
                    .get(id)
                    .ok_or_else(|| Error::InsufficientData(format!("patient `{id}` has no outcome")))?;
                let group = if outcome.death_flag { CurveGroup::Death } else { CurveGroup::Survival };
                let etas = self.score(id, obs)?.into_iter().map(|(d, r)| (d, r.eta)).collect();
                Ok((group, etas))
            })
            .collect::<Result<_>>()?;
        Ok(survival_curves(&per_patient))
    }
}
