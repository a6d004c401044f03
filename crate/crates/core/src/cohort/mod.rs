//! Patient data model, CSV ingestion, cohort filters and the synthetic
//! cohort generator.
//!
//! Offsets are integer minutes since ICU admission; outcome times are real
//! hours. Patients are keyed by an opaque string id and stored in ordered
//! maps so every downstream iteration order is deterministic.

mod io;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    ingest_observations, ingest_outcomes, write_observations, write_outcomes,
    OBSERVATIONS_HEADER, OUTCOMES_HEADER,
};
pub use synth::{generate_synthetic_cohort, synthetic_variable_names, SynthConfig, REFERENCE_DAY};

/// Minutes in the first ICU day; only samples before this feed the model.
pub const FIRST_DAY_MINUTES: u32 = 1440;

/// Minimum ICU stay (hours) for a patient to qualify.
pub const MIN_STAY_HOURS: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub patient_id: String,
    pub variable: String,
    pub offset_minutes: u32,
    pub value: f64,
}

impl RawObservation {
    /// True for samples recorded after the first 24 hours. They are kept on
    /// ingestion but never reach the feature pipeline.
    pub fn is_late(&self) -> bool {
        self.offset_minutes >= FIRST_DAY_MINUTES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientOutcome {
    pub patient_id: String,
    /// Hours from admission to death or ICU discharge.
    pub event_hours: f64,
    pub death_flag: bool,
}

impl PatientOutcome {
    /// Death at or before `hours`.
    pub fn died_by(&self, hours: f64) -> bool {
        self.death_flag && self.event_hours <= hours
    }

    /// Observed exposure when follow-up is administratively censored at `hours`.
    pub fn exposure_until(&self, hours: f64) -> f64 {
        self.event_hours.min(hours)
    }
}

/// Observations grouped per patient, each list sorted by offset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationTable {
    pub patients: BTreeMap<String, Vec<RawObservation>>,
}

impl ObservationTable {
    pub fn late_observations(&self) -> usize {
        self.patients
            .values()
            .flat_map(|obs| obs.iter())
            .filter(|o| o.is_late())
            .count()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeTable {
    pub outcomes: BTreeMap<String, PatientOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawCohort {
    pub patients: BTreeMap<String, Vec<RawObservation>>,
    pub outcomes: BTreeMap<String, PatientOutcome>,
}

impl RawCohort {
    /// Joins observations with outcomes. Both sides must cover the same
    /// patient ids.
    pub fn new(observations: ObservationTable, outcomes: OutcomeTable) -> Result<Self> {
        if let Some(id) = observations
            .patients
            .keys()
            .find(|id| !outcomes.outcomes.contains_key(*id))
        {
            return Err(Error::InsufficientData(format!(
                "patient `{id}` has observations but no outcome"
            )));
        }
        if let Some(id) = outcomes
            .outcomes
            .keys()
            .find(|id| !observations.patients.contains_key(*id))
        {
            return Err(Error::InsufficientData(format!(
                "patient `{id}` has an outcome but no observations"
            )));
        }
        Ok(RawCohort {
            patients: observations.patients,
            outcomes: outcomes.outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn observations(&self) -> ObservationTable {
        ObservationTable {
            patients: self.patients.clone(),
        }
    }

    /// Keeps only the listed patient ids.
    pub fn subset<'a, I>(&self, ids: I) -> RawCohort
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = RawCohort::default();
        for id in ids {
            if let (Some(obs), Some(outcome)) = (self.patients.get(id), self.outcomes.get(id)) {
                out.patients.insert(id.to_string(), obs.clone());
                out.outcomes.insert(id.to_string(), outcome.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterSummary {
    pub kept: usize,
    pub dropped_short_stay: usize,
    pub dropped_incomplete: usize,
}

/// Inclusion criteria: a minimum stay and complete coverage of the required
/// variables in every time window of the first day.
#[derive(Debug, Clone)]
pub struct CohortFilter {
    pub required_variables: Vec<String>,
    pub window_hours: u32,
    pub min_stay_hours: f64,
}

impl CohortFilter {
    pub fn new(required_variables: Vec<String>, window_hours: u32) -> Result<Self> {
        if window_hours == 0 || window_hours > 24 {
            return Err(Error::Config(format!(
                "window_hours must be in 1..=24, got {window_hours}"
            )));
        }
        Ok(CohortFilter {
            required_variables,
            window_hours,
            min_stay_hours: MIN_STAY_HOURS,
        })
    }

    pub fn default_required() -> Vec<String> {
        ["heart_rate", "blood_pressure", "gcs"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn is_complete(&self, observations: &[RawObservation]) -> bool {
        let n_windows = (24 / self.window_hours) as usize;
        let width = self.window_hours * 60;
        self.required_variables.iter().all(|var| {
            let mut seen = vec![false; n_windows];
            for o in observations.iter().filter(|o| &o.variable == var) {
                let w = (o.offset_minutes / width) as usize;
                if w < n_windows {
                    seen[w] = true;
                }
            }
            seen.into_iter().all(|s| s)
        })
    }

    pub fn apply(&self, cohort: &RawCohort) -> (RawCohort, FilterSummary) {
        let mut summary = FilterSummary::default();
        let mut out = RawCohort::default();
        for (id, outcome) in &cohort.outcomes {
            if outcome.event_hours < self.min_stay_hours {
                summary.dropped_short_stay += 1;
                continue;
            }
            let obs = cohort.patients.get(id).map(Vec::as_slice).unwrap_or(&[]);
            if !self.is_complete(obs) {
                summary.dropped_incomplete += 1;
                continue;
            }
            summary.kept += 1;
            out.patients.insert(id.clone(), obs.to_vec());
            out.outcomes.insert(id.clone(), outcome.clone());
        }
        (out, summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: &str, var: &str, offset: u32) -> RawObservation {
        RawObservation {
            patient_id: id.into(),
            variable: var.into(),
            offset_minutes: offset,
            value: 1.0,
        }
    }

    fn outcome(id: &str, hours: f64, died: bool) -> PatientOutcome {
        PatientOutcome {
            patient_id: id.into(),
            event_hours: hours,
            death_flag: died,
        }
    }

    #[test]
    fn join_requires_matching_ids() {
        let mut o = ObservationTable::default();
        o.patients.insert("p1".into(), vec![obs("p1", "hr", 0)]);
        let mut t = OutcomeTable::default();
        t.outcomes.insert("p2".into(), outcome("p2", 30.0, false));
        assert!(RawCohort::new(o, t).is_err());
    }

    #[test]
    fn filter_drops_short_stays_and_gaps() {
        let mut c = RawCohort::default();
        let full = vec![obs("a", "hr", 10), obs("a", "hr", 800)];
        let gap = vec![obs("b", "hr", 10)];
        c.patients.insert("a".into(), full.clone());
        c.patients.insert("b".into(), gap);
        c.patients.insert("c".into(), full);
        c.outcomes.insert("a".into(), outcome("a", 30.0, false));
        c.outcomes.insert("b".into(), outcome("b", 30.0, true));
        c.outcomes.insert("c".into(), outcome("c", 20.0, true));
        let f = CohortFilter::new(vec!["hr".into()], 12).unwrap();
        let (kept, summary) = f.apply(&c);
        assert_eq!(kept.patients.keys().collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(
            summary,
            FilterSummary {
                kept: 1,
                dropped_short_stay: 1,
                dropped_incomplete: 1
            }
        );
    }

    #[test]
    fn exactly_one_day_stay_qualifies() {
        let mut c = RawCohort::default();
        c.patients.insert("a".into(), vec![obs("a", "hr", 0)]);
        c.outcomes.insert("a".into(), outcome("a", 24.0, true));
        let f = CohortFilter::new(vec![], 12).unwrap();
        assert_eq!(f.apply(&c).1.kept, 1);
    }

    #[test]
    fn outcome_helpers() {
        let o = outcome("a", 50.0, true);
        assert!(!o.died_by(48.0));
        assert!(o.died_by(72.0));
        assert_eq!(o.exposure_until(48.0), 48.0);
        assert_eq!(o.exposure_until(72.0), 50.0);
    }
}
