//! Seeded synthetic cohorts that follow the model's own generative story:
//! a latent severity vector drives both the physiology and a log-linear
//! exponential death hazard, with independent discharge as censoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::{PatientOutcome, RawCohort, RawObservation, FIRST_DAY_MINUTES};
use crate::error::{Error, Result};

/// Day at which `prevalence_target` is calibrated.
pub const REFERENCE_DAY: u32 = 5;

/// Hazard weights on (baseline acuity, first-day trajectory, age factor).
const HAZARD_WEIGHTS: [f64; 3] = [0.9, 0.8, 0.4];
/// Mean of the post-first-day discharge delay, hours.
const DISCHARGE_MEAN_HOURS: f64 = 72.0;
/// Nobody is discharged during the first day.
const DISCHARGE_FLOOR_HOURS: f64 = 24.0;
const CALIBRATION_NODES: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub n_variables: usize,
    pub prevalence_target: f64,
    pub missing_rate: f64,
    pub sampling_rate_per_hour: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::Config("n_patients must be positive".into()));
        }
        if self.n_variables == 0 || self.n_variables > VARIABLES.len() {
            return Err(Error::Config(format!(
                "n_variables must be in 1..={}, got {}",
                VARIABLES.len(),
                self.n_variables
            )));
        }
        if !(self.prevalence_target > 0.0 && self.prevalence_target < 1.0) {
            return Err(Error::Config("prevalence_target must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must be in [0,1)".into()));
        }
        if !(self.sampling_rate_per_hour > 0.0 && self.sampling_rate_per_hour <= 60.0) {
            return Err(Error::Config(
                "sampling_rate_per_hour must be in (0, 60]".into(),
            ));
        }
        Ok(())
    }
}

/// One simulated physiological channel: `value = base + gain * severity(t) + noise`.
struct VariableModel {
    name: &'static str,
    base: f64,
    gain: f64,
    noise_sd: f64,
    lo: f64,
    hi: f64,
    integer: bool,
    /// Driven by the age factor instead of acute severity.
    age: bool,
}

const VARIABLES: [VariableModel; 5] = [
    VariableModel {
        name: "heart_rate",
        base: 90.0,
        gain: 22.0,
        noise_sd: 8.0,
        lo: 20.0,
        hi: 250.0,
        integer: false,
        age: false,
    },
    VariableModel {
        name: "blood_pressure",
        base: 118.0,
        gain: -18.0,
        noise_sd: 8.0,
        lo: 40.0,
        hi: 250.0,
        integer: false,
        age: false,
    },
    VariableModel {
        name: "gcs",
        base: 14.6,
        gain: -2.4,
        noise_sd: 0.8,
        lo: 3.0,
        hi: 15.0,
        integer: true,
        age: false,
    },
    VariableModel {
        name: "temperature",
        base: 37.2,
        gain: 0.6,
        noise_sd: 0.3,
        lo: 33.0,
        hi: 42.0,
        integer: false,
        age: false,
    },
    VariableModel {
        name: "age",
        base: 64.0,
        gain: 12.0,
        noise_sd: 0.0,
        lo: 18.0,
        hi: 100.0,
        integer: true,
        age: true,
    },
];

impl VariableModel {
    fn sample(&self, severity: f64, age_factor: f64, rng: &mut ChaCha8Rng) -> f64 {
        let drive = if self.age { age_factor } else { severity };
        let noise = if self.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.noise_sd * z
        } else {
            0.0
        };
        let v = (self.base + self.gain * drive + noise).clamp(self.lo, self.hi);
        if self.integer {
            v.round()
        } else {
            (v * 10.0).round() / 10.0
        }
    }
}

/// Probability of death by `reference_hours` for a patient with hazard
/// `rate`, under the discharge law above.
fn death_by_reference(rate: f64, reference_hours: f64) -> f64 {
    let mu = 1.0 / DISCHARGE_MEAN_HOURS;
    let first = -(-DISCHARGE_FLOOR_HOURS * rate).exp_m1();
    let rest = reference_hours - DISCHARGE_FLOOR_HOURS;
    if rest <= 0.0 {
        return -(-reference_hours * rate).exp_m1();
    }
    let total = rate + mu;
    first + rate * (-DISCHARGE_FLOOR_HOURS * rate).exp() * -(-rest * total).exp_m1() / total
}

/// Finds the log-hazard intercept so the expected death fraction by the
/// reference day equals `target`. Expectation over the Gaussian linear
/// predictor is taken by midpoint quadrature on normal quantiles.
fn calibrate_intercept(target: f64) -> f64 {
    let sd = HAZARD_WEIGHTS.iter().map(|w| w * w).sum::<f64>().sqrt();
    let std_normal = StatNormal::new(0.0, 1.0).expect("unit normal");
    let nodes: Vec<f64> = (0..CALIBRATION_NODES)
        .map(|k| sd * std_normal.inverse_cdf((k as f64 + 0.5) / CALIBRATION_NODES as f64))
        .collect();
    let reference_hours = 24.0 * REFERENCE_DAY as f64;
    let expected = |c0: f64| {
        nodes
            .iter()
            .map(|lp| death_by_reference((c0 + lp).exp(), reference_hours))
            .sum::<f64>()
            / nodes.len() as f64
    };
    let (mut lo, mut hi) = (-30.0_f64, 5.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct SimulatedPatient {
    observations: Vec<RawObservation>,
    outcome: PatientOutcome,
}

fn simulate_patient(
    cfg: &SynthConfig,
    index: usize,
    intercept: f64,
    interval_minutes: f64,
) -> SimulatedPatient {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let id = format!("p{index:05}");

    let latent: [f64; 3] = [
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
    ];
    let [acuity, trajectory, age_factor] = latent;
    let lp: f64 = HAZARD_WEIGHTS.iter().zip(latent).map(|(w, z)| w * z).sum();
    let rate = (intercept + lp).exp();
    let death_hours = Exp::new(rate).expect("positive rate").sample(&mut rng);
    let discharge_hours = DISCHARGE_FLOOR_HOURS
        + Exp::new(1.0 / DISCHARGE_MEAN_HOURS)
            .expect("positive rate")
            .sample(&mut rng);
    let died = death_hours < discharge_hours;
    let event_hours = death_hours.min(discharge_hours);

    let horizon = (FIRST_DAY_MINUTES as f64).min(event_hours * 60.0);
    let mut observations = Vec::new();
    let mut first_scheduled = None;
    let mut k = 0usize;
    loop {
        let minute = (k as f64 * interval_minutes).floor();
        if minute >= horizon {
            break;
        }
        let offset = minute as u32;
        let hours = minute / 60.0;
        // Severity drifts linearly across the first day: acuity at noon,
        // acuity -/+ trajectory at the day's start/end.
        let severity = acuity + trajectory * (hours / 12.0 - 1.0);
        for var in &VARIABLES[..cfg.n_variables] {
            let value = var.sample(severity, age_factor, &mut rng);
            if first_scheduled.is_none() {
                first_scheduled = Some((offset, var.name, value));
            }
            if rng.random::<f64>() < cfg.missing_rate {
                continue;
            }
            observations.push(RawObservation {
                patient_id: id.clone(),
                variable: var.name.to_string(),
                offset_minutes: offset,
                value,
            });
        }
        k += 1;
    }
    // Every patient keeps at least one sample so the two files cover the
    // same ids.
    if observations.is_empty() {
        if let Some((offset, name, value)) = first_scheduled {
            observations.push(RawObservation {
                patient_id: id.clone(),
                variable: name.to_string(),
                offset_minutes: offset,
                value,
            });
        }
    }
    SimulatedPatient {
        observations,
        outcome: PatientOutcome {
            patient_id: id,
            event_hours,
            death_flag: died,
        },
    }
}

/// Generates a cohort. Each patient draws from its own RNG stream derived
/// from the seed, so output does not depend on thread count.
pub fn generate_synthetic_cohort(cfg: &SynthConfig) -> Result<RawCohort> {
    cfg.validate()?;
    let intercept = calibrate_intercept(cfg.prevalence_target);
    let interval = 60.0 / cfg.sampling_rate_per_hour;
    let patients: Vec<SimulatedPatient> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|i| simulate_patient(cfg, i, intercept, interval))
        .collect();
    let mut cohort = RawCohort::default();
    for p in patients {
        let id = p.outcome.patient_id.clone();
        cohort.patients.insert(id.clone(), p.observations);
        cohort.outcomes.insert(id, p.outcome);
    }
    Ok(cohort)
}

/// Names of the variables the generator emits for `n_variables`.
pub fn synthetic_variable_names(n_variables: usize) -> Vec<&'static str> {
    VARIABLES[..n_variables.min(VARIABLES.len())]
        .iter()
        .map(|v| v.name)
        .collect()
}
