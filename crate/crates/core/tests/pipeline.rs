use std::collections::BTreeMap;

use chfhmm::cohort::{generate_synthetic_cohort, CohortFilter};
use chfhmm::hmm::{enumerate_mass, forward_mass};
use chfhmm::{DurationMode, ModelConfig, RawCohort, RiskModel, ScoreTable, SynthConfig};

fn cohort(seed: u64) -> RawCohort {
    cohort_with(seed, 0.25)
}

fn cohort_with(seed: u64, missing_rate: f64) -> RawCohort {
    let raw = generate_synthetic_cohort(&SynthConfig {
        n_patients: 1000,
        n_variables: 4,
        prevalence_target: 0.2,
        missing_rate,
        sampling_rate_per_hour: 1.0,
        seed,
    })
    .unwrap();
    CohortFilter::new(CohortFilter::default_required(), 12).unwrap().apply(&raw).0
}

#[test]
fn trained_model_scores_are_probabilities_and_schedule_free() {
    let c = cohort(12);
    let (model, _) = RiskModel::train(&c, ScoreTable::builtin(), &ModelConfig::default()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = single.install(|| model.predict(&c.patients).unwrap());
    let b = model.predict(&c.patients).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), c.len() * 4);
    assert!(a.iter().all(|(_, _, eta)| (0.0..=1.0).contains(eta)));
}

#[test]
fn finer_windows_use_the_fast_path_consistently() {
    // One-hour windows give 24 windows, past the enumeration limit.
    let c = cohort_with(13, 0.0);
    let cfg = ModelConfig {
        window_hours: 1,
        target_days: vec![3],
        required_variables: vec!["heart_rate".into()],
        ..ModelConfig::default()
    };
    let filtered = CohortFilter::new(cfg.required_variables.clone(), 1).unwrap().apply(&c).0;
    let (model, details) = RiskModel::train(&filtered, ScoreTable::builtin(), &cfg).unwrap();
    let (id, enc) = details.encoded.iter().next().unwrap();
    let scored = model.score_encoded(id, enc).unwrap();
    assert_eq!(scored[&3].priors.len(), 24);
    assert!((0.0..=1.0).contains(&scored[&3].eta));
    // On a 12-window prefix both evaluations agree.
    let day = &model.models[&3];
    let priors = &scored[&3].priors[..12];
    let x = chfhmm::ObservationSequence(enc.sequence.0[..12].to_vec());
    let a = enumerate_mass(priors, &day.emissions, &x).unwrap().eta();
    let b = forward_mass(priors, &day.emissions, &x).unwrap().eta();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn remaining_duration_mode_trains() {
    let c = cohort(14);
    let cfg = ModelConfig {
        duration_mode: DurationMode::Remaining,
        ..ModelConfig::default()
    };
    let (model, _) = RiskModel::train(&c, ScoreTable::builtin(), &cfg).unwrap();
    let etas: BTreeMap<u32, f64> = model
        .score(c.patients.keys().next().unwrap(), c.patients.values().next().unwrap())
        .unwrap()
        .into_iter()
        .map(|(d, r)| (d, r.eta))
        .collect();
    assert_eq!(etas.len(), 4);
}
