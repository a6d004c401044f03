use chfhmm::cohort::{
    generate_synthetic_cohort, ingest_observations, ingest_outcomes, write_observations, write_outcomes,
    CohortFilter, OutcomeTable, REFERENCE_DAY,
};
use chfhmm::{RawCohort, SynthConfig};

fn config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_patients: 4000,
        n_variables: 5,
        prevalence_target: 0.15,
        missing_rate: 0.3,
        sampling_rate_per_hour: 1.5,
        seed,
    }
}

#[test]
fn csv_round_trip_preserves_the_cohort() {
    let cohort = generate_synthetic_cohort(&SynthConfig { n_patients: 300, ..config(8) }).unwrap();
    let mut obs = Vec::new();
    write_observations(&cohort.observations(), &mut obs).unwrap();
    let mut out = Vec::new();
    write_outcomes(&OutcomeTable { outcomes: cohort.outcomes.clone() }, &mut out).unwrap();
    let back = RawCohort::new(ingest_observations(&obs[..]).unwrap(), ingest_outcomes(&out[..]).unwrap()).unwrap();
    assert_eq!(back, cohort);
}

#[test]
fn death_fraction_by_reference_day_tracks_target() {
    let hours = 24.0 * f64::from(REFERENCE_DAY);
    for seed in 0..20 {
        let cohort = generate_synthetic_cohort(&config(seed)).unwrap();
        let deaths = cohort.outcomes.values().filter(|o| o.died_by(hours)).count();
        let fraction = deaths as f64 / cohort.len() as f64;
        assert!((0.10..=0.20).contains(&fraction), "seed {seed}: {fraction}");
        assert!(cohort.outcomes.values().all(|o| o.event_hours > 0.0 && o.event_hours.is_finite()));
        for obs in cohort.patients.values() {
            assert!(obs.windows(2).all(|w| w[0].offset_minutes <= w[1].offset_minutes));
        }
    }
}

#[test]
fn generation_does_not_depend_on_thread_count() {
    let cfg = SynthConfig { n_patients: 500, ..config(21) };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap();
    let a = single.install(|| generate_synthetic_cohort(&cfg).unwrap());
    let b = many.install(|| generate_synthetic_cohort(&cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn filter_keeps_only_complete_day_one_stays() {
    let cohort = generate_synthetic_cohort(&SynthConfig { n_patients: 800, missing_rate: 0.6, sampling_rate_per_hour: 0.25, ..config(2) }).unwrap();
    let filter = CohortFilter::new(CohortFilter::default_required(), 12).unwrap();
    let (kept, summary) = filter.apply(&cohort);
    assert_eq!(summary.kept + summary.dropped_short_stay + summary.dropped_incomplete, cohort.len());
    assert!(summary.dropped_incomplete > 0);
    assert!(kept.outcomes.values().all(|o| o.event_hours >= 24.0));
}
