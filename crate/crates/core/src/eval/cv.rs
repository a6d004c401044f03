//! Repeated stratified k-fold comparison of the risk model against the
//! baselines.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{saps_score, ExpSurvivalBaseline, LogisticModel};
use super::metrics::{auroc, aucpr, concordance, Scored, ScoredSet};
use super::ttest::paired_t_test_one_tailed;
use crate::cohort::{PatientOutcome, RawCohort};
use crate::error::{Error, Result};
use crate::features::ScoreTable;
use crate::pipeline::{ModelConfig, RiskModel};
use crate::survival::design_row;

pub const MODEL: &str = "chf_ar_hmm";
pub const METHODS: [&str; 4] = [MODEL, "saps", "logistic", "exp_survival"];
pub const METRICS: [&str; 3] = ["aucpr", "cstat", "auroc"];
/// Fold draws tried per repeat before giving up.
pub const MAX_FOLD_ATTEMPTS: u64 = 20;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 3, repeats: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean with a normal-approximation 95% interval of the mean.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let half = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Z_95 * var.sqrt() / n.sqrt()
    } else {
        0.0
    };
    Summary {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub aucpr: Summary,
    pub cstat: Summary,
    pub auroc: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub n_patients: usize,
    pub evaluations_per_method_per_day: usize,
    pub aucpr_estimator: String,
    pub ci_method: String,
    pub cstat_pairs: String,
    pub p_value_test: String,
    /// Death-by-target prevalence per day, the reference level for AUCPR.
    pub aucpr_baseline: BTreeMap<String, f64>,
}

/// `{"<day>": {"<method>": {...}}, "p_values": {...}, "metadata": {...}}`.
/// A p-value is null when the paired differences have zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub days: BTreeMap<String, BTreeMap<String, MethodMetrics>>,
    pub p_values: BTreeMap<String, BTreeMap<String, BTreeMap<String, Option<f64>>>>,
    pub metadata: ReportMetadata,
}

/// One held-out metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub day: u32,
    pub method: String,
    pub metric: String,
    pub repeat: usize,
    pub fold: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub report: EvaluationReport,
    pub metrics: Vec<MetricRow>,
}

/// Stratum: the first target day by which the patient died, or survival
/// past every target.
fn stratum(outcome: &PatientOutcome, days: &[u32]) -> usize {
    days.iter()
        .position(|&d| outcome.died_by(24.0 * f64::from(d)))
        .unwrap_or(days.len())
}

fn folds_are_usable(fold_of: &[usize], outcomes: &[&PatientOutcome], days: &[u32], folds: usize) -> bool {
    days.iter().all(|&d| {
        let hours = 24.0 * f64::from(d);
        let mut pos = vec![0usize; folds];
        let mut neg = vec![0usize; folds];
        for (&f, o) in fold_of.iter().zip(outcomes) {
            if o.died_by(hours) {
                pos[f] += 1;
            } else {
                neg[f] += 1;
            }
        }
        let (tp, tn): (usize, usize) = (pos.iter().sum(), neg.iter().sum());
        // Held-out folds need both classes for the metrics; training folds
        // need two of each for the class densities.
        (0..folds).all(|f| pos[f] >= 1 && neg[f] >= 1 && tp - pos[f] >= 2 && tn - neg[f] >= 2)
    })
}

/// Fold index per patient (in `outcomes` order) for one repeat.
pub fn assign_folds(outcomes: &[&PatientOutcome], days: &[u32], folds: usize, repeat: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > outcomes.len() {
        return Err(Error::Config(format!("cannot split {} patients into {folds} folds", outcomes.len())));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        strata.entry(stratum(o, days)).or_default().push(i);
    }
    for attempt in 0..MAX_FOLD_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(repeat as u64 * MAX_FOLD_ATTEMPTS + attempt);
        let mut fold_of = vec![0usize; outcomes.len()];
        let mut next = 0usize;
        for members in strata.values() {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            for i in members {
                fold_of[i] = next % folds;
                next += 1;
            }
        }
        if folds_are_usable(&fold_of, outcomes, days, folds) {
            return Ok(fold_of);
        }
        log::debug!("repeat {repeat}: fold draw {attempt} left a fold without both classes");
    }
    Err(Error::InsufficientData(format!(
        "repeat {repeat}: no fold split with both classes in every fold after {MAX_FOLD_ATTEMPTS} attempts"
    )))
}

type FoldMetrics = BTreeMap<(u32, &'static str, &'static str), f64>;

fn metric_values(set: &ScoredSet) -> Result<[f64; 3]> {
    Ok([aucpr(set)?, concordance(set)?, auroc(set)?])
}

fn evaluate_fold(
    cohort: &RawCohort,
    train_ids: &[&str],
    test_ids: &[&str],
    table: &ScoreTable,
    config: &ModelConfig,
) -> Result<FoldMetrics> {
    let train = cohort.subset(train_ids.iter().copied());
    let (model, details) = RiskModel::train(&train, table.clone(), config)?;
    let train_out: Vec<&PatientOutcome> = train_ids.iter().map(|id| &cohort.outcomes[*id]).collect();
    let train_max: Vec<Vec<f64>> = train_ids.iter().map(|id| details.encoded[*id].max_scores.clone()).collect();
    let train_hours: Vec<f64> = train_out.iter().map(|o| o.event_hours).collect();
    let train_design: Vec<Vec<f64>> = train_max.iter().map(|m| design_row(m)).collect();

    let test: Vec<_> = test_ids
        .iter()
        .map(|id| {
            let enc = model.features.encode(&cohort.patients[*id])?;
            Ok((*id, enc, &cohort.outcomes[*id]))
        })
        .collect::<Result<_>>()?;

    let mut out = FoldMetrics::new();
    for day in config.sorted_days() {
        let hours = 24.0 * f64::from(day);
        let day_model = &model.models[&day];
        let train_died: Vec<bool> = train_out.iter().map(|o| o.died_by(hours)).collect();
        let logistic = LogisticModel::fit(&train_design, &train_died)?;
        let exp = ExpSurvivalBaseline::fit(&train_max, &train_hours, &train_died, hours)?;

        let mut sets: [Vec<Scored>; 4] = Default::default();
        for (id, enc, o) in &test {
            let base = Scored {
                score: 0.0,
                label: o.died_by(hours),
                survival_hours: o.event_hours,
                event: o.death_flag,
            };
            let scores = [
                day_model.score(id, enc)?.eta,
                saps_score(&enc.max_scores),
                logistic.predict(&design_row(&enc.max_scores)),
                exp.score(&enc.max_scores)?,
            ];
            for (set, score) in sets.iter_mut().zip(scores) {
                set.push(Scored { score, ..base });
            }
        }
        for (method, items) in METHODS.iter().zip(sets) {
            let values = metric_values(&ScoredSet::new(items)?)?;
            for (metric, v) in METRICS.iter().zip(values) {
                out.insert((day, method, metric), v);
            }
        }
    }
    Ok(out)
}

/// Runs the full protocol. The cohort should already be filtered. Jobs run
/// in parallel; results do not depend on scheduling.
pub fn run_cv(cohort: &RawCohort, table: &ScoreTable, config: &ModelConfig, cv: &CvConfig, seed: u64) -> Result<CvResult> {
    config.validate()?;
    if cv.repeats == 0 {
        return Err(Error::Config("cv.repeats must be positive".into()));
    }
    let days = config.sorted_days();
    let ids: Vec<&str> = cohort.outcomes.keys().map(String::as_str).collect();
    let outcomes: Vec<&PatientOutcome> = cohort.outcomes.values().collect();
    let assignments: Vec<Vec<usize>> = (0..cv.repeats)
        .map(|r| assign_folds(&outcomes, &days, cv.folds, r, seed))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cv.repeats).flat_map(|r| (0..cv.folds).map(move |f| (r, f))).collect();
    let results: Vec<FoldMetrics> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&i| assignments[r][i] == f);
            let train_ids: Vec<&str> = train.iter().map(|&i| ids[i]).collect();
            let test_ids: Vec<&str> = test.iter().map(|&i| ids[i]).collect();
            log::info!("cv repeat {} fold {}: {} train / {} test", r + 1, f + 1, train_ids.len(), test_ids.len());
            evaluate_fold(cohort, &train_ids, &test_ids, table, config)
        })
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    for &day in &days {
        for method in METHODS {
            for metric in METRICS {
                for (&(r, f), res) in jobs.iter().zip(&results) {
                    metrics.push(MetricRow {
                        day,
                        method: method.to_string(),
                        metric: metric.to_string(),
                        repeat: r + 1,
                        fold: f + 1,
                        value: res[&(day, method, metric)],
                    });
                }
            }
        }
    }

    let series = |day: u32, method: &str, metric: &str| -> Vec<f64> {
        results.iter().map(|res| res[&(day, method, metric)]).collect()
    };
    let mut report_days = BTreeMap::new();
    let mut p_values = BTreeMap::new();
    let mut prevalence = BTreeMap::new();
    for &day in &days {
        let mut per_method = BTreeMap::new();
        for method in METHODS {
            per_method.insert(
                method.to_string(),
                MethodMetrics {
                    aucpr: summarize(&series(day, method, "aucpr")),
                    cstat: summarize(&series(day, method, "cstat")),
                    auroc: summarize(&series(day, method, "auroc")),
                },
            );
        }
        report_days.insert(day.to_string(), per_method);
        let mut per_baseline = BTreeMap::new();
        for baseline in &METHODS[1..] {
            let mut per_metric = BTreeMap::new();
            for metric in METRICS {
                let p = match paired_t_test_one_tailed(&series(day, MODEL, metric), &series(day, baseline, metric)) {
                    Ok(t) => Some(t.p_value),
                    Err(Error::DegeneratePairedTest) => None,
                    Err(e) => return Err(e),
                };
                per_metric.insert(metric.to_string(), p);
            }
            per_baseline.insert(baseline.to_string(), per_metric);
        }
        p_values.insert(day.to_string(), per_baseline);
        let deaths = outcomes.iter().filter(|o| o.died_by(24.0 * f64::from(day))).count();
        prevalence.insert(day.to_string(), deaths as f64 / outcomes.len() as f64);
    }

    Ok(CvResult {
        report: EvaluationReport {
            days: report_days,
            p_values,
            metadata: ReportMetadata {
                folds: cv.folds,
                repeats: cv.repeats,
                seed,
                n_patients: ids.len(),
                evaluations_per_method_per_day: jobs.len(),
                aucpr_estimator: "average precision (step-wise); tied scores ranked in patient-id order".into(),
                ci_method: "normal approximation: mean +/- 1.96 * sd / sqrt(n) over held-out folds".into(),
                cstat_pairs: "Harrell: a pair is comparable when the member with the strictly shorter time had an event; score ties count 0.5".into(),
                p_value_test: format!("paired one-tailed t-test per metric, H1: {MODEL} > baseline"),
                aucpr_baseline: prevalence,
            },
        },
        metrics,
    })
}

/// Long-form `day,method,metric,repeat,fold,value`.
pub fn write_metrics_csv<W: std::io::Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["day", "method", "metric", "repeat", "fold", "value"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_synthetic_cohort, CohortFilter, SynthConfig};

    fn outcome(id: &str, hours: f64, died: bool) -> PatientOutcome {
        PatientOutcome {
            patient_id: id.into(),
            event_hours: hours,
            death_flag: died,
        }
    }

    #[test]
    fn summary_interval() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.ci_high - 2.0 - Z_95 / 3f64.sqrt()).abs() < 1e-12);
        let s = summarize(&[0.4]);
        assert_eq!((s.ci_low, s.ci_high), (0.4, 0.4));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let owned: Vec<PatientOutcome> = (0..90)
            .map(|i| outcome(&format!("p{i}"), if i % 6 == 0 { 40.0 } else { 200.0 }, i % 6 == 0))
            .collect();
        let refs: Vec<&PatientOutcome> = owned.iter().collect();
        let a = assign_folds(&refs, &[2], 3, 0, 9).unwrap();
        let b = assign_folds(&refs, &[2], 3, 0, 9).unwrap();
        assert_eq!(a, b);
        for f in 0..3 {
            let members: Vec<usize> = (0..90).filter(|&i| a[i] == f).collect();
            assert_eq!(members.len(), 30);
            assert_eq!(members.iter().filter(|&&i| i % 6 == 0).count(), 5);
        }
        assert_ne!(a, assign_folds(&refs, &[2], 3, 1, 9).unwrap());
    }

    #[test]
    fn single_class_cohort_cannot_be_split() {
        let owned: Vec<PatientOutcome> = (0..30).map(|i| outcome(&format!("p{i}"), 200.0, false)).collect();
        let refs: Vec<&PatientOutcome> = owned.iter().collect();
        assert!(assign_folds(&refs, &[2], 3, 0, 1).is_err());
    }

    #[test]
    fn small_cv_runs_and_is_deterministic() {
        let raw = generate_synthetic_cohort(&SynthConfig {
            n_patients: 900,
            n_variables: 5,
            prevalence_target: 0.2,
            missing_rate: 0.2,
            sampling_rate_per_hour: 1.0,
            seed: 4,
        })
        .unwrap();
        let cohort = CohortFilter::new(CohortFilter::default_required(), 12).unwrap().apply(&raw).0;
        let cfg = ModelConfig::default();
        let cv = CvConfig { folds: 3, repeats: 2 };
        let a = run_cv(&cohort, &ScoreTable::builtin(), &cfg, &cv, 17).unwrap();
        let b = run_cv(&cohort, &ScoreTable::builtin(), &cfg, &cv, 17).unwrap();
        assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
        assert_eq!(a.metrics.len(), 4 * 4 * 3 * 2 * 3);
        for day in a.report.days.values() {
            assert_eq!(day.len(), 4);
            for m in day.values() {
                for s in [m.aucpr, m.cstat, m.auroc] {
                    assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
                }
            }
        }
        let json = serde_json::to_value(&a.report).unwrap();
        assert!(json["2"]["chf_ar_hmm"]["auroc"]["mean"].is_number());
        assert!(json["p_values"]["5"]["saps"].is_object());
    }
}
