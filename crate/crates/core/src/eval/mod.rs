//! Metrics, baselines, paired tests and the cross-validation harness.

pub mod baselines;
pub mod cv;
pub mod metrics;
pub mod ttest;

pub use baselines::{max_scores, saps_score, ExpSurvivalBaseline, LogisticLikelihood, LogisticModel};
pub use cv::{
    assign_folds, run_cv, summarize, write_metrics_csv, CvConfig, CvResult, EvaluationReport, MethodMetrics,
    MetricRow, ReportMetadata, Summary, METHODS, METRICS, MODEL,
};
pub use metrics::{auroc, aucpr, concordance, Scored, ScoredSet};
pub use ttest::{paired_t_test_one_tailed, student_t_upper_tail, PairedTest};
