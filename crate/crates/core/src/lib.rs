pub mod cohort;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod optim;
pub mod pipeline;
pub mod survival;

pub use cohort::{PatientOutcome, RawCohort, RawObservation, SynthConfig};
pub use config::{PathsConfig, PipelineConfig};
pub use error::{Error, Result};
pub use eval::{CvConfig, EvaluationReport, ScoredSet};
pub use features::{FeatureMatrix, FeatureSpec, ObservationSequence, ScoreTable};
pub use hmm::{EmissionModel, RiskScore};
pub use pipeline::{ModelConfig, RiskModel};
pub use survival::{DurationMode, TargetSpec};
