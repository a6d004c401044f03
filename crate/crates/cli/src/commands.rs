use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chfhmm::cohort::{
    generate_synthetic_cohort, ingest_observations, ingest_outcomes, write_observations, write_outcomes,
    ObservationTable, OutcomeTable,
};
use chfhmm::eval::{run_cv, write_metrics_csv};
use chfhmm::features::{pam_cluster, silhouette, write_feature_csv};
use chfhmm::hmm::{write_curves_csv, write_predictions_csv};
use chfhmm::{Error, PipelineConfig, RawCohort, RiskModel};

use crate::args::{Cli, Command, GlobalArgs};

/// Exit 2 for `Config`, 1 for `Pipeline`.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Pipeline(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

const SILHOUETTE_SWEEP: std::ops::RangeInclusive<usize> = 2..=8;

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_config(g: &GlobalArgs) -> Outcome<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).map_err(config_error)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.seed {
        cfg.seed = v;
        if let Some(s) = cfg.synth.as_mut() {
            s.seed = v;
        }
    }
    if let Some(v) = &g.out_dir {
        cfg.paths.out_dir = v.clone();
    }
    if let Some(v) = &g.observations {
        cfg.paths.observations = Some(v.clone());
    }
    if let Some(v) = &g.outcomes {
        cfg.paths.outcomes = Some(v.clone());
    }
    if let Some(v) = &g.score_table {
        cfg.paths.score_table = Some(v.clone());
    }
    if let Some(v) = g.window_hours {
        cfg.window_hours = v;
    }
    if let Some(v) = g.k_clusters {
        cfg.k_clusters = v;
    }
    if let Some(v) = &g.target_days {
        cfg.target_days = v.clone();
    }
    if let Some(v) = g.duration_mode {
        cfg.duration_mode = v.into();
    }
    if let Some(v) = g.smoothing {
        cfg.smoothing = v;
    }
    if let Some(v) = g.folds {
        cfg.cv.folds = v;
    }
    if let Some(v) = g.repeats {
        cfg.cv.repeats = v;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Outcome<()> {
    let cfg = load_config(&cli.global)?;
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(config_error)?;
    }
    let table = cfg.score_table().map_err(config_error)?;
    fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| {
        Failure::Pipeline(format!("cannot create {}: {e}", cfg.paths.out_dir.display()))
    })?;
    match cli.command {
        Command::Synth => synth(&cfg),
        Command::Train { silhouette, dump } => train(&cfg, table, silhouette, dump),
        Command::Predict { model } => predict(&cfg, model),
        Command::Evaluate => evaluate(&cfg, table),
        Command::Curves { model } => curves(&cfg, model),
    }
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Pipeline(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Pipeline(format!("cannot read {}: {e}", path.display())))
}

fn read_observations(cfg: &PipelineConfig) -> Outcome<ObservationTable> {
    let path = cfg.paths.observations();
    ingest_observations(open(&path)?).map_err(|e| Failure::Pipeline(format!("{}: {e}", path.display())))
}

fn read_outcomes(cfg: &PipelineConfig) -> Outcome<OutcomeTable> {
    let path = cfg.paths.outcomes();
    ingest_outcomes(open(&path)?).map_err(|e| Failure::Pipeline(format!("{}: {e}", path.display())))
}

/// Joined and filtered cohort.
fn read_cohort(cfg: &PipelineConfig) -> Outcome<RawCohort> {
    let raw = RawCohort::new(read_observations(cfg)?, read_outcomes(cfg)?)?;
    let (cohort, summary) = cfg.cohort_filter()?.apply(&raw);
    log::info!(
        "cohort: kept {}, dropped {} short stays and {} incomplete",
        summary.kept,
        summary.dropped_short_stay,
        summary.dropped_incomplete
    );
    if cohort.is_empty() {
        return Err(Failure::Pipeline("no patients pass the inclusion filter".into()));
    }
    Ok(cohort)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Pipeline(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Failure::Pipeline(e.to_string()))
}

fn load_model(cfg: &PipelineConfig, path: Option<PathBuf>) -> Outcome<RiskModel> {
    let path = path.unwrap_or_else(|| cfg.paths.output("model.json"));
    let model: RiskModel = serde_json::from_reader(open(&path)?)
        .map_err(|e| Failure::Pipeline(format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

fn synth(cfg: &PipelineConfig) -> Outcome<()> {
    let synth = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no `synth` section".into()))?;
    let cohort = generate_synthetic_cohort(synth)?;
    write_observations(&cohort.observations(), create(&cfg.paths.output("observations.csv"))?)?;
    write_outcomes(
        &OutcomeTable {
            outcomes: cohort.outcomes.clone(),
        },
        create(&cfg.paths.output("outcomes.csv"))?,
    )?;
    log::info!("wrote {} synthetic patients", cohort.len());
    Ok(())
}

fn train(cfg: &PipelineConfig, table: chfhmm::ScoreTable, with_silhouette: bool, dump: bool) -> Outcome<()> {
    let cohort = read_cohort(cfg)?;
    let (model, details) = RiskModel::train(&cohort, table, &cfg.model_config())?;
    write_json(&cfg.paths.output("model.json"), &model)?;
    if with_silhouette {
        let rows: Vec<Vec<f64>> = details.encoded.values().flat_map(|e| e.rows.clone()).collect();
        let space = &model.features.cluster.space;
        for k in SILHOUETTE_SWEEP {
            let labels = match pam_cluster(&rows, k, space) {
                Ok(fit) => fit.assignments,
                Err(e) => {
                    log::warn!("silhouette k={k} skipped: {e}");
                    continue;
                }
            };
            let s = silhouette(&rows, &labels, space)?;
            let mark = if k == model.features.cluster.k { " *" } else { "" };
            println!("silhouette k={k} {s:.6}{mark}");
        }
    }
    if dump {
        let fits: std::collections::BTreeMap<u32, _> =
            model.models.iter().map(|(day, m)| (*day, &m.survival.windows)).collect();
        write_json(&cfg.paths.output("fits.json"), &fits)?;
        write_feature_csv(
            create(&cfg.paths.output("features.csv"))?,
            &model.features.spec,
            details.encoded.iter().map(|(id, e)| (id, &e.raw)),
        )?;
        let mut w = create(&cfg.paths.output("states.csv"))?;
        let io = |e: std::io::Error| Failure::Pipeline(e.to_string());
        writeln!(w, "patient_id,target_day,window,symbol,state").map_err(io)?;
        for (day, labels) in &details.states {
            for ((id, enc), l) in details.encoded.iter().zip(labels) {
                for (t, (x, s)) in enc.sequence.0.iter().zip(&l.states).enumerate() {
                    let s = serde_json::to_value(s).map_err(|e| Failure::Pipeline(e.to_string()))?;
                    writeln!(w, "{id},{day},{},{x},{}", t + 1, s.as_str().unwrap_or_default()).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
    }
    Ok(())
}

fn predict(cfg: &PipelineConfig, model_path: Option<PathBuf>) -> Outcome<()> {
    let model = load_model(cfg, model_path)?;
    let out = cfg.paths.output("predictions.csv");
    let obs = match read_observations(cfg) {
        Ok(t) => t,
        Err(_) if is_empty_observations(cfg) => {
            log::warn!("no observations; writing an empty prediction file");
            write_predictions_csv(create(&out)?, &[])?;
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let rows = model.predict(&obs.patients)?;
    write_predictions_csv(create(&out)?, &rows)?;
    Ok(())
}

fn is_empty_observations(cfg: &PipelineConfig) -> bool {
    File::open(cfg.paths.observations())
        .map(|f| matches!(ingest_observations(BufReader::new(f)), Err(Error::NoObservations)))
        .unwrap_or(false)
}

fn evaluate(cfg: &PipelineConfig, table: chfhmm::ScoreTable) -> Outcome<()> {
    let cohort = read_cohort(cfg)?;
    let result = run_cv(&cohort, &table, &cfg.model_config(), &cfg.cv, cfg.seed)?;
    write_json(&cfg.paths.output("report.json"), &result.report)?;
    write_metrics_csv(create(&cfg.paths.output("metrics.csv"))?, &result.metrics)?;
    Ok(())
}

fn curves(cfg: &PipelineConfig, model_path: Option<PathBuf>) -> Outcome<()> {
    let model = load_model(cfg, model_path)?;
    let cohort = read_cohort(cfg)?;
    let points = model.survival_curves(&cohort)?;
    write_curves_csv(create(&cfg.paths.output("curves.csv"))?, &points)?;
    Ok(())
}
