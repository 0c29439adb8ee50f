//! Running configured experiments and sweeps.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use icps_core::prediction::{HttpPredictor, LastValuePredictor, LstmHyper, LstmPredictor, PredictionError};
use icps_core::workload::WorkloadError;
use icps_core::{
    generate_synthetic, load_trace, run, ConcurrencyPredictor, EngineError, MetricsReport, Millis, Scheduler,
    SimConfig, SimOutcome, SyntheticParams, Workload,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, PredictorKind, RawConfig, WorkloadSource};
use crate::output::{self, Row};

/// Offset added to the run seed when generating the LSTM training workload.
const TRAINING_SEED_OFFSET: u64 = 0x5eed_0000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("predictor: {0}")]
    Prediction(#[from] PredictionError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid thread count in ICPS_SIM_THREADS: {0}")]
    Threads(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Result of one repetition.
#[derive(Debug)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub outcome: SimOutcome,
    pub workload: Workload,
}

pub fn load_workload(source: &WorkloadSource, seed: u64) -> Result<Workload, CliError> {
    match source {
        WorkloadSource::Synthetic(params) => Ok(generate_synthetic(&SyntheticParams {
            seed,
            ..params.clone()
        })?),
        WorkloadSource::Trace(path) => {
            let file = File::open(path).map_err(io_err(path))?;
            Ok(load_trace(BufReader::new(file))?)
        }
    }
}

/// Per-interval, per-type arrival counts of a workload.
pub fn arrival_series(workload: &Workload, interval: Millis, duration: Millis) -> Vec<Vec<f64>> {
    let intervals = duration.div_ceil(interval).max(1) as usize;
    let mut series = vec![vec![0.0; workload.types.len()]; intervals];
    for r in &workload.requests {
        let k = (r.arrival / interval) as usize;
        if let Some(row) = series.get_mut(k) {
            row[r.type_id.0] += 1.0;
        }
    }
    series
}

fn build_predictor(
    cfg: &ExperimentConfig,
    workload: &Workload,
    seed: u64,
) -> Result<Box<dyn ConcurrencyPredictor>, CliError> {
    Ok(match &cfg.predictor {
        PredictorKind::LastValue => Box::new(LastValuePredictor),
        PredictorKind::Http { url, series_len } => Box::new(HttpPredictor::new(url.clone(), *series_len)),
        PredictorKind::Lstm(hyper) => {
            let training = match &cfg.workload {
                WorkloadSource::Synthetic(_) => load_workload(&cfg.workload, seed.wrapping_add(TRAINING_SEED_OFFSET))?,
                WorkloadSource::Trace(_) => workload.clone(),
            };
            let series = arrival_series(&training, cfg.sim.interval, cfg.sim.duration);
            let hyper = LstmHyper {
                seed,
                ..hyper.clone()
            };
            Box::new(LstmPredictor::fit(&series, &hyper)?)
        }
    })
}

pub fn run_repetition(cfg: &ExperimentConfig, index: usize) -> Result<Repetition, CliError> {
    let seed = cfg.seeds[index];
    let workload = load_workload(&cfg.workload, seed)?;
    let predictor = build_predictor(cfg, &workload, seed)?;
    let sim = SimConfig { seed, ..cfg.sim.clone() };
    let scheduler = Scheduler::new(cfg.policy.clone(), predictor, workload.app.len());
    let outcome = run(sim, &workload.app, &workload.types, scheduler, &workload.requests)?;
    Ok(Repetition {
        index,
        seed,
        outcome,
        workload,
    })
}

/// Builds a rayon pool honouring `ICPS_SIM_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ICPS_SIM_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CliError::Threads(v.clone()))?;
        if n == 0 {
            return Err(CliError::Threads(v));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Threads(e.to_string()))
}

/// Files written by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
    pub rows: Vec<Row>,
}

fn write_json(path: &Path, report: &MetricsReport) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Runs every repetition of a single-valued configuration and writes
/// `report_{r}.json`, `results.csv` and `events_0.ndjson`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let pool = thread_pool()?;
    let reps: Vec<Repetition> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|r| run_repetition(cfg, r))
            .collect::<Result<_, _>>()
    })?;
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    let mut files = Vec::new();
    for rep in &reps {
        let path = cfg.output.join(format!("report_{}.json", rep.index));
        write_json(&path, &rep.outcome.report)?;
        files.push(path);
    }
    let rows: Vec<Row> = reps.iter().map(|rep| output::row(cfg, rep, &[])).collect();
    let csv_path = cfg.output.join("results.csv");
    output::write_rows(&csv_path, &output::columns(&[]), &rows)?;
    files.push(csv_path);
    let log_path = cfg.output.join("events_0.ndjson");
    let file = File::create(&log_path).map_err(io_err(&log_path))?;
    let mut w = BufWriter::new(file);
    reps[0].outcome.log.write_ndjson(&mut w).map_err(io_err(&log_path))?;
    w.flush().map_err(io_err(&log_path))?;
    files.push(log_path);
    Ok(ExperimentOutput { files, rows })
}

/// Expands list-valued keys and runs every (combination, repetition).
/// Writes `results.csv` plus one `series_{column}.csv` per varied key.
pub fn sweep(raw: &RawConfig) -> Result<ExperimentOutput, CliError> {
    let varied = raw.varied_keys();
    let configs: Vec<ExperimentConfig> = raw
        .expand()
        .iter()
        .map(ExperimentConfig::from_raw)
        .collect::<Result<_, _>>()?;
    let out_dir = configs[0].output.clone();
    let jobs: Vec<(usize, usize)> = configs
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();
    let pool = thread_pool()?;
    let rows: Vec<Row> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let rep = run_repetition(&configs[c], r)?;
                Ok(output::row(&configs[c], &rep, &varied))
            })
            .collect::<Result<_, CliError>>()
    })?;
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let csv_path = out_dir.join("results.csv");
    output::write_rows(&csv_path, &output::columns(&varied), &rows)?;
    let mut files = vec![csv_path];
    for key in &varied {
        files.extend(output::write_series(&out_dir, key, &rows)?);
    }
    Ok(ExperimentOutput { files, rows })
}
