//! INI experiment configuration. Every key may hold a comma separated list;
//! `run` requires single values while `sweep` expands the Cartesian product.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use icps_core::prediction::LstmHyper;
use icps_core::workload::ArrivalPattern;
use icps_core::{NetworkModel, PolicyBundle, SimConfig, SyntheticParams};
use ini::Ini;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed ini: {0}")]
    Syntax(String),
    #[error("unknown section `[{0}]`")]
    UnknownSection(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("key `{0}` holds a list; use `sweep` for grids")]
    ListValue(String),
    #[error("missing key `{0}`")]
    Missing(String),
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Recognised keys, in the order they appear in CSV output.
pub const KEYS: &[(&str, &[&str])] = &[
    (
        "sim",
        &[
            "duration_ms",
            "interval_ms",
            "network_delay_ms",
            "node_count",
            "node_memory_mb",
            "node_capacities",
            "allow_new_nodes",
            "check_invariants",
            "seed",
        ],
    ),
    (
        "policy",
        &[
            "mode",
            "prediction",
            "placement",
            "routing",
            "pool_size",
            "pool_max",
            "keep_alive_ms",
            "chscg_window",
            "predictor",
            "predictor_url",
            "lstm_hidden",
            "lstm_epochs",
            "lstm_learning_rate",
            "lstm_batch_size",
            "lstm_series_len",
        ],
    ),
    (
        "workload",
        &[
            "source",
            "trace_path",
            "concurrency",
            "depth",
            "branch",
            "types",
            "window_ms",
            "exec_min_ms",
            "exec_max_ms",
            "memory_min_mb",
            "memory_max_mb",
            "cold_start_ms",
            "arrivals",
            "period_ms",
            "offset_ms",
        ],
    ),
    ("output", &["dir", "repetitions", "seeds"]),
];

/// Raw `section.key -> values` map read from an INI file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, Vec<String>>,
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

impl RawConfig {
    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
                continue;
            };
            let known = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| ConfigError::UnknownSection(section.to_string()))?;
            for (key, value) in props.iter() {
                if !known.1.contains(&key) {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
                let list = split_list(value);
                if list.is_empty() {
                    return Err(invalid(key, "empty value"));
                }
                values.insert(format!("{section}.{key}"), list);
            }
        }
        Ok(Self {
            values,
            base: base.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), vec![value.to_string()]);
    }

    /// Keys with more than one value, in CSV column order. `node_capacities`
    /// and `output.seeds` are lists by nature and never form grid axes.
    pub fn varied_keys(&self) -> Vec<String> {
        ordered_keys()
            .into_iter()
            .filter(|k| !is_list_key(k))
            .filter(|k| self.values.get(k).is_some_and(|v| v.len() > 1))
            .collect()
    }

    /// Cartesian product of all list-valued keys, first key varying slowest.
    pub fn expand(&self) -> Vec<RawConfig> {
        let mut out = vec![self.clone()];
        for key in self.varied_keys() {
            let options = &self.values[&key];
            out = out
                .into_iter()
                .flat_map(|cfg| {
                    let key = key.clone();
                    options.iter().map(move |v| {
                        let mut next = cfg.clone();
                        next.set(&key, v);
                        next
                    })
                })
                .collect();
        }
        out
    }

    fn single(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0].as_str())),
            Some(_) => Err(ConfigError::ListValue(key.to_string())),
        }
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: ToString,
    {
        match self.single(key)? {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| invalid(key, e.to_string())),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: ToString,
    {
        self.values
            .get(key)
            .map(|vs| {
                vs.iter()
                    .map(|v| v.parse().map_err(|e: T::Err| invalid(key, e.to_string())))
                    .collect()
            })
            .transpose()
    }
}

fn is_list_key(key: &str) -> bool {
    matches!(key, "sim.node_capacities" | "output.seeds")
}

pub fn ordered_keys() -> Vec<String> {
    KEYS.iter()
        .flat_map(|(s, ks)| ks.iter().map(move |k| format!("{s}.{k}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    LastValue,
    Lstm(LstmHyper),
    Http { url: String, series_len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Trace(PathBuf),
    Synthetic(SyntheticParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub policy: PolicyBundle,
    pub predictor: PredictorKind,
    pub workload: WorkloadSource,
    pub output: PathBuf,
    pub repetitions: usize,
    /// Seed of each repetition. Defaults to `sim.seed + r`.
    pub seeds: Vec<u64>,
    /// The single-valued raw settings this config was built from.
    pub raw: RawConfig,
}

fn parse_with<T>(raw: &RawConfig, key: &str, default: T) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: ToString,
{
    raw.get(key, default)
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let base_sim = SimConfig::default();
        let seed: u64 = parse_with(raw, "sim.seed", base_sim.seed)?;
        let sim = SimConfig {
            duration: parse_with(raw, "sim.duration_ms", base_sim.duration)?,
            interval: parse_with(raw, "sim.interval_ms", base_sim.interval)?,
            network: NetworkModel::new(parse_with(raw, "sim.network_delay_ms", base_sim.network.delay)?),
            node_count: parse_with(raw, "sim.node_count", base_sim.node_count)?,
            node_memory: parse_with(raw, "sim.node_memory_mb", base_sim.node_memory)?,
            node_capacities: raw.list("sim.node_capacities")?,
            seed,
            allow_new_nodes: parse_with(raw, "sim.allow_new_nodes", base_sim.allow_new_nodes)?,
            check_invariants: parse_with(raw, "sim.check_invariants", base_sim.check_invariants)?,
        };
        sim.validate().map_err(|e| invalid("sim", e))?;

        let mode = parse_with(raw, "policy.mode", icps_core::Mode::Icps)?;
        let keep_alive = parse_with(raw, "policy.keep_alive_ms", PolicyBundle::default().keep_alive)?;
        let pool_size = parse_with(raw, "policy.pool_size", 1u64)?;
        let mut policy = match mode {
            icps_core::Mode::Icps => PolicyBundle {
                keep_alive,
                ..PolicyBundle::default()
            },
            icps_core::Mode::KeepAlive => PolicyBundle::keep_alive(keep_alive),
            icps_core::Mode::Pool => PolicyBundle::pool(pool_size, keep_alive),
        };
        policy.prediction = parse_with(raw, "policy.prediction", policy.prediction)?;
        policy.placement = parse_with(raw, "policy.placement", policy.placement)?;
        policy.routing = parse_with(raw, "policy.routing", policy.routing)?;
        policy.pool_size = pool_size;
        policy.pool_max = parse_with(raw, "policy.pool_max", policy.pool_max)?;
        policy.chscg_window = parse_with(raw, "policy.chscg_window", policy.chscg_window)?;
        if policy.pool_size == 0 || policy.pool_max < policy.pool_size {
            return Err(invalid("policy.pool_size", "need 1 <= pool_size <= pool_max"));
        }
        if policy.chscg_window == 0 {
            return Err(invalid("policy.chscg_window", "must be positive"));
        }

        let hyper_default = LstmHyper::default();
        let series_len = parse_with(raw, "policy.lstm_series_len", hyper_default.series_len)?;
        let predictor = match raw.single("policy.predictor")?.unwrap_or("last_value") {
            "last_value" => PredictorKind::LastValue,
            "lstm" => PredictorKind::Lstm(LstmHyper {
                hidden: parse_with(raw, "policy.lstm_hidden", hyper_default.hidden)?,
                learning_rate: parse_with(raw, "policy.lstm_learning_rate", hyper_default.learning_rate)?,
                batch_size: parse_with(raw, "policy.lstm_batch_size", hyper_default.batch_size)?,
                epochs: parse_with(raw, "policy.lstm_epochs", hyper_default.epochs)?,
                series_len,
                seed,
            }),
            "http" => PredictorKind::Http {
                url: raw
                    .single("policy.predictor_url")?
                    .ok_or_else(|| ConfigError::Missing("policy.predictor_url".into()))?
                    .to_string(),
                series_len,
            },
            other => return Err(invalid("policy.predictor", format!("unknown predictor `{other}`"))),
        };

        let workload = match raw.single("workload.source")?.unwrap_or("synthetic") {
            "trace" => {
                let path = raw
                    .single("workload.trace_path")?
                    .ok_or_else(|| ConfigError::Missing("workload.trace_path".into()))?;
                let path = raw.base.join(path);
                if !path.is_file() {
                    return Err(invalid("workload.trace_path", format!("{} is not a file", path.display())));
                }
                WorkloadSource::Trace(path)
            }
            "synthetic" => WorkloadSource::Synthetic(synthetic_params(raw, seed, sim.duration)?),
            other => return Err(invalid("workload.source", format!("unknown source `{other}`"))),
        };

        let repetitions: usize = parse_with(raw, "output.repetitions", 1)?;
        if repetitions == 0 {
            return Err(invalid("output.repetitions", "must be at least 1"));
        }
        let seeds = match raw.list::<u64>("output.seeds")? {
            Some(list) if list.len() != repetitions => {
                return Err(invalid(
                    "output.seeds",
                    format!("{} seeds for {repetitions} repetitions", list.len()),
                ))
            }
            Some(list) => list,
            None => (0..repetitions as u64).map(|r| seed + r).collect(),
        };
        let output = raw.base.join(raw.single("output.dir")?.unwrap_or("results"));

        Ok(Self {
            sim,
            policy,
            predictor,
            workload,
            output,
            repetitions,
            seeds,
            raw: raw.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::load(path)?)
    }
}

fn synthetic_params(raw: &RawConfig, seed: u64, duration: u64) -> Result<SyntheticParams, ConfigError> {
    let d = SyntheticParams::default();
    let arrivals = match raw.single("workload.arrivals")?.unwrap_or("uniform") {
        "uniform" => ArrivalPattern::Uniform,
        "periodic" => ArrivalPattern::Periodic {
            period: raw
                .get::<u64>("workload.period_ms", 0)
                .and_then(|p| if p == 0 { Err(ConfigError::Missing("workload.period_ms".into())) } else { Ok(p) })?,
            offset: raw.get("workload.offset_ms", 0)?,
        },
        other => return Err(invalid("workload.arrivals", format!("unknown pattern `{other}`"))),
    };
    let params = SyntheticParams {
        concurrency: raw.get("workload.concurrency", d.concurrency)?,
        depth: raw.get("workload.depth", d.depth)?,
        branch: raw.get("workload.branch", d.branch)?,
        types: raw.get("workload.types", d.types)?,
        window: raw.get("workload.window_ms", duration)?,
        seed,
        exec_range: (
            raw.get("workload.exec_min_ms", d.exec_range.0)?,
            raw.get("workload.exec_max_ms", d.exec_range.1)?,
        ),
        memory_range: (
            raw.get("workload.memory_min_mb", d.memory_range.0)?,
            raw.get("workload.memory_max_mb", d.memory_range.1)?,
        ),
        cold_start: raw.get("workload.cold_start_ms", d.cold_start)?,
        arrivals,
    };
    params.validate().map_err(|e| invalid("workload", e))?;
    Ok(params)
}
