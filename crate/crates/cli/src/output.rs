//! CSV rows, plot series and RPD comparison tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use icps_core::metrics::{best_eta, rpd};
use icps_core::RpdConvention;

use crate::config::{ExperimentConfig, PredictorKind, WorkloadSource};
use crate::experiment::{io_err, CliError, Repetition};

/// One CSV row keyed by column name.
pub type Row = BTreeMap<String, String>;

/// Columns identifying the algorithm that produced a row.
pub const ALGORITHM_COLUMNS: &[&str] = &[
    "label",
    "mode",
    "prediction",
    "placement",
    "routing",
    "keep_alive_ms",
    "pool_size",
    "predictor",
];

/// Scenario columns always present after the algorithm columns.
pub const SCENARIO_COLUMNS: &[&str] = &[
    "network_delay_ms",
    "interval_ms",
    "duration_ms",
    "node_count",
    "node_memory_mb",
    "workload",
    "concurrency",
    "depth",
    "branch",
    "types",
];

pub const METRIC_COLUMNS: &[&str] = &[
    "phi_resp",
    "phi_resource",
    "eta",
    "mean_response_ms",
    "cold_starts",
    "transfer_latency_ms",
    "instances",
    "requests",
    "nodes",
    "total_cost_mb_s",
    "exec_cost_mb_s",
];

fn short(key: &str) -> &str {
    key.rsplit('.').next().unwrap_or(key)
}

fn is_fixed(col: &str) -> bool {
    ALGORITHM_COLUMNS.contains(&col) || SCENARIO_COLUMNS.contains(&col)
}

/// Full column list for the given varied config keys.
pub fn columns(varied: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = ALGORITHM_COLUMNS
        .iter()
        .chain(SCENARIO_COLUMNS)
        .map(|c| c.to_string())
        .collect();
    for key in varied {
        let c = short(key);
        if !is_fixed(c) && !cols.iter().any(|x| x == c) {
            cols.push(c.to_string());
        }
    }
    cols.push("repetition".into());
    cols.push("seed".into());
    cols.extend(METRIC_COLUMNS.iter().map(|c| c.to_string()));
    cols
}

pub fn row(cfg: &ExperimentConfig, rep: &Repetition, varied: &[String]) -> Row {
    let mut r = Row::new();
    let mut put = |k: &str, v: String| {
        r.insert(k.to_string(), v);
    };
    let p = &cfg.policy;
    put("label", p.label());
    put("mode", p.mode.to_string());
    put("prediction", p.prediction.to_string());
    put("placement", p.placement.to_string());
    put("routing", p.routing.to_string());
    put("keep_alive_ms", p.keep_alive.to_string());
    put("pool_size", p.pool_size.to_string());
    put(
        "predictor",
        match cfg.predictor {
            PredictorKind::LastValue => "last_value",
            PredictorKind::Lstm(_) => "lstm",
            PredictorKind::Http { .. } => "http",
        }
        .into(),
    );
    put("network_delay_ms", cfg.sim.network.delay.to_string());
    put("interval_ms", cfg.sim.interval.to_string());
    put("duration_ms", cfg.sim.duration.to_string());
    put("node_count", cfg.sim.capacities().len().to_string());
    put(
        "node_memory_mb",
        match &cfg.sim.node_capacities {
            Some(caps) => caps.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            None => cfg.sim.node_memory.to_string(),
        },
    );
    put("concurrency", rep.workload.requests.len().to_string());
    put("types", rep.workload.types.len().to_string());
    match &cfg.workload {
        WorkloadSource::Synthetic(s) => {
            put("workload", "synthetic".into());
            put("depth", s.depth.to_string());
            put("branch", s.branch.to_string());
        }
        WorkloadSource::Trace(path) => {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            put("workload", name);
            put("depth", String::new());
            put("branch", String::new());
        }
    }
    for key in varied {
        let c = short(key);
        if !is_fixed(c) {
            put(c, cfg.raw.values.get(key).map(|v| v.join(" ")).unwrap_or_default());
        }
    }
    put("repetition", rep.index.to_string());
    put("seed", rep.seed.to_string());
    let m = &rep.outcome.report;
    put("phi_resp", m.phi_resp.to_string());
    put("phi_resource", m.phi_resource.to_string());
    put("eta", m.eta.to_string());
    put("mean_response_ms", m.mean_response_ms.to_string());
    put("cold_starts", m.cold_starts.to_string());
    put("transfer_latency_ms", m.transfer_latency_ms.to_string());
    put("instances", m.instances.to_string());
    put("requests", m.requests.to_string());
    put("nodes", m.nodes.to_string());
    put("total_cost_mb_s", m.total_cost_mb_s.to_string());
    put("exec_cost_mb_s", m.exec_cost_mb_s.to_string());
    r
}

pub fn write_rows(path: &Path, columns: &[String], rows: &[Row]) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(columns.iter().map(|c| row.get(c).map(String::as_str).unwrap_or("")))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a CSV written by [`write_rows`], returning header and rows.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Row>), CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok((header, rows))
}

/// Mean metrics per (label, value of `key`), one file per varied scenario key.
pub fn write_series(dir: &Path, key: &str, rows: &[Row]) -> Result<Option<PathBuf>, CliError> {
    let col = short(key);
    if ALGORITHM_COLUMNS.contains(&col) {
        return Ok(None);
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut acc: BTreeMap<(String, String), (usize, [f64; 3])> = BTreeMap::new();
    for r in rows {
        let k = (r["label"].clone(), r.get(col).cloned().unwrap_or_default());
        let e = acc.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            (0, [0.0; 3])
        });
        e.0 += 1;
        for (slot, m) in e.1.iter_mut().zip(["eta", "phi_resp", "phi_resource"]) {
            *slot += r[m].parse::<f64>().unwrap_or(f64::NAN);
        }
    }
    let path = dir.join(format!("series_{col}.csv"));
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["label", col, "runs", "mean_eta", "mean_phi_resp", "mean_phi_resource"])?;
    for k in &order {
        let (n, sums) = acc[k];
        let mean = |s: f64| (s / n as f64).to_string();
        w.write_record([
            k.0.clone(),
            k.1.clone(),
            n.to_string(),
            mean(sums[0]),
            mean(sums[1]),
            mean(sums[2]),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(Some(path))
}

/// RPD table in long form: one row per (grid point, input, algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct RpdTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RpdTable {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::SchemaMismatch(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Values of column `name`.
    pub fn column(&self, name: &str) -> Vec<&str> {
        let i = self.header.iter().position(|h| h == name).expect("known column");
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }
}

/// Compares result CSVs. Rows are matched on every column that is neither
/// an algorithm column nor a metric; the best η of a grid point is the
/// minimum over all inputs and algorithms.
pub fn compare(paths: &[PathBuf], convention: RpdConvention) -> Result<RpdTable, CliError> {
    if paths.is_empty() {
        return Err(CliError::SchemaMismatch("no inputs".into()));
    }
    let inputs: Vec<(Vec<String>, Vec<Row>)> = paths.iter().map(|p| read_rows(p)).collect::<Result<_, _>>()?;
    let columns: BTreeSet<&String> = inputs[0].0.iter().collect();
    for (p, (h, _)) in paths.iter().zip(&inputs).skip(1) {
        if h.iter().collect::<BTreeSet<_>>() != columns {
            return Err(CliError::SchemaMismatch(format!(
                "{} has columns differing from {}",
                p.display(),
                paths[0].display()
            )));
        }
    }
    if !columns.iter().any(|c| *c == "eta") {
        return Err(CliError::SchemaMismatch("no `eta` column".into()));
    }
    let grid: Vec<String> = inputs[0]
        .0
        .iter()
        .filter(|c| !ALGORITHM_COLUMNS.contains(&c.as_str()) && !METRIC_COLUMNS.contains(&c.as_str()))
        .cloned()
        .collect();
    let algo: Vec<String> = inputs[0]
        .0
        .iter()
        .filter(|c| ALGORITHM_COLUMNS.contains(&c.as_str()))
        .cloned()
        .collect();

    let key_of = |r: &Row, cols: &[String]| -> Vec<String> { cols.iter().map(|c| r[c].clone()).collect() };
    let mut points: Vec<BTreeSet<Vec<String>>> = Vec::new();
    let mut entries: BTreeMap<Vec<String>, Vec<(usize, Vec<String>, f64)>> = BTreeMap::new();
    for (i, (_, rows)) in inputs.iter().enumerate() {
        let mut seen = BTreeSet::new();
        let mut pts = BTreeSet::new();
        for r in rows {
            let g = key_of(r, &grid);
            let a = key_of(r, &algo);
            if !seen.insert((g.clone(), a.clone())) {
                return Err(CliError::SchemaMismatch(format!(
                    "{} repeats a grid point for one algorithm",
                    paths[i].display()
                )));
            }
            let eta: f64 = r["eta"]
                .parse()
                .map_err(|_| CliError::SchemaMismatch(format!("bad eta `{}`", r["eta"])))?;
            pts.insert(g.clone());
            entries.entry(g).or_default().push((i, a, eta));
        }
        points.push(pts);
    }
    for (i, pts) in points.iter().enumerate().skip(1) {
        if pts != &points[0] {
            return Err(CliError::SchemaMismatch(format!(
                "{} and {} cover different grid points",
                paths[0].display(),
                paths[i].display()
            )));
        }
    }

    let mut header: Vec<String> = vec!["input".into()];
    header.extend(algo.iter().cloned());
    header.extend(grid.iter().cloned());
    header.push("eta".into());
    header.push("eta_best".into());
    header.push("rpd".into());
    let mut rows = Vec::new();
    for (g, list) in &entries {
        let etas: Vec<f64> = list.iter().map(|e| e.2).collect();
        let best = best_eta(&etas).expect("non-empty group");
        for (i, a, eta) in list {
            let value = rpd(best, *eta, convention)
                .map(|v| v.to_string())
                .unwrap_or_else(|_| "NaN".to_string());
            let mut row = vec![paths[*i].display().to_string()];
            row.extend(a.iter().cloned());
            row.extend(g.iter().cloned());
            row.push(eta.to_string());
            row.push(best.to_string());
            row.push(value);
            rows.push(row);
        }
    }
    Ok(RpdTable { header, rows })
}
