use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use icps_cli::output::{columns, read_rows};
use icps_cli::{compare, run_experiment, sweep, CliError, ExperimentConfig, RawConfig};
use icps_core::workload::serialize_trace;
use icps_core::{generate_synthetic, RpdConvention, SyntheticParams};
use tempfile::TempDir;

const SMALL: &str = "[sim]\nduration_ms = 20000\ninterval_ms = 2000\n\
                     [workload]\nconcurrency = 30\ndepth = 2\nbranch = 2\ntypes = 2\n";

fn raw(extra: &str, out: &Path) -> RawConfig {
    let mut r = RawConfig::parse(&format!("{SMALL}{extra}"), ".").unwrap();
    r.set("output.dir", out.display());
    r
}

fn config(extra: &str, out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_raw(&raw(extra, out)).unwrap()
}

#[test]
fn minimal_run_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let out = run_experiment(&config("", dir.path())).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["events_0.ndjson", "report_0.json", "results.csv"]);
    assert_eq!(out.files.len(), 3);
    let report: icps_core::MetricsReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report_0.json")).unwrap()).unwrap();
    assert_eq!(report.requests, 30);
}

#[test]
fn csv_schema_is_stable() {
    let expected = "label,mode,prediction,placement,routing,keep_alive_ms,pool_size,predictor,\
                    network_delay_ms,interval_ms,duration_ms,node_count,node_memory_mb,workload,concurrency,\
                    depth,branch,types,repetition,seed,phi_resp,phi_resource,eta,mean_response_ms,cold_starts,\
                    transfer_latency_ms,instances,requests,nodes,total_cost_mb_s,exec_cost_mb_s";
    assert_eq!(columns(&[]).join(","), expected);
    let dir = TempDir::new().unwrap();
    run_experiment(&config("", dir.path())).unwrap();
    let (header, _) = read_rows(&dir.path().join("results.csv")).unwrap();
    assert_eq!(header.join(","), expected);
}

#[test]
fn fixed_seed_list_gives_identical_rows() {
    let dir = TempDir::new().unwrap();
    let seeds = vec!["4"; 10].join(", ");
    let cfg = config(&format!("[output]\nrepetitions = 10\nseeds = {seeds}\n"), dir.path());
    run_experiment(&cfg).unwrap();
    let (header, rows) = read_rows(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert_eq!(r.len(), header.len());
        let strip = |row: &icps_cli::Row| {
            let mut row = row.clone();
            row.remove("repetition");
            row
        };
        assert_eq!(strip(r), strip(&rows[0]));
    }
}

#[test]
fn strategy_grid_has_27_combinations() {
    let dir = TempDir::new().unwrap();
    let grid = "[policy]\nprediction = fpcg, bpcg, chscg\nplacement = dlbds, ads, fdds\n\
                routing = swpas, sfepas, mncpas\n[output]\nrepetitions = 2\n";
    let out = sweep(&raw(grid, dir.path())).unwrap();
    assert_eq!(out.rows.len(), 54);
    let labels: std::collections::BTreeSet<&str> = out.rows.iter().map(|r| r["label"].as_str()).collect();
    assert_eq!(labels.len(), 27);
    assert_eq!(out.rows[0]["label"], "fpcg+dlbds+swpas");
    assert_eq!(out.rows[1]["repetition"], "1");
}

#[test]
fn single_valued_sweep_matches_run() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_experiment(&config("", a.path())).unwrap();
    sweep(&raw("", b.path())).unwrap();
    let read = |d: &TempDir| fs::read(d.path().join("results.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn network_delay_sweep_emits_a_series_per_policy() {
    let dir = TempDir::new().unwrap();
    let grid = "[sim]\nnetwork_delay_ms = 2, 4, 6, 10, 15\n[policy]\nmode = icps, keep_alive\n";
    let mut r = RawConfig::parse(&format!("{grid}[workload]\nconcurrency = 20\ndepth = 2\n"), ".").unwrap();
    r.set("output.dir", dir.path().display());
    r.set("sim.duration_ms", 10_000);
    let out = sweep(&r).unwrap();
    assert_eq!(out.rows.len(), 10);
    let (header, rows) = read_rows(&dir.path().join("series_network_delay_ms.csv")).unwrap();
    assert_eq!(header[..2], ["label".to_string(), "network_delay_ms".to_string()]);
    assert_eq!(rows.len(), 10);
    let icps: Vec<&str> = rows
        .iter()
        .filter(|r| r["label"] == "bpcg+ads+sfepas")
        .map(|r| r["network_delay_ms"].as_str())
        .collect();
    assert_eq!(icps, ["2", "4", "6", "10", "15"]);
    assert!(!dir.path().join("series_mode.csv").exists());
}

#[test]
fn varied_extra_key_becomes_a_column() {
    let dir = TempDir::new().unwrap();
    let out = sweep(&raw("[policy]\nchscg_window = 2, 4\nprediction = chscg\n", dir.path())).unwrap();
    let (header, _) = read_rows(&dir.path().join("results.csv")).unwrap();
    assert!(header.contains(&"chscg_window".to_string()));
    assert_eq!(out.rows[1]["chscg_window"], "4");
}

#[test]
fn trace_workload_runs() {
    let dir = TempDir::new().unwrap();
    let w = generate_synthetic(&SyntheticParams {
        concurrency: 15,
        depth: 2,
        window: 10_000,
        ..SyntheticParams::default()
    })
    .unwrap();
    fs::write(dir.path().join("trace.ndjson"), serialize_trace(&w)).unwrap();
    let ini = format!(
        "[sim]\nduration_ms = 10000\n[workload]\nsource = trace\ntrace_path = trace.ndjson\n[output]\ndir = {}\n",
        dir.path().join("out").display()
    );
    let path = dir.path().join("exp.ini");
    fs::write(&path, ini).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows[0]["workload"], "trace.ndjson");
    assert_eq!(out.rows[0]["requests"], "15");
}

#[test]
fn missing_trace_is_a_config_error() {
    let r = RawConfig::parse("[workload]\nsource = trace\ntrace_path = nope.ndjson\n", "/nonexistent").unwrap();
    let err = ExperimentConfig::from_raw(&r).unwrap_err();
    assert!(err.to_string().contains("trace_path"));
}

fn write_csv(dir: &Path, name: &str, rows: &[(&str, &str, f64)]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("label,network_delay_ms,seed,eta\n");
    for (label, d, eta) in rows {
        text.push_str(&format!("{label},{d},0,{eta}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn identical_inputs_compare_to_zero() {
    let dir = TempDir::new().unwrap();
    let rows = [("a", "2", 0.4), ("a", "4", 0.3)];
    let p = write_csv(dir.path(), "a.csv", &rows);
    let q = write_csv(dir.path(), "b.csv", &rows);
    for conv in [RpdConvention::Literal, RpdConvention::Positive] {
        let t = compare(&[p.clone(), q.clone()], conv).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.column("rpd").iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn rpd_matches_hand_computation() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", &[("icps", "2", 0.5)]);
    let b = write_csv(dir.path(), "b.csv", &[("keep_alive", "2", 0.4)]);
    let c = write_csv(dir.path(), "c.csv", &[("pool", "2", 0.8)]);
    let lit = compare(&[a.clone(), b.clone(), c.clone()], RpdConvention::Literal).unwrap();
    let got: Vec<f64> = lit.column("rpd").iter().map(|v| v.parse().unwrap()).collect();
    // 100 (0.4 - eta) / eta
    let want = [-20.0, 0.0, -50.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-9, "{got:?}");
    }
    let pos = compare(&[a, b, c], RpdConvention::Positive).unwrap();
    let got: Vec<f64> = pos.column("rpd").iter().map(|v| v.parse().unwrap()).collect();
    for (g, w) in got.iter().zip([25.0, 0.0, 100.0]) {
        assert!((g - w).abs() < 1e-9, "{got:?}");
    }
    assert!(lit.column("eta_best").iter().all(|&v| v == "0.4"));
}

#[test]
fn missing_grid_point_is_a_schema_mismatch() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", &[("x", "2", 0.5), ("x", "4", 0.5)]);
    let b = write_csv(dir.path(), "b.csv", &[("y", "2", 0.5)]);
    assert!(matches!(compare(&[a, b], RpdConvention::Literal), Err(CliError::SchemaMismatch(_))));
    let c = dir.path().join("c.csv");
    fs::write(&c, "label,depth,eta\nz,1,0.3\n").unwrap();
    let a = write_csv(dir.path(), "a2.csv", &[("x", "2", 0.5)]);
    assert!(matches!(compare(&[a, c], RpdConvention::Literal), Err(CliError::SchemaMismatch(_))));
}

fn icps() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icps"))
}

#[test]
fn binary_run_and_compare() {
    let dir = TempDir::new().unwrap();
    let ini = dir.path().join("exp.ini");
    fs::write(&ini, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = icps()
        .args(["run", ini.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"])
        .status()
        .unwrap();
    assert!(status.success());
    let (_, rows) = read_rows(&out.join("results.csv")).unwrap();
    assert_eq!(rows[0]["seed"], "7");

    let csv = out.join("results.csv");
    let res = icps()
        .args(["compare", csv.to_str().unwrap(), csv.to_str().unwrap(), "--rpd-convention", "positive"])
        .output()
        .unwrap();
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn binary_reports_bad_key_with_nonzero_exit() {
    let dir = TempDir::new().unwrap();
    let ini = dir.path().join("bad.ini");
    fs::write(&ini, "[policy]\nplacement = foo\n").unwrap();
    let res = icps().args(["run", ini.to_str().unwrap()]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("placement"));
}

#[test]
fn thread_cap_is_validated() {
    let dir = TempDir::new().unwrap();
    let ini = dir.path().join("exp.ini");
    fs::write(&ini, SMALL).unwrap();
    let sweep_with = |threads: &str| {
        icps()
            .args(["sweep", ini.to_str().unwrap(), "--out", dir.path().join(threads).to_str().unwrap()])
            .env("ICPS_SIM_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(sweep_with("1").status.success());
    let bad = sweep_with("zero");
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ICPS_SIM_THREADS"));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

    #[test]
    fn sweep_rows_are_grid_times_repetitions(delays in 1usize..4, modes in 1usize..4, reps in 1usize..3) {
        let dir = TempDir::new().unwrap();
        let delay_list: Vec<String> = (0..delays).map(|d| (2 * d).to_string()).collect();
        let mode_list = ["icps", "keep_alive", "pool"][..modes].join(", ");
        let ini = format!(
            "[sim]\nduration_ms = 3000\ninterval_ms = 1000\nnetwork_delay_ms = {}\n[policy]\nmode = {mode_list}\n\
             [workload]\nconcurrency = 4\ndepth = 2\n[output]\nrepetitions = {reps}\n",
            delay_list.join(", ")
        );
        let mut r = RawConfig::parse(&ini, ".").unwrap();
        r.set("output.dir", dir.path().display());
        let out = sweep(&r).unwrap();
        proptest::prop_assert_eq!(out.rows.len(), delays * modes * reps);
        let (header, rows) = read_rows(&dir.path().join("results.csv")).unwrap();
        proptest::prop_assert_eq!(rows.len(), out.rows.len());
        proptest::prop_assert_eq!(header, columns(&r.varied_keys()));
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let raw = RawConfig::load(&path).unwrap();
        for point in raw.expand() {
            ExperimentConfig::from_raw(&point).unwrap();
        }
        seen += 1;
    }
    assert_eq!(seen, 3);
}
