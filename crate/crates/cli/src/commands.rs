//! The four commands. Each writes a CSV table and a JSON sidecar into the
//! output directory.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ddtwa::models::sample_disorder;
use ddtwa::oracle::run_oracle;
use ddtwa::rng::{TrajectoryRng, SHARED_STREAM};
use ddtwa::series::parse_csv;
use ddtwa::ObservableSeries;
use serde_json::{json, Value as Json};
use toml::Value;

use crate::compare::{compare_tables, CompareReport};
use crate::config::{set_path, CompareConfig, Engine, ScenarioConfig};
use crate::CliError;

/// Paths written by a command.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub table: PathBuf,
    pub metadata: PathBuf,
}

pub fn version_string() -> String {
    match option_env!("DDTWA_GIT_REV") {
        Some(rev) => format!("ddtwa {} ({rev})", env!("CARGO_PKG_VERSION")),
        None => format!("ddtwa {}", env!("CARGO_PKG_VERSION")),
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn spin_length_summary(series: &ObservableSeries) -> Json {
    let Some(col) = series.column("spin_length") else { return Json::Null };
    let vals: Vec<f64> = col.mean.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Json::Null;
    }
    json!({
        "initial": vals[0],
        "final": vals[vals.len() - 1],
        "min": vals.iter().copied().fold(f64::INFINITY, f64::min),
        "max": vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn metadata(command: &str, config: &ScenarioConfig, series: &ObservableSeries, seconds: f64, threads: usize) -> Json {
    json!({
        "command": command,
        "version": version_string(),
        "config": config,
        "config_toml": config.to_toml(),
        "seed": config.run.seed,
        "n_t": config.run.n_t,
        "dt": config.run.dt,
        "threads": threads,
        "wall_clock_seconds": seconds,
        "finished_unix_seconds": unix_seconds(),
        "model_hash": config.model_hash(),
        "spin_length": spin_length_summary(series),
        "failures": { "count": series.metadata.failures.len(), "records": series.metadata.failures },
        "warnings": series.metadata.warnings,
        "series": series.metadata,
    })
}

fn simulate(config: &ScenarioConfig, threads: usize) -> Result<ObservableSeries, CliError> {
    let mut series = config.simulation()?.run_ensemble(&config.trajectories(threads))?;
    series.metadata.model_hash = Some(config.model_hash());
    Ok(series)
}

fn oracle_series(config: &ScenarioConfig) -> Result<ObservableSeries, CliError> {
    let model = config.model()?;
    let detunings = match &model.disorder {
        Some(d) if d.frozen => {
            let mut rng = TrajectoryRng::new(config.run.seed, SHARED_STREAM);
            Some(sample_disorder::<f64, _>(d.sigma2, model.n_spins(), &mut rng)?)
        }
        _ => None,
    };
    let mut series = run_oracle(
        &model,
        &config.noise,
        &config.initial_state()?,
        config.run.photon_levels,
        detunings.as_deref(),
        &config.grid()?,
        &config.observables,
        &config.oracle_options(),
    )?;
    series.metadata.model_hash = Some(config.model_hash());
    Ok(series)
}

/// Runs the DDTWA ensemble; `threads = 0` uses every core.
pub fn run(config: ScenarioConfig, out: &Path, threads: usize) -> Result<Outputs, CliError> {
    let config = config.resolve()?;
    let start = Instant::now();
    let series = simulate(&config, threads)?;
    let meta = metadata("run", &config, &series, start.elapsed().as_secs_f64(), threads);
    Ok(Outputs {
        table: write(out, "run.csv", &series.to_csv())?,
        metadata: write(out, "run.json", &serde_json::to_string_pretty(&meta).expect("json"))?,
    })
}

/// Integrates the master equation for the same scenario.
pub fn run_oracle_command(config: ScenarioConfig, out: &Path) -> Result<Outputs, CliError> {
    let config = config.resolve()?;
    let start = Instant::now();
    let series = oracle_series(&config)?;
    let meta = metadata("oracle", &config, &series, start.elapsed().as_secs_f64(), 1);
    Ok(Outputs {
        table: write(out, "oracle.csv", &series.to_csv())?,
        metadata: write(out, "oracle.json", &serde_json::to_string_pretty(&meta).expect("json"))?,
    })
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<ddtwa::Column>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_csv(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Compares two tables and writes `compare.json`. A failed comparison is
/// returned as the report together with an error.
pub fn compare(
    a: &Path,
    b: &Path,
    tolerance: &CompareConfig,
    out: &Path,
) -> Result<(CompareReport, PathBuf), (CliError, Option<CompareReport>)> {
    let report = (|| compare_tables(&read_table(a)?, &read_table(b)?, tolerance))().map_err(|e| (e, None))?;
    let doc = json!({ "version": version_string(), "tables": [a, b], "report": report });
    let path = write(out, "compare.json", &serde_json::to_string_pretty(&doc).expect("json")).map_err(|e| (e, None))?;
    if report.pass {
        Ok((report, path))
    } else {
        let failed: Vec<&str> = report.columns.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err((CliError::Comparison(format!("columns outside tolerance: {}", failed.join(", "))), Some(report)))
    }
}

/// Re-runs the scenario for each value of `parameter`, continuing past
/// failures, and tabulates window averages of every column.
pub fn sweep(
    tree: &Value,
    parameter: &str,
    values: &[f64],
    engine: Engine,
    out: &Path,
    threads: usize,
) -> Result<Outputs, CliError> {
    set_path(&mut tree.clone(), parameter, Value::Float(0.0))?;
    let integer_key = lookup(tree, parameter).is_some_and(|v| v.is_integer());
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for &v in values {
        let value = if integer_key && v.fract() == 0.0 { Value::Integer(v as i64) } else { Value::Float(v) };
        let outcome = (|| {
            let mut t = tree.clone();
            set_path(&mut t, parameter, value)?;
            let config = ScenarioConfig::from_tree(t)?.resolve()?;
            let series = match engine {
                Engine::Ddtwa => simulate(&config, threads)?,
                Engine::Oracle => oracle_series(&config)?,
            };
            Ok::<_, CliError>((config, series))
        })();
        match outcome {
            Ok((config, series)) => {
                let names = header.get_or_insert_with(|| series.names().map(String::from).collect());
                let from = config.window_start();
                let mut row = vec![format!("{v}")];
                for name in names.iter() {
                    match series.window_average(name, from) {
                        Some(w) => row.extend([format!("{}", w.mean), format!("{}", w.stderr)]),
                        None => row.extend(["NaN".to_string(), "NaN".to_string()]),
                    }
                }
                rows.push(row.join(","));
                runs.push(json!({ "value": v, "window_start": from, "series": series.metadata }));
            }
            Err(e) => {
                eprintln!("sweep {parameter} = {v}: {e}");
                failures.push(json!({ "value": v, "error": e.to_string(), "exit_code": e.exit_code() }));
            }
        }
    }
    let mut table = parameter.to_string();
    for name in header.iter().flatten() {
        table.push_str(&format!(",{name}_mean,{name}_stderr"));
    }
    table.push('\n');
    for r in &rows {
        table.push_str(r);
        table.push('\n');
    }
    let doc = json!({
        "version": version_string(),
        "parameter": parameter,
        "values": values,
        "engine": engine,
        "base_config": tree,
        "runs": runs,
        "failures": failures,
    });
    let outputs = Outputs {
        table: write(out, "sweep.csv", &table)?,
        metadata: write(out, "sweep.json", &serde_json::to_string_pretty(&doc).expect("json"))?,
    };
    if failures.is_empty() {
        Ok(outputs)
    } else {
        Err(CliError::Numerical(format!("{} of {} sweep values failed (see sweep.json)", failures.len(), values.len())))
    }
}

fn lookup<'a>(tree: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(tree, |node, seg| match node {
        Value::Table(t) => t.get(seg),
        Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}
