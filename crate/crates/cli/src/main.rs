use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ddtwa_cli::config::{apply_overrides, read_tree, set_path, CompareConfig, Engine};
use ddtwa_cli::{commands, CliError, ScenarioConfig};
use toml::Value;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Run,
    Oracle,
    Compare,
    Sweep,
}

/// Open spin-ensemble simulations with the DDTWA and a master-equation oracle.
///
/// Exit codes: 0 success, 1 configuration or input error, 2 numerical
/// failure, 3 comparison failure.
#[derive(Debug, Parser)]
#[command(name = "ddtwa", version)]
struct Cli {
    #[arg(long, value_enum, default_value = "run")]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set run.n_t=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Sweep: dotted config key to vary.
    #[arg(long)]
    param: Option<String>,
    /// Sweep: comma-separated values; an empty string sweeps nothing.
    #[arg(long)]
    values: Option<String>,
    /// Sweep: engine for each value.
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    /// Compare: z-score bound.
    #[arg(long)]
    z_max: Option<f64>,
    /// Compare: absolute tolerance floor.
    #[arg(long)]
    abs_floor: Option<f64>,
    /// Compare: relative tolerance floor.
    #[arg(long)]
    rel_floor: Option<f64>,
    /// Compare: ignore times before this.
    #[arg(long)]
    t_from: Option<f64>,
    /// Compare: the two tables.
    tables: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ddtwa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Config tree with `--set`, `--seed` and `--trajectories` applied.
fn load_tree(cli: &Cli) -> Result<Value, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut tree = read_tree(path)?;
    apply_overrides(&mut tree, &cli.set)?;
    if let Some(seed) = cli.seed {
        set_path(&mut tree, "run.seed", Value::Integer(seed as i64))?;
    }
    if let Some(n) = cli.trajectories {
        set_path(&mut tree, "run.n_t", Value::Integer(n as i64))?;
    }
    Ok(tree)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run | Command::Oracle => {
            let config = ScenarioConfig::from_tree(load_tree(&cli)?)?;
            let out = match cli.command {
                Command::Run => commands::run(config, &cli.output_dir, cli.threads)?,
                _ => commands::run_oracle_command(config, &cli.output_dir)?,
            };
            println!("wrote {} and {}", out.table.display(), out.metadata.display());
            Ok(())
        }
        Command::Compare => {
            let [a, b] = cli.tables.as_slice() else {
                return Err(CliError::Config("compare needs exactly two tables".into()));
            };
            let mut tol = match &cli.config {
                Some(_) => ScenarioConfig::from_tree(load_tree(&cli)?)?.compare.unwrap_or_default(),
                None => CompareConfig::default(),
            };
            tol.z_max = cli.z_max.unwrap_or(tol.z_max);
            tol.abs_floor = cli.abs_floor.unwrap_or(tol.abs_floor);
            tol.rel_floor = cli.rel_floor.unwrap_or(tol.rel_floor);
            tol.t_from = cli.t_from.unwrap_or(tol.t_from);
            let (report, path) = match commands::compare(a, b, &tol, &cli.output_dir) {
                Ok((r, p)) => (Some(r), Ok(p)),
                Err((e, r)) => (r, Err(e)),
            };
            for c in report.iter().flat_map(|r| &r.columns) {
                println!(
                    "{} {:<12} max z {:>9.3}  max |dev| {:>10.4e}  max dev/tol {:>8.3}",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    c.max_z,
                    c.max_abs_dev,
                    c.max_ratio
                );
            }
            path.map(|p| println!("wrote {}", p.display()))
        }
        Command::Sweep => {
            let tree = load_tree(&cli)?;
            let block = ScenarioConfig::from_tree(tree.clone())?.sweep;
            let parameter = cli
                .param
                .clone()
                .or_else(|| block.as_ref().map(|s| s.parameter.clone()))
                .ok_or_else(|| CliError::Config("sweep needs --param or a [sweep] block".into()))?;
            let values = match &cli.values {
                Some(text) => parse_values(text)?,
                None => block.as_ref().map(|s| s.values.clone()).unwrap_or_default(),
            };
            let engine = cli.engine.or(block.map(|s| s.engine)).unwrap_or_default();
            let out = commands::sweep(&tree, &parameter, &values, engine, &cli.output_dir, cli.threads)?;
            println!("wrote {} and {}", out.table.display(), out.metadata.display());
            Ok(())
        }
    }
}

fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Config(format!("sweep value `{s}` is not a number"))))
        .collect()
}
