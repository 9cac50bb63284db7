//! Scenario files: a versioned TOML schema, dotted-key overrides and the
//! translation into engine types.

use std::f64::consts::PI;
use std::path::Path;

use ddtwa::oracle::OracleOptions;
use ddtwa::{
    build_power_law_couplings, default_dt, Axis, Cavity, Couplings, Direction, DisorderSpec, DriftScheme,
    FailurePolicy, Fields, LatticeSpec, Model, NoiseChannel, ObservableRequest, ProductStateSpec, Simulation,
    TimeGrid, TrajectorySpec,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: Vec<NoiseChannel>,
    #[serde(default)]
    pub initial: InitialConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub observables: ObservableRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_spins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
}

/// Simple cubic lattice, sites at integer multiples of `spacing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub dims: [usize; 3],
    #[serde(default = "one_f64")]
    pub spacing: f64,
}

/// `J_ij σ^a_i σ^a_j` with `J_ij = J_ref / r^alpha`; without a lattice only
/// `alpha = 0` (all-to-all) is allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub axis: Axis,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(rename = "normalize_by_N", default = "yes")]
    pub normalize_by_n: bool,
    #[serde(default)]
    pub cutoff_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    #[serde(rename = "Omega")]
    pub omega: f64,
    pub axis: Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderConfig {
    pub sigma2: f64,
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub g: f64,
    pub kappa: f64,
    #[serde(rename = "Omega", default)]
    pub drive: f64,
}

/// Product state. `per_spin` (pairs of `[theta, phi]`) overrides the uniform
/// angles; `alpha0` is the coherent cavity amplitude `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(default = "pi")]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_spin: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub alpha0: [f64; 2],
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { theta: PI, phi: 0.0, per_spin: None, alpha0: [0.0, 0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub t_end: f64,
    /// Filled from the stability heuristic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one_usize")]
    pub output_stride: usize,
    #[serde(default = "thousand")]
    pub n_t: u64,
    #[serde(default)]
    pub seed: u64,
    /// Length of the final averaging window; a quarter of `t_end` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_state_window: Option<f64>,
    #[serde(default)]
    pub scheme: DriftScheme,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
    /// Fock levels kept by the oracle for the cavity mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_step_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_max_dim: Option<usize>,
}

/// Pass when `|a - b| <= z_max·sqrt(se_a² + se_b²) + abs_floor +
/// rel_floor·max(|a|, |b|)` at every compared time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    #[serde(default = "four")]
    pub z_max: f64,
    #[serde(default)]
    pub abs_floor: f64,
    #[serde(default)]
    pub rel_floor: f64,
    #[serde(default)]
    pub t_from: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { z_max: 4.0, abs_floor: 0.0, rel_floor: 0.0, t_from: 0.0, columns: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Ddtwa,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Dotted key, e.g. `model.fields.Omega` or `noise.0.gamma_phi`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub engine: Engine,
}

fn one_f64() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn thousand() -> u64 {
    1000
}
fn four() -> f64 {
    4.0
}
fn pi() -> f64 {
    PI
}
fn yes() -> bool {
    true
}

/// Reads a TOML file into a value tree, before any override is applied.
pub fn read_tree(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_tree(&text)
}

pub fn parse_tree(text: &str) -> Result<Value, CliError> {
    text.parse::<toml::Table>().map(Value::Table).map_err(|e| CliError::Config(e.to_string()))
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted key. Numeric segments index arrays, which must already
/// hold that element; missing tables along the way are created.
pub fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let mut node = tree;
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        node = match node {
            Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| Value::Table(toml::Table::new()))
            }
            Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| CliError::Config(format!("`{key}`: `{seg}` is not an index")))?;
                let len = a.len();
                let slot = a.get_mut(i).ok_or_else(|| CliError::Config(format!("`{key}`: index {i} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("`{key}`: `{}` is not a table", segments[..k].join(".")))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Applies `key=value` overrides in order.
pub fn apply_overrides(tree: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
        set_path(tree, key.trim(), parse_value(raw.trim()))?;
    }
    Ok(())
}

impl ScenarioConfig {
    /// Deserializes and validates; every unknown key and invalid value is
    /// listed in the error.
    pub fn from_tree(tree: Value) -> Result<Self, CliError> {
        let mut unknown = Vec::new();
        let config: ScenarioConfig = serde_ignored::deserialize(tree, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Config(format!("schema error: {e}")))?;
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(CliError::Config(format!("invalid values: {}", problems.join("; "))));
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::from_tree(parse_tree(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        need(self.schema_version == SCHEMA_VERSION, format!("schema_version must be {SCHEMA_VERSION}"));
        let m = &self.model;
        need(m.n_spins > 0, "model.n_spins must be positive".into());
        if let Some(l) = &m.lattice {
            need(l.dims.iter().product::<usize>() == m.n_spins, "model.lattice.dims must multiply to model.n_spins".into());
            need(l.spacing > 0.0, "model.lattice.spacing must be positive".into());
        }
        for (k, c) in m.couplings.iter().enumerate() {
            need(c.j.is_finite(), format!("model.couplings.{k}.J must be finite"));
            need(nonneg(c.alpha), format!("model.couplings.{k}.alpha must be nonnegative"));
            need(nonneg(c.cutoff_ratio), format!("model.couplings.{k}.cutoff_ratio must be nonnegative"));
            need(c.alpha == 0.0 || m.lattice.is_some(), format!("model.couplings.{k}.alpha > 0 needs model.lattice"));
        }
        if let Some(f) = &m.fields {
            need(f.omega.is_finite(), "model.fields.Omega must be finite".into());
        }
        if let Some(d) = &m.disorder {
            need(nonneg(d.sigma2), "model.disorder.sigma2 must be nonnegative".into());
        }
        if let Some(c) = &m.cavity {
            need(c.g.is_finite(), "model.cavity.g must be finite".into());
            need(nonneg(c.kappa), "model.cavity.kappa must be nonnegative".into());
            need(c.drive.is_finite(), "model.cavity.Omega must be finite".into());
        }
        for (k, ch) in self.noise.iter().enumerate() {
            if let Err(e) = ch.validate() {
                need(false, format!("noise.{k}: {e}"));
            }
        }
        if let Some(ps) = &self.initial.per_spin {
            need(ps.len() == m.n_spins, format!("initial.per_spin has {} entries for {} spins", ps.len(), m.n_spins));
        }
        let r = &self.run;
        need(nonneg(r.t_end), "run.t_end must be nonnegative".into());
        need(r.dt.is_none_or(|dt| dt > 0.0 && dt.is_finite()), "run.dt must be positive".into());
        need(r.output_stride > 0, "run.output_stride must be at least 1".into());
        need(r.n_t > 0, "run.n_t must be positive".into());
        need(r.steady_state_window.is_none_or(|w| w > 0.0 && w <= r.t_end), "run.steady_state_window must lie in (0, t_end]".into());
        need(r.oracle_step_fraction.is_none_or(|f| f > 0.0), "run.oracle_step_fraction must be positive".into());
        if let Some(c) = &self.compare {
            need(nonneg(c.z_max) && nonneg(c.abs_floor) && nonneg(c.rel_floor), "compare tolerances must be nonnegative".into());
        }
        if let Err(e) = self.observables.validate(m.n_spins) {
            need(false, format!("observables: {e}"));
        }
        p
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let m = &self.model;
        let n = m.n_spins;
        let mut model = Model::new(n)?;
        let lattice = m.lattice.as_ref().map(|l| LatticeSpec::cubic(l.dims, l.spacing)).transpose()?;
        for c in &m.couplings {
            let block = match &lattice {
                Some(lat) => build_power_law_couplings(lat, c.axis, c.j, c.alpha, c.normalize_by_n, c.cutoff_ratio)?,
                None => Couplings::uniform(c.axis, n, if c.normalize_by_n { c.j / n as f64 } else { c.j }),
            };
            model = model.with_coupling(block)?;
        }
        if let Some(lat) = lattice {
            model = model.with_lattice(lat)?;
        }
        if let Some(f) = &m.fields {
            model = model.with_fields(Fields::uniform(n, f.omega, f.axis))?;
        }
        if let Some(d) = &m.disorder {
            model = model.with_disorder(DisorderSpec { sigma2: d.sigma2, frozen: d.frozen })?;
        }
        if let Some(c) = &m.cavity {
            model = model.with_cavity(Cavity::new(c.g, c.kappa, c.drive, n)?)?;
        }
        Ok(model)
    }

    pub fn initial_state(&self) -> Result<ProductStateSpec, CliError> {
        let i = &self.initial;
        let spec = match &i.per_spin {
            Some(angles) => ProductStateSpec::per_spin(angles.iter().map(|&[theta, phi]| Direction { theta, phi }).collect())?,
            None => ProductStateSpec::uniform(Direction { theta: i.theta, phi: i.phi }, self.model.n_spins),
        };
        Ok(if self.model.cavity.is_some() { spec.with_cavity(Complex64::new(i.alpha0[0], i.alpha0[1])) } else { spec })
    }

    /// Fills in defaults that depend on the model so that the serialized
    /// config reproduces the run exactly.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.run.dt.is_none() {
            self.run.dt = Some(default_dt(&self.model()?, &self.noise, &self.initial_state()?));
        }
        if self.run.steady_state_window.is_none() {
            self.run.steady_state_window = Some(self.run.t_end / 4.0);
        }
        Ok(self)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        let dt = self.run.dt.ok_or_else(|| CliError::Config("run.dt unresolved".into()))?;
        Ok(TimeGrid::new(self.run.t_end, dt, self.run.output_stride)?)
    }

    pub fn simulation(&self) -> Result<Simulation<f64>, CliError> {
        Ok(Simulation::new(self.model()?, self.noise.clone(), self.initial_state()?, self.grid()?)?
            .with_scheme(self.run.scheme)
            .with_observables(self.observables.clone())?)
    }

    pub fn trajectories(&self, workers: usize) -> TrajectorySpec {
        TrajectorySpec::new(self.run.n_t, self.run.seed).with_workers(workers).with_failure_policy(self.run.failure_policy)
    }

    pub fn oracle_options(&self) -> OracleOptions {
        let d = OracleOptions::default();
        OracleOptions {
            step_fraction: self.run.oracle_step_fraction.unwrap_or(d.step_fraction),
            max_dim: self.run.oracle_max_dim.unwrap_or(d.max_dim),
            ..d
        }
    }

    /// Start of the steady-state averaging window.
    pub fn window_start(&self) -> f64 {
        self.run.t_end - self.run.steady_state_window.unwrap_or(self.run.t_end / 4.0)
    }

    /// SHA-256 over the physical content: model, noise and initial state.
    pub fn model_hash(&self) -> String {
        let physical = serde_json::json!({ "model": self.model, "noise": self.noise, "initial": self.initial });
        format!("{:x}", Sha256::digest(physical.to_string().as_bytes()))
    }
}
