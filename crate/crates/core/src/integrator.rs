//! Stochastic time stepping of single trajectories and ensemble averaging.
//!
//! A step evaluates everything at the pre-step state: the precession vectors
//! `Ω_eff^i`, the Ito noise increments and the cavity drift. The coherent
//! part is applied either as an exact rotation about `Ω_eff^i` (default) or
//! as a plain Euler update. Noise increments are then added. The rotation
//! keeps `|s_i|` fixed under coherent dynamics; the Euler update inflates
//! `|s_i|²` by a factor `1 + |Ω_eff|² dt²` every step.
//!
//! Trajectories are grouped into at most [`MAX_GROUPS`] contiguous index
//! ranges. Groups run in parallel, each sequentially, and their sums are
//! combined in group order, so results do not depend on the worker count.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_disorder, ModelSpec, ModelSummary};
use crate::noise::{
    cavity_loss_increment, decay_increment, decay_increment_improved, decay_increment_qle, dephasing_increment,
    ou_step, NoiseChannel, OuState,
};
use crate::observables::{columns, linear_scale, ObservableRequest, RawLayout};
use crate::rng::{TrajectoryRng, SHARED_STREAM};
use crate::scalar::Real;
use crate::series::{Column, FailureRecord, ObservableSeries, RunMetadata};
use crate::spin::{sample_initial_ensemble, BlochVector, Direction, ProductStateSpec, SpinEnsembleState};

/// Upper bound on the number of trajectory groups (and jackknife blocks).
pub const MAX_GROUPS: usize = 64;

/// How the coherent part of a step is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// `s → R(Ω_eff dt) s`, exact precession about the pre-step field.
    #[default]
    Rotation,
    /// `s → s + (Ω_eff × s) dt`.
    Euler,
}

impl DriftScheme {
    pub fn name(self) -> &'static str {
        match self {
            DriftScheme::Rotation => "rotation",
            DriftScheme::Euler => "euler",
        }
    }
}

/// What to do with a trajectory that becomes non-finite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Drop it from the averages and record it in the metadata.
    Exclude,
}

/// Fixed step grid. The run takes `round(t_end / dt)` steps and records
/// every `output_stride`-th state, starting at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub output_stride: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64, output_stride: usize) -> Result<Self> {
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("t_end = {t_end}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if output_stride == 0 {
            return Err(Error::InvalidParameter("output stride must be at least 1".into()));
        }
        Ok(Self { t_end, dt, output_stride })
    }

    /// Grid with about `samples` recorded points (at least 2 if `t_end > 0`).
    pub fn with_samples(t_end: f64, dt: f64, samples: usize) -> Result<Self> {
        let steps = (t_end / dt).round() as usize;
        let stride = (steps / samples.max(1)).max(1);
        Self::new(t_end, dt, stride)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        self.n_steps() / self.output_stride + 1
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.n_samples()).map(|k| (k * self.output_stride) as f64 * self.dt).collect()
    }
}

/// Ensemble size, seeding and parallelism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub n_trajectories: u64,
    pub master_seed: u64,
    /// Worker threads; `0` uses the global pool.
    pub workers: usize,
    pub failure_policy: FailurePolicy,
}

impl TrajectorySpec {
    pub fn new(n_trajectories: u64, master_seed: u64) -> Self {
        Self { n_trajectories, master_seed, workers: 0, failure_policy: FailurePolicy::Abort }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_failure_policy(mut self, policy: FailurePolicy) -> Self {
        self.failure_policy = policy;
        self
    }
}

/// Default step `0.01 / max(|Ω_eff|, Γ, Γφ, κ, 1/τ_c, σ)`, with the field
/// evaluated on the classical initial state (unit vectors, `α = α0`).
pub fn default_dt<T: Real>(model: &ModelSpec<T>, channels: &[NoiseChannel], initial: &ProductStateSpec) -> f64 {
    let n = model.n_spins();
    let dirs = initial.directions();
    let spins = (0..n)
        .map(|i| {
            let d = if dirs.len() == 1 { dirs[0] } else { dirs.get(i).copied().unwrap_or(Direction::DOWN) };
            BlochVector::from_array(d.unit_vector()).cast()
        })
        .collect();
    let cavity = model.cavity.map(|_| {
        let a = initial.cavity_alpha0.unwrap_or_default();
        Complex::new(T::lit(a.re), T::lit(a.im))
    });
    let state = SpinEnsembleState { spins, cavity, time: T::zero() };
    let mut scale = model.typical_field(&state, None);
    for c in channels {
        scale = scale.max(c.max_rate());
    }
    if let Some(c) = &model.cavity {
        scale = scale.max(c.kappa.as_f64()).max(c.g.as_f64());
    }
    if let Some(d) = &model.disorder {
        scale = scale.max(3.0 * d.sigma2.sqrt());
    }
    if scale > 0.0 {
        0.01 / scale
    } else {
        0.01
    }
}

/// A fully specified stochastic run.
#[derive(Clone, Debug)]
pub struct Simulation<T: Real> {
    pub model: ModelSpec<T>,
    pub channels: Vec<NoiseChannel>,
    pub initial: ProductStateSpec,
    pub grid: TimeGrid,
    pub scheme: DriftScheme,
    pub observables: ObservableRequest,
}

/// Per-trajectory mutable state beyond the phase-space point.
struct Workspace<T> {
    fields: Vec<BlochVector<T>>,
    z_noise: Vec<T>,
    ou: Vec<OuState<T>>,
    detunings: Option<Vec<T>>,
    shared_dw: Vec<T>,
    deta: Vec<T>,
}

impl<T: Real> Simulation<T> {
    pub fn new(
        model: ModelSpec<T>,
        channels: Vec<NoiseChannel>,
        initial: ProductStateSpec,
        grid: TimeGrid,
    ) -> Result<Self> {
        for c in &channels {
            c.validate()?;
        }
        let n = model.n_spins();
        if initial.len() != 1 && initial.len() != n {
            return Err(Error::DimensionMismatch(format!("initial state has {} directions for {n} spins", initial.len())));
        }
        if model.cavity.is_none() && initial.cavity_alpha0.is_some() {
            return Err(Error::InvalidParameter("initial cavity amplitude given but the model has no cavity".into()));
        }
        Ok(Self { model, channels, initial, grid, scheme: DriftScheme::default(), observables: ObservableRequest::default() })
    }

    pub fn with_scheme(mut self, scheme: DriftScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_observables(mut self, request: ObservableRequest) -> Result<Self> {
        request.validate(self.model.n_spins())?;
        self.observables = request;
        Ok(self)
    }

    pub fn layout(&self) -> RawLayout {
        RawLayout::new(self.model.n_spins(), self.model.cavity.is_some(), &self.observables)
    }

    fn initial_spec(&self) -> ProductStateSpec {
        match (&self.model.cavity, self.initial.cavity_alpha0) {
            (Some(_), None) => self.initial.clone().with_cavity(Complex::new(0.0, 0.0)),
            _ => self.initial.clone(),
        }
    }

    /// Detunings shared by all trajectories, if the disorder is frozen.
    fn frozen_detunings(&self, master_seed: u64) -> Result<Option<Vec<T>>> {
        match &self.model.disorder {
            Some(d) if d.frozen => {
                let mut rng = TrajectoryRng::new(master_seed, SHARED_STREAM);
                Ok(Some(sample_disorder(d.sigma2, self.model.n_spins(), &mut rng)?))
            }
            _ => Ok(None),
        }
    }

    /// Runs trajectory `index` of the ensemble seeded by `master_seed`,
    /// calling `on_sample(k, state)` at every recorded time.
    pub fn run_trajectory(
        &self,
        master_seed: u64,
        index: u64,
        on_sample: impl FnMut(usize, &SpinEnsembleState<T>),
    ) -> Result<SpinEnsembleState<T>> {
        let frozen = self.frozen_detunings(master_seed)?;
        self.trajectory(master_seed, index, frozen.as_deref(), &self.initial_spec(), on_sample)
    }

    fn trajectory(
        &self,
        master_seed: u64,
        index: u64,
        frozen: Option<&[T]>,
        spec: &ProductStateSpec,
        mut on_sample: impl FnMut(usize, &SpinEnsembleState<T>),
    ) -> Result<SpinEnsembleState<T>> {
        let n = self.model.n_spins();
        let mut rng = TrajectoryRng::new(master_seed, index);
        let mut state: SpinEnsembleState<T> = sample_initial_ensemble(spec, n, &mut rng)?;
        let detunings = match (&self.model.disorder, frozen) {
            (_, Some(f)) => Some(f.to_vec()),
            (Some(d), None) => Some(sample_disorder(d.sigma2, n, &mut rng)?),
            (None, None) => None,
        };
        let ou = self
            .channels
            .iter()
            .filter_map(|c| match *c {
                NoiseChannel::DephasingColored { sigma, collective, .. } => {
                    Some(OuState::stationary(if collective { 1 } else { n }, T::lit(sigma), &mut rng))
                }
                _ => None,
            })
            .collect::<Vec<_>>();
        let mut ws = Workspace {
            fields: vec![BlochVector::zero(); n],
            z_noise: if ou.is_empty() { Vec::new() } else { vec![T::zero(); n] },
            ou,
            detunings,
            shared_dw: Vec::new(),
            deta: Vec::new(),
        };
        let stride = self.grid.output_stride;
        let dt = T::lit(self.grid.dt);
        on_sample(0, &state);
        for step in 1..=self.grid.n_steps() {
            self.step(&mut state, &mut ws, &mut rng, dt);
            state.time = T::lit(step as f64 * self.grid.dt);
            let finite = state.spins.iter().all(|s| s.is_finite())
                && state.cavity.is_none_or(|a| a.re.is_finite() && a.im.is_finite());
            if !finite {
                return Err(Error::NonFinite { trajectory: index, time: state.time.as_f64() });
            }
            if step % stride == 0 {
                on_sample(step / stride, &state);
            }
        }
        Ok(state)
    }

    fn step(&self, state: &mut SpinEnsembleState<T>, ws: &mut Workspace<T>, rng: &mut TrajectoryRng, dt: T) {
        let n = state.spins.len();
        let sqrt_dt = dt.sqrt();

        if !ws.ou.is_empty() {
            ws.z_noise.iter_mut().for_each(|z| *z = T::zero());
            for ou in &ws.ou {
                if ou.len() == 1 {
                    ws.z_noise.iter_mut().for_each(|z| *z = *z + ou.xi[0]);
                } else {
                    ws.z_noise.iter_mut().zip(&ou.xi).for_each(|(z, x)| *z = *z + *x);
                }
            }
        }
        let z_noise = (!ws.z_noise.is_empty()).then_some(ws.z_noise.as_slice());
        self.model.effective_fields(state, ws.detunings.as_deref(), z_noise, &mut ws.fields);
        let cavity_drift = state.cavity.and_then(|_| self.model.cavity_drift(state.total_spin()));

        ws.shared_dw.clear();
        for c in &self.channels {
            if let NoiseChannel::DephasingCollective { .. } = c {
                ws.shared_dw.push(rng.wiener(sqrt_dt));
            }
        }

        for i in 0..n {
            let s = state.spins[i];
            let w = ws.fields[i];
            let mut next = match self.scheme {
                DriftScheme::Rotation => s.precess(w, dt),
                DriftScheme::Euler => s + w.cross(s) * dt,
            };
            let mut shared = 0;
            for c in &self.channels {
                next += match *c {
                    NoiseChannel::DephasingIndividual { gamma_phi } => {
                        dephasing_increment(s, T::lit(gamma_phi), dt, rng.wiener(sqrt_dt))
                    }
                    NoiseChannel::DephasingCollective { gamma_phi } => {
                        shared += 1;
                        dephasing_increment(s, T::lit(gamma_phi), dt, ws.shared_dw[shared - 1])
                    }
                    NoiseChannel::DecayStandard { gamma } => decay_increment(s, T::lit(gamma), dt, rng.wiener(sqrt_dt)),
                    NoiseChannel::DecayImproved { gamma } => {
                        let (a, b) = (rng.wiener(sqrt_dt), rng.wiener(sqrt_dt));
                        decay_increment_improved(s, T::lit(gamma), dt, a, b)
                    }
                    NoiseChannel::DecayQle { gamma } => {
                        let (a, b) = (rng.wiener(sqrt_dt), rng.wiener(sqrt_dt));
                        decay_increment_qle(s, T::lit(gamma), dt, a, b)
                    }
                    NoiseChannel::DephasingColored { .. } => continue,
                };
            }
            state.spins[i] = next;
        }

        if let (Some(alpha), Some(drift), Some(cav)) = (state.cavity, cavity_drift, &self.model.cavity) {
            let (a, b) = (rng.wiener(sqrt_dt), rng.wiener(sqrt_dt));
            state.cavity = Some(alpha + drift * dt + cavity_loss_increment(alpha, cav.kappa, dt, a, b));
        }

        let mut k = 0;
        for c in &self.channels {
            if let NoiseChannel::DephasingColored { sigma, tau_c, .. } = *c {
                let ou = &mut ws.ou[k];
                ws.deta.clear();
                ws.deta.extend((0..ou.len()).map(|_| rng.wiener::<T>(sqrt_dt)));
                ou_step(ou, T::lit(tau_c), T::lit(sigma), dt, &ws.deta);
                k += 1;
            }
        }
    }

    /// Runs the ensemble and returns the estimator time series.
    pub fn run_ensemble(&self, spec: &TrajectorySpec) -> Result<ObservableSeries> {
        if spec.n_trajectories == 0 {
            return Err(Error::InvalidParameter("need at least one trajectory".into()));
        }
        let layout = self.layout();
        let width = layout.len();
        let n_samples = self.grid.n_samples();
        let frozen = self.frozen_detunings(spec.master_seed)?;
        let init = self.initial_spec();
        let n_t = spec.n_trajectories;
        let n_groups = (n_t as usize).min(MAX_GROUPS);
        let bounds: Vec<(u64, u64)> = (0..n_groups as u64)
            .map(|g| (g * n_t / n_groups as u64, (g + 1) * n_t / n_groups as u64))
            .collect();

        let run_group = |&(lo, hi): &(u64, u64)| -> Result<GroupSums> {
            let mut sums = GroupSums::new(n_samples * width);
            let mut buf = vec![0.0; n_samples * width];
            let mut raw = vec![0.0; width];
            for index in lo..hi {
                let outcome = self.trajectory(spec.master_seed, index, frozen.as_deref(), &init, |k, st| {
                    layout.record(st, &mut raw);
                    buf[k * width..(k + 1) * width].copy_from_slice(&raw);
                });
                match outcome {
                    Ok(_) => {
                        for (j, v) in buf.iter().enumerate() {
                            sums.sum[j] += v;
                            sums.sq[j] += v * v;
                        }
                        sums.count += 1;
                    }
                    Err(Error::NonFinite { trajectory, time }) if spec.failure_policy == FailurePolicy::Exclude => {
                        sums.failures.push(FailureRecord { trajectory, time });
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(sums)
        };

        let groups: Vec<Result<GroupSums>> = if spec.workers == 0 {
            bounds.par_iter().map(run_group).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(spec.workers)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| bounds.par_iter().map(run_group).collect())
        };
        let groups = groups.into_iter().collect::<Result<Vec<_>>>()?;

        let mut total = GroupSums::new(n_samples * width);
        for g in &groups {
            total.add(g);
        }
        if total.count == 0 {
            return Err(Error::NonFinite {
                trajectory: total.failures.first().map_or(0, |f| f.trajectory),
                time: total.failures.first().map_or(0.0, |f| f.time),
            });
        }

        let series_columns = self.estimate(&layout, &groups, &total, n_samples);
        let mut warnings = Vec::new();
        if !total.failures.is_empty() {
            warnings.push(format!("{} trajectories became non-finite and were excluded", total.failures.len()));
        }
        if let Some(c) = series_columns.iter().find(|c| c.name == "photon_number") {
            let negative = c
                .mean
                .iter()
                .zip(&c.stderr)
                .filter(|(m, e)| matches!((m, e), (Some(m), Some(e)) if *m < -3.0 * e) || matches!((m, e), (Some(m), None) if *m < 0.0))
                .count();
            if negative > 0 {
                warnings.push(format!("photon number significantly negative at {negative} output times"));
            }
        }
        Ok(ObservableSeries {
            times: self.grid.sample_times(),
            columns: series_columns,
            metadata: RunMetadata {
                engine: "ddtwa".into(),
                master_seed: Some(spec.master_seed),
                n_trajectories: n_t,
                successes: total.count,
                failures: total.failures,
                dt: self.grid.dt,
                t_end: self.grid.t_end,
                output_stride: self.grid.output_stride,
                scheme: Some(self.scheme.name().into()),
                channels: self.channels.clone(),
                model: ModelSummary::from(&self.model),
                model_hash: None,
                warnings,
            },
        })
    }

    /// Means from the totals; standard errors from the per-trajectory
    /// variance (linear estimators) or a delete-one-group jackknife.
    fn estimate(&self, layout: &RawLayout, groups: &[GroupSums], total: &GroupSums, n_samples: usize) -> Vec<Column> {
        let width = layout.len();
        let n = total.count as f64;
        let live: Vec<&GroupSums> = groups.iter().filter(|g| g.count > 0).collect();
        let mut out: Vec<Column> = Vec::new();
        let mut avg = vec![0.0; width];
        let mut loo = vec![0.0; width];
        for k in 0..n_samples {
            let range = k * width..(k + 1) * width;
            for (a, s) in avg.iter_mut().zip(&total.sum[range.clone()]) {
                *a = s / n;
            }
            let cols = columns(&self.observables, layout, &layout.moments(&avg));
            if out.is_empty() {
                out = cols.iter().map(|c| Column { name: c.name.clone(), mean: Vec::new(), stderr: Vec::new() }).collect();
            }
            let jack: Vec<Vec<Option<f64>>> = if live.len() >= 2 && cols.iter().any(|c| c.linear.is_none()) {
                live.iter()
                    .map(|g| {
                        let m = n - g.count as f64;
                        for j in 0..width {
                            loo[j] = (total.sum[k * width + j] - g.sum[k * width + j]) / m;
                        }
                        columns(&self.observables, layout, &layout.moments(&loo)).into_iter().map(|c| c.value).collect()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            for (ci, c) in cols.iter().enumerate() {
                let err = if total.count < 2 {
                    None
                } else if let Some(j) = c.linear {
                    let idx = k * width + j;
                    let mean = total.sum[idx] / n;
                    let var = ((total.sq[idx] - n * mean * mean) / (n - 1.0)).max(0.0);
                    Some(linear_scale(j) * (var / n).sqrt())
                } else if jack.is_empty() {
                    None
                } else {
                    jackknife(jack.iter().map(|row| row[ci]))
                };
                out[ci].mean.push(c.value);
                out[ci].stderr.push(if c.value.is_some() { err } else { None });
            }
        }
        out
    }
}

fn jackknife(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    let g = v.len() as f64;
    let m = v.iter().sum::<f64>() / g;
    Some(((g - 1.0) / g * v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sqrt())
}

struct GroupSums {
    sum: Vec<f64>,
    sq: Vec<f64>,
    count: u64,
    failures: Vec<FailureRecord>,
}

impl GroupSums {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], sq: vec![0.0; len], count: 0, failures: Vec::new() }
    }

    fn add(&mut self, o: &GroupSums) {
        self.sum.iter_mut().zip(&o.sum).for_each(|(a, b)| *a += b);
        self.sq.iter_mut().zip(&o.sq).for_each(|(a, b)| *a += b);
        self.count += o.count;
        self.failures.extend(o.failures.iter().cloned());
    }
}

/// Classical mean-field evolution of unit spins (and a classical cavity
/// amplitude) with the averaged Markovian damping, integrated with RK4.
///
/// Colored dephasing has no mean-field term. Disorder enters only when it is
/// frozen, using the shared realization for `master_seed`. Columns: `Sx`,
/// `Sy`, `Sz` and, with a cavity, `photon_number = |α|²`.
pub fn mean_field_reference<T: Real>(
    model: &ModelSpec<T>,
    channels: &[NoiseChannel],
    initial: &ProductStateSpec,
    grid: &TimeGrid,
    master_seed: u64,
) -> Result<ObservableSeries> {
    let sim = Simulation::new(model.clone(), channels.to_vec(), initial.clone(), *grid)?;
    let detunings = sim.frozen_detunings(master_seed)?;
    let n = model.n_spins();
    let dirs = initial.directions();
    let mut state = SpinEnsembleState {
        spins: (0..n)
            .map(|i| BlochVector::from_array(dirs[if dirs.len() == 1 { 0 } else { i }].unit_vector()).cast::<T>())
            .collect(),
        cavity: model.cavity.map(|_| {
            let a = initial.cavity_alpha0.unwrap_or_default();
            Complex::new(T::lit(a.re), T::lit(a.im))
        }),
        time: T::zero(),
    };
    let (mut transverse, mut gamma) = (0.0, 0.0);
    for c in channels {
        match *c {
            NoiseChannel::DephasingIndividual { gamma_phi } | NoiseChannel::DephasingCollective { gamma_phi } => {
                transverse += gamma_phi
            }
            NoiseChannel::DecayStandard { gamma: g } | NoiseChannel::DecayImproved { gamma: g } | NoiseChannel::DecayQle { gamma: g } => {
                transverse += 0.5 * g;
                gamma += g;
            }
            NoiseChannel::DephasingColored { .. } => {}
        }
    }
    let (transverse, gamma) = (T::lit(transverse), T::lit(gamma));
    let kappa = model.cavity.map_or(T::zero(), |c| c.kappa);
    let mut fields = vec![BlochVector::zero(); n];
    let mut velocity = |st: &SpinEnsembleState<T>| -> (Vec<BlochVector<T>>, Option<Complex<T>>) {
        model.effective_fields(st, detunings.as_deref(), None, &mut fields);
        let ds = fields
            .iter()
            .zip(&st.spins)
            .map(|(w, s)| w.cross(*s) + BlochVector::new(-transverse * s.x, -transverse * s.y, -gamma * (s.z + T::one())))
            .collect();
        let da = st.cavity.and_then(|a| model.cavity_drift(st.total_spin()).map(|d| d - a * kappa));
        (ds, da)
    };
    let shifted = |st: &SpinEnsembleState<T>, k: &(Vec<BlochVector<T>>, Option<Complex<T>>), h: T| SpinEnsembleState {
        spins: st.spins.iter().zip(&k.0).map(|(s, d)| *s + *d * h).collect(),
        cavity: st.cavity.zip(k.1).map(|(a, d)| a + d * h),
        time: st.time + h,
    };

    let names = if model.cavity.is_some() { vec!["Sx", "Sy", "Sz", "photon_number"] } else { vec!["Sx", "Sy", "Sz"] };
    let mut cols: Vec<Column> =
        names.iter().map(|s| Column { name: s.to_string(), mean: Vec::new(), stderr: Vec::new() }).collect();
    let mut record = |st: &SpinEnsembleState<T>| {
        let m = st.total_spin();
        let mut vals = vec![0.5 * m.x.as_f64(), 0.5 * m.y.as_f64(), 0.5 * m.z.as_f64()];
        if let Some(a) = st.cavity {
            vals.push(a.norm_sqr().as_f64());
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.mean.push(Some(v));
            c.stderr.push(Some(0.0));
        }
    };

    let dt = T::lit(grid.dt);
    let half = T::lit(0.5) * dt;
    record(&state);
    for step in 1..=grid.n_steps() {
        let k1 = velocity(&state);
        let k2 = velocity(&shifted(&state, &k1, half));
        let k3 = velocity(&shifted(&state, &k2, half));
        let k4 = velocity(&shifted(&state, &k3, dt));
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..n {
            state.spins[i] += (k1.0[i] + k2.0[i] * two + k3.0[i] * two + k4.0[i]) * sixth;
        }
        if let (Some(a), Some(d1), Some(d2), Some(d3), Some(d4)) = (state.cavity, k1.1, k2.1, k3.1, k4.1) {
            state.cavity = Some(a + (d1 + d2 * two + d3 * two + d4) * sixth);
        }
        state.time = T::lit(step as f64 * grid.dt);
        if step % grid.output_stride == 0 {
            record(&state);
        }
    }
    Ok(ObservableSeries {
        times: grid.sample_times(),
        columns: cols,
        metadata: RunMetadata {
            engine: "mean_field".into(),
            master_seed: Some(master_seed),
            n_trajectories: 1,
            successes: 1,
            failures: Vec::new(),
            dt: grid.dt,
            t_end: grid.t_end,
            output_stride: grid.output_stride,
            scheme: Some("rk4".into()),
            channels: channels.to_vec(),
            model: ModelSummary::from(model),
            model_hash: None,
            warnings: Vec::new(),
        },
    })
}
