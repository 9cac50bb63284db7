//! Dense Lindblad integration over the spin ⊗ truncated-Fock basis.
//!
//! Basis index `n · 2^N + b`, where bit `i` of `b` is 1 when spin `i` is up
//! and `n` counts photons. The generator is applied matrix-free as
//! `dρ = -i (H_eff ρ - ρ H_eff†) + Σ_k γ_k L_k ρ L_k†` with
//! `H_eff = H - (i/2) Σ_k γ_k L_k† L_k`.

use num_complex::Complex64 as C64;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::integrator::TimeGrid;
use crate::models::{ModelSpec, ModelSummary};
use crate::noise::NoiseChannel;
use crate::observables::{columns, MomentSet, ObservableRequest, PhotonMoments, RawLayout};
use crate::series::{Column, ObservableSeries, RunMetadata};
use crate::spin::{Axis, ProductStateSpec};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tensor-product basis of `n_spins` spins and `photon_levels` Fock states
/// (1 when there is no cavity).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Basis {
    pub n_spins: usize,
    pub photon_levels: usize,
}

impl Basis {
    pub fn dim(&self) -> usize {
        (1usize << self.n_spins) * self.photon_levels
    }

    fn spin_dim(&self) -> usize {
        1 << self.n_spins
    }

    fn map(&self, f: impl Fn(usize, usize) -> Option<(usize, usize, C64)>) -> CsrMatrix {
        let sd = self.spin_dim();
        let mut t = Vec::new();
        for n in 0..self.photon_levels {
            for b in 0..sd {
                if let Some((n2, b2, v)) = f(n, b) {
                    t.push((n2 * sd + b2, n * sd + b, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.dim(), t)
    }

    /// Pauli matrix `σ^k` on spin `i`.
    pub fn sigma(&self, i: usize, axis: Axis) -> CsrMatrix {
        let m = 1usize << i;
        self.map(|n, b| {
            let up = b & m != 0;
            Some(match axis {
                Axis::X => (n, b ^ m, ONE),
                Axis::Y => (n, b ^ m, if up { I } else { -I }),
                Axis::Z => (n, b, if up { ONE } else { -ONE }),
            })
        })
    }

    /// `σ^-` on spin `i`.
    pub fn lower(&self, i: usize) -> CsrMatrix {
        let m = 1usize << i;
        self.map(|n, b| (b & m != 0).then_some((n, b ^ m, ONE)))
    }

    /// Collective `S_k = ½ Σ_i σ_i^k`.
    pub fn collective(&self, axis: Axis) -> CsrMatrix {
        let mut acc = CsrMatrix::zero(self.dim());
        for i in 0..self.n_spins {
            acc = acc.add(&self.sigma(i, axis));
        }
        acc.scale(C64::new(0.5, 0.0))
    }

    /// Photon annihilation operator.
    pub fn annihilate(&self) -> CsrMatrix {
        self.map(|n, b| (n > 0).then(|| (n - 1, b, C64::new((n as f64).sqrt(), 0.0))))
    }

    /// Population of Fock level `n`.
    fn photon_population(&self, rho: &[C64], n: usize) -> f64 {
        let (d, sd) = (self.dim(), self.spin_dim());
        (n * sd..(n + 1) * sd).map(|k| rho[k * d + k].re).sum()
    }
}

/// Hamiltonian and jump operators of a model.
#[derive(Clone, Debug)]
pub struct LiouvillianSpec {
    pub basis: Basis,
    pub hamiltonian: CsrMatrix,
    /// `(γ_k, L_k)`
    pub jumps: Vec<(f64, CsrMatrix)>,
    h_eff: CsrMatrix,
    h_eff_adj: CsrMatrix,
    jump_adj: Vec<CsrMatrix>,
}

/// Tolerances and caps of the dense integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub max_dim: usize,
    pub trace_tol: f64,
    /// Relative Frobenius norm of `ρ - ρ†`.
    pub hermiticity_tol: f64,
    /// Bound on the summed population of the two highest Fock levels.
    pub cutoff_tol: f64,
    /// RK4 substep as a fraction of the inverse spectral radius of the
    /// generator. Unitary drift errors scale with its fifth power.
    pub step_fraction: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { max_dim: 4096, trace_tol: 1e-8, hermiticity_tol: 1e-10, cutoff_tol: 1e-6, step_fraction: 0.02 }
    }
}

impl LiouvillianSpec {
    /// Builds `H` and the dissipators for `model`.
    ///
    /// `photon_levels` is required (and at least 2) with a cavity. Disorder
    /// needs an explicit realization in `detunings`. Both Markovian decay
    /// variants and the Langevin one map to the same decay dissipator;
    /// colored dephasing has no Lindblad form and is rejected.
    pub fn from_model(
        model: &ModelSpec<f64>,
        channels: &[NoiseChannel],
        photon_levels: Option<usize>,
        detunings: Option<&[f64]>,
        max_dim: usize,
    ) -> Result<Self> {
        let n = model.n_spins();
        let levels = match (&model.cavity, photon_levels) {
            (None, _) => 1,
            (Some(_), Some(l)) if l >= 2 => l,
            (Some(_), l) => {
                return Err(Error::InvalidParameter(format!("cavity needs at least 2 photon levels, got {l:?}")));
            }
        };
        let dim = (1usize << n.min(63)).saturating_mul(levels);
        if n >= 63 || dim > max_dim {
            return Err(Error::DimensionCap { dim, cap: max_dim });
        }
        let basis = Basis { n_spins: n, photon_levels: levels };
        let d = basis.dim();
        let sig: Vec<[CsrMatrix; 3]> = (0..n).map(|i| Axis::ALL.map(|a| basis.sigma(i, a))).collect();

        let mut h = CsrMatrix::zero(d);
        for (i, w) in model.fields.as_slice().iter().enumerate() {
            for a in Axis::ALL {
                if w[a] != 0.0 {
                    h = h.add(&sig[i][a.index()].scale(C64::new(0.5 * w[a], 0.0)));
                }
            }
        }
        for block in &model.couplings {
            let a = block.axis().index();
            for (i, j, v) in block.pairs() {
                h = h.add(&sig[i][a].matmul(&sig[j][a]).scale(C64::new(v, 0.0)));
            }
        }
        match (&model.disorder, detunings) {
            (None, _) => {}
            (Some(_), Some(w)) if w.len() == n => {
                for (i, wi) in w.iter().enumerate() {
                    h = h.add(&sig[i][2].scale(C64::new(0.5 * wi, 0.0)));
                }
            }
            (Some(_), _) => {
                return Err(Error::Unsupported("disorder without a fixed realization of detunings".into()));
            }
        }
        let mut jumps = Vec::new();
        if let Some(c) = &model.cavity {
            let a = basis.annihilate();
            let ad = a.adjoint();
            let sp = basis.collective(Axis::X).add(&basis.collective(Axis::Y).scale(I));
            let sm = sp.adjoint();
            let k = C64::new(c.g / (c.n as f64).sqrt(), 0.0);
            h = h.add(&sp.matmul(&a).add(&sm.matmul(&ad)).scale(k));
            if c.drive != 0.0 {
                h = h.add(&basis.collective(Axis::X).scale(C64::new(c.drive, 0.0)));
            }
            if c.kappa > 0.0 {
                jumps.push((2.0 * c.kappa, a));
            }
        }
        for ch in channels {
            ch.validate()?;
            match *ch {
                NoiseChannel::DephasingIndividual { gamma_phi } => {
                    for s in &sig {
                        jumps.push((0.5 * gamma_phi, s[2].clone()));
                    }
                }
                NoiseChannel::DephasingCollective { gamma_phi } => jumps.push((2.0 * gamma_phi, basis.collective(Axis::Z))),
                NoiseChannel::DecayStandard { gamma } | NoiseChannel::DecayImproved { gamma } | NoiseChannel::DecayQle { gamma } => {
                    for i in 0..n {
                        jumps.push((gamma, basis.lower(i)));
                    }
                }
                NoiseChannel::DephasingColored { .. } => {
                    return Err(Error::Unsupported("colored dephasing has no Lindblad form".into()));
                }
            }
        }
        jumps.retain(|(rate, _)| *rate > 0.0);
        Ok(Self::from_parts(basis, h, jumps))
    }

    /// Assembles a generator from an explicit Hamiltonian and jump list.
    pub fn from_parts(basis: Basis, hamiltonian: CsrMatrix, jumps: Vec<(f64, CsrMatrix)>) -> Self {
        let mut h_eff = hamiltonian.clone();
        for (rate, l) in &jumps {
            h_eff = h_eff.add(&l.adjoint().matmul(l).scale(C64::new(0.0, -0.5 * rate)));
        }
        let h_eff_adj = h_eff.adjoint();
        let jump_adj = jumps.iter().map(|(_, l)| l.adjoint()).collect();
        Self { basis, hamiltonian, jumps, h_eff, h_eff_adj, jump_adj }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Writes `dρ/dt` into `out` (overwritten). `scratch` must hold `D²`
    /// entries.
    pub fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        self.h_eff.mul_dense_left_acc(rho, -I, out);
        self.h_eff_adj.mul_dense_right_acc(rho, I, out);
        for ((rate, l), ld) in self.jumps.iter().zip(&self.jump_adj) {
            scratch.iter_mut().for_each(|v| *v = ZERO);
            l.mul_dense_left_acc(rho, ONE, scratch);
            ld.mul_dense_right_acc(scratch, C64::new(*rate, 0.0), out);
        }
    }

    /// Same as [`apply`](Self::apply) for Hermitian `rho`, using
    /// `ρ H_eff† = (H_eff ρ)†`. The result is Hermitian by construction.
    pub fn apply_hermitian(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim();
        scratch.iter_mut().for_each(|v| *v = ZERO);
        self.h_eff.mul_dense_left_acc(rho, ONE, scratch);
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = -I * (scratch[r * d + c] - scratch[c * d + r].conj());
            }
        }
        for ((rate, l), ld) in self.jumps.iter().zip(&self.jump_adj) {
            scratch.iter_mut().for_each(|v| *v = ZERO);
            l.mul_dense_left_acc(rho, ONE, scratch);
            ld.mul_dense_right_acc(scratch, C64::new(*rate, 0.0), out);
        }
        // the jump terms are Hermitian only up to rounding, which would
        // otherwise accumulate over long runs
        for r in 0..d {
            out[r * d + r].im = 0.0;
            for c in r + 1..d {
                let avg = 0.5 * (out[r * d + c] + out[c * d + r].conj());
                out[r * d + c] = avg;
                out[c * d + r] = avg.conj();
            }
        }
    }

    /// Upper bound on the generator norm.
    pub fn norm_estimate(&self) -> f64 {
        2.0 * self.h_eff.norm_inf() + self.jumps.iter().map(|(r, l)| r * l.norm_inf() * l.adjoint().norm_inf()).sum::<f64>()
    }

    /// Spectral radius of the generator from `‖Lᵏx‖^(1/k)` with a fixed
    /// Hermitian start vector, capped by [`norm_estimate`](Self::norm_estimate).
    /// Transient growth makes this overshoot slightly for small `k`.
    pub fn spectral_radius_estimate(&self) -> f64 {
        const ITERATIONS: usize = 40;
        let d = self.dim();
        let bound = self.norm_estimate();
        let mut x: Vec<C64> = (0..d * d)
            .map(|k| {
                let (r, c) = (k / d, k % d);
                let (a, b) = (r.min(c) as f64, r.max(c) as f64);
                let sign = if r <= c { 1.0 } else { -1.0 };
                C64::new((1.3 * a + 0.7 * b + 0.1).sin(), sign * (0.9 * a - 1.1 * b).cos())
            })
            .collect();
        let frob = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let n0 = frob(&x);
        x.iter_mut().for_each(|v| *v /= n0);
        let mut y = vec![ZERO; d * d];
        let mut scratch = vec![ZERO; d * d];
        let mut log_growth = 0.0;
        for _ in 0..ITERATIONS {
            self.apply_hermitian(&x, &mut y, &mut scratch);
            let n = frob(&y);
            if n == 0.0 {
                return 0.0;
            }
            log_growth += n.ln();
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv = *yv / n;
            }
        }
        (log_growth / ITERATIONS as f64).exp().min(bound)
    }
}

/// Dense row-major density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub basis: Basis,
    pub data: Vec<C64>,
    pub time: f64,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|` for a product of spin coherent states
    /// `cos(θ/2)|↑⟩ + e^{iφ} sin(θ/2)|↓⟩` and a coherent field `α0`
    /// truncated to the basis and renormalized.
    pub fn product_state(basis: Basis, spec: &ProductStateSpec) -> Result<Self> {
        let n = basis.n_spins;
        let dirs = spec.directions();
        if dirs.len() != 1 && dirs.len() != n {
            return Err(Error::DimensionMismatch(format!("{} directions for {n} spins", dirs.len())));
        }
        let amps: Vec<(C64, C64)> = (0..n)
            .map(|i| {
                let d = dirs[if dirs.len() == 1 { 0 } else { i }];
                let up = C64::new((0.5 * d.theta).cos(), 0.0);
                let down = C64::from_polar((0.5 * d.theta).sin(), d.phi);
                (up, down)
            })
            .collect();
        let alpha = spec.cavity_alpha0.unwrap_or_default();
        let mut fock: Vec<C64> = Vec::with_capacity(basis.photon_levels);
        let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for k in 0..basis.photon_levels {
            if k > 0 {
                c = c * alpha / (k as f64).sqrt();
            }
            fock.push(c);
        }
        let norm = fock.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let sd = 1usize << n;
        let mut psi = Vec::with_capacity(basis.dim());
        for f in &fock {
            for b in 0..sd {
                let mut v = *f / norm;
                for (i, (up, down)) in amps.iter().enumerate() {
                    v *= if b >> i & 1 == 1 { *up } else { *down };
                }
                psi.push(v);
            }
        }
        let d = basis.dim();
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[r * d + c] = psi[r] * psi[c].conj();
            }
        }
        Ok(Self { basis, data, time: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|k| self.data[k * d + k]).sum()
    }

    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for r in 0..d {
            for c in 0..d {
                s += (self.data[r * d + c] * self.data[c * d + r]).re;
            }
        }
        s
    }

    /// `‖ρ - ρ†‖_F / ‖ρ‖_F`
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let (mut diff, mut norm) = (0.0, 0.0);
        for r in 0..d {
            for c in 0..d {
                let v = self.data[r * d + c];
                diff += (v - self.data[c * d + r].conj()).norm_sqr();
                norm += v.norm_sqr();
            }
        }
        (diff / norm).sqrt()
    }

    /// `Tr(ρ A)`.
    pub fn expect(&self, a: &CsrMatrix) -> C64 {
        a.trace_with(&self.data)
    }
}

/// Operators needed to fill a [`MomentSet`] from a density matrix.
struct MomentOps {
    s: [CsrMatrix; 3],
    ss: [[CsrMatrix; 3]; 3],
    per_spin: Vec<[CsrMatrix; 3]>,
    pairs: Vec<[[CsrMatrix; 3]; 3]>,
    photons: Option<(CsrMatrix, CsrMatrix)>,
}

impl MomentOps {
    fn new(basis: Basis, layout: &RawLayout) -> Self {
        let s = Axis::ALL.map(|a| basis.collective(a));
        let ss = [0, 1, 2].map(|a| [0, 1, 2].map(|b| s[a].matmul(&s[b])));
        let per_spin = layout.per_spin.iter().map(|&i| Axis::ALL.map(|a| basis.sigma(i, a))).collect();
        let pairs = layout
            .pairs
            .iter()
            .map(|&(i, j)| {
                let si = Axis::ALL.map(|a| basis.sigma(i, a));
                let sj = Axis::ALL.map(|a| basis.sigma(j, a));
                [0, 1, 2].map(|a| [0, 1, 2].map(|b| si[a].matmul(&sj[b])))
            })
            .collect();
        let photons = layout.cavity.then(|| {
            let a = basis.annihilate();
            let ad = a.adjoint();
            let num = ad.matmul(&a);
            let num2 = ad.matmul(&ad).matmul(&a).matmul(&a);
            (num, num2)
        });
        Self { s, ss, per_spin, pairs, photons }
    }

    fn moments(&self, rho: &DensityMatrix) -> MomentSet {
        let s_mean = [0, 1, 2].map(|a| rho.expect(&self.s[a]).re);
        let s_sym = [0, 1, 2].map(|a| [0, 1, 2].map(|b| rho.expect(&self.ss[a][b]).re));
        MomentSet {
            n_spins: rho.basis.n_spins,
            s_mean,
            s_sym,
            spin_length: 3.0,
            component_squares: [1.0; 3],
            photons: self.photons.as_ref().map(|(n1, n2)| PhotonMoments { n: rho.expect(n1).re, n2: rho.expect(n2).re }),
            per_spin: self.per_spin.iter().map(|ops| [0, 1, 2].map(|a| rho.expect(&ops[a]).re)).collect(),
            pairs: self.pairs.iter().map(|ops| [0, 1, 2].map(|a| [0, 1, 2].map(|b| rho.expect(&ops[a][b]).re))).collect(),
        }
    }
}

/// Integrates the master equation with fixed-step RK4 and records the same
/// estimators as the stochastic engine, with zero standard errors.
///
/// The substep is the largest step not exceeding
/// `step_fraction / spectral radius` that divides the output interval evenly.
pub fn evolve_master_equation(
    spec: &LiouvillianSpec,
    rho0: DensityMatrix,
    grid: &TimeGrid,
    request: &ObservableRequest,
    options: &OracleOptions,
) -> Result<(ObservableSeries, DensityMatrix)> {
    let basis = spec.basis;
    request.validate(basis.n_spins)?;
    let layout = RawLayout::new(basis.n_spins, basis.photon_levels > 1, request);
    let ops = MomentOps::new(basis, &layout);
    let d = basis.dim();
    let interval = grid.dt * grid.output_stride as f64;
    let h_max = options.step_fraction / spec.spectral_radius_estimate().max(1e-12);
    let substeps = ((interval / h_max).ceil() as usize).max(1);
    let h = interval / substeps as f64;

    let mut rho = rho0;
    let mut cols: Vec<Column> = Vec::new();
    let mut record = |rho: &DensityMatrix| -> Result<()> {
        check(rho, options)?;
        let vals = columns(request, &layout, &ops.moments(rho));
        if cols.is_empty() {
            cols = vals.iter().map(|c| Column { name: c.name.clone(), mean: Vec::new(), stderr: Vec::new() }).collect();
        }
        for (col, v) in cols.iter_mut().zip(vals) {
            col.mean.push(v.value);
            col.stderr.push(v.value.map(|_| 0.0));
        }
        Ok(())
    };
    record(&rho)?;
    let mut k = vec![vec![ZERO; d * d]; 4];
    let mut tmp = vec![ZERO; d * d];
    let mut scratch = vec![ZERO; d * d];
    let t0 = rho.time;
    for sample in 1..grid.n_samples() {
        for _ in 0..substeps {
            rk4_step(spec, &mut rho.data, h, &mut k, &mut tmp, &mut scratch);
        }
        rho.time = t0 + sample as f64 * interval;
        record(&rho)?;
    }
    let series = ObservableSeries {
        times: grid.sample_times(),
        columns: cols,
        metadata: RunMetadata {
            engine: "oracle".into(),
            master_seed: None,
            n_trajectories: 0,
            successes: 0,
            failures: Vec::new(),
            dt: grid.dt,
            t_end: grid.t_end,
            output_stride: grid.output_stride,
            scheme: Some(format!("rk4, {substeps} substeps of {h:e} per output")),
            channels: Vec::new(),
            model: ModelSummary { n_spins: basis.n_spins, mean_coupling_ordered: 0.0, stored_pairs: 0 },
            model_hash: None,
            warnings: Vec::new(),
        },
    };
    Ok((series, rho))
}

fn rk4_step(spec: &LiouvillianSpec, rho: &mut [C64], h: f64, k: &mut [Vec<C64>], tmp: &mut [C64], scratch: &mut [C64]) {
    let (k1, rest) = k.split_at_mut(1);
    let (k2, rest) = rest.split_at_mut(1);
    let (k3, k4) = rest.split_at_mut(1);
    let (k1, k2, k3, k4) = (&mut k1[0], &mut k2[0], &mut k3[0], &mut k4[0]);
    spec.apply_hermitian(rho, k1, scratch);
    axpy(tmp, rho, 0.5 * h, k1);
    spec.apply_hermitian(tmp, k2, scratch);
    axpy(tmp, rho, 0.5 * h, k2);
    spec.apply_hermitian(tmp, k3, scratch);
    axpy(tmp, rho, h, k3);
    spec.apply_hermitian(tmp, k4, scratch);
    let w = h / 6.0;
    for i in 0..rho.len() {
        rho[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * w;
    }
}

fn axpy(out: &mut [C64], x: &[C64], a: f64, y: &[C64]) {
    for ((o, x), y) in out.iter_mut().zip(x).zip(y) {
        *o = *x + *y * a;
    }
}

fn check(rho: &DensityMatrix, options: &OracleOptions) -> Result<()> {
    let tr = rho.trace();
    let trace_err = (tr - ONE).norm();
    if !(trace_err <= options.trace_tol) {
        return Err(Error::OracleDrift { time: rho.time, what: "trace", value: trace_err });
    }
    let herm = rho.hermiticity_error();
    if !(herm <= options.hermiticity_tol) {
        return Err(Error::OracleDrift { time: rho.time, what: "hermiticity", value: herm });
    }
    let levels = rho.basis.photon_levels;
    if levels > 1 {
        let top = rho.basis.photon_population(&rho.data, levels - 1) + rho.basis.photon_population(&rho.data, levels - 2);
        if top > options.cutoff_tol {
            return Err(Error::PhotonCutoff { population: top, tolerance: options.cutoff_tol, time: rho.time });
        }
    }
    Ok(())
}

/// Builds the generator and initial state for a model and integrates it.
pub fn run_oracle(
    model: &ModelSpec<f64>,
    channels: &[NoiseChannel],
    initial: &ProductStateSpec,
    photon_levels: Option<usize>,
    detunings: Option<&[f64]>,
    grid: &TimeGrid,
    request: &ObservableRequest,
    options: &OracleOptions,
) -> Result<ObservableSeries> {
    let spec = LiouvillianSpec::from_model(model, channels, photon_levels, detunings, options.max_dim)?;
    let rho0 = DensityMatrix::product_state(spec.basis, initial)?;
    let (mut series, _) = evolve_master_equation(&spec, rho0, grid, request, options)?;
    series.metadata.channels = channels.to_vec();
    series.metadata.model = ModelSummary::from(model);
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CavityCoupling, CouplingMatrix, LocalFields};
    use crate::spin::Direction;
    use approx::assert_abs_diff_eq;

    fn single(channels: &[NoiseChannel], dir: Direction, t_end: f64) -> ObservableSeries {
        let model = ModelSpec::<f64>::new(1).unwrap();
        let grid = TimeGrid::new(t_end, 0.01, 10).unwrap();
        let req = ObservableRequest { per_spin: vec![0], ..Default::default() };
        run_oracle(&model, channels, &ProductStateSpec::uniform(dir, 1), None, None, &grid, &req, &OracleOptions::default())
            .unwrap()
    }

    #[test]
    fn single_spin_dephasing_analytic() {
        let s = single(&[NoiseChannel::DephasingIndividual { gamma_phi: 0.7 }], Direction::PLUS_X, 5.0);
        for (k, t) in s.times.iter().enumerate() {
            assert_abs_diff_eq!(s.value("s0_x", k).unwrap(), (-0.7 * t).exp(), epsilon = 1e-6);
            assert_abs_diff_eq!(s.value("s0_z", k).unwrap(), 0.0, epsilon = 1e-12);
        }
        let s = single(&[NoiseChannel::DephasingCollective { gamma_phi: 0.7 }], Direction::PLUS_X, 5.0);
        for (k, t) in s.times.iter().enumerate() {
            assert_abs_diff_eq!(s.value("s0_x", k).unwrap(), (-0.7 * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn single_spin_decay_analytic() {
        let g = 1.3;
        for dir in [Direction::UP, Direction::PLUS_X, Direction { theta: 2.0, phi: 0.4 }] {
            let z0 = dir.theta.cos();
            let x0 = dir.theta.sin() * dir.phi.cos();
            let s = single(&[NoiseChannel::DecayStandard { gamma: g }], dir, 4.0);
            for (k, t) in s.times.iter().enumerate() {
                assert_abs_diff_eq!(s.value("s0_z", k).unwrap(), -1.0 + (z0 + 1.0) * (-g * t).exp(), epsilon = 1e-6);
                assert_abs_diff_eq!(s.value("s0_x", k).unwrap(), x0 * (-0.5 * g * t).exp(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn decay_rate_at_the_excited_state() {
        let model = ModelSpec::<f64>::new(1).unwrap();
        let spec = LiouvillianSpec::from_model(&model, &[NoiseChannel::DecayStandard { gamma: 0.8 }], None, None, 4096).unwrap();
        let rho = DensityMatrix::product_state(spec.basis, &ProductStateSpec::uniform(Direction::UP, 1)).unwrap();
        let mut out = vec![ZERO; 4];
        let mut scratch = vec![ZERO; 4];
        spec.apply(&rho.data, &mut out, &mut scratch);
        let drho = DensityMatrix { basis: spec.basis, data: out, time: 0.0 };
        assert_abs_diff_eq!(drho.expect(&spec.basis.sigma(0, Axis::Z)).re, -1.6, epsilon = 1e-14);
    }

    #[test]
    fn empty_generator_is_zero() {
        let model = ModelSpec::<f64>::new(2).unwrap();
        let spec = LiouvillianSpec::from_model(&model, &[], None, None, 4096).unwrap();
        let rho = DensityMatrix::product_state(spec.basis, &ProductStateSpec::uniform(Direction { theta: 1.0, phi: 0.3 }, 2)).unwrap();
        let mut out = vec![ONE; 16];
        let mut scratch = vec![ZERO; 16];
        spec.apply(&rho.data, &mut out, &mut scratch);
        assert!(out.iter().all(|v| *v == ZERO));
    }

    fn busy_spec() -> (LiouvillianSpec, DensityMatrix) {
        let n = 2;
        let model = ModelSpec::<f64>::new(n)
            .unwrap()
            .with_coupling(CouplingMatrix::uniform(Axis::Z, n, 0.4))
            .unwrap()
            .with_fields(LocalFields::uniform(n, 0.9, Axis::X))
            .unwrap()
            .with_cavity(CavityCoupling::new(1.0, 0.3, 0.5, n).unwrap())
            .unwrap();
        let channels = [
            NoiseChannel::DephasingIndividual { gamma_phi: 0.2 },
            NoiseChannel::DephasingCollective { gamma_phi: 0.1 },
            NoiseChannel::DecayStandard { gamma: 0.3 },
        ];
        let spec = LiouvillianSpec::from_model(&model, &channels, Some(4), None, 4096).unwrap();
        let init = ProductStateSpec::per_spin(vec![Direction { theta: 0.4, phi: 1.0 }, Direction { theta: 2.5, phi: -0.3 }])
            .unwrap()
            .with_cavity(C64::new(0.3, 0.2));
        let rho = DensityMatrix::product_state(spec.basis, &init).unwrap();
        (spec, rho)
    }

    #[test]
    fn generator_preserves_trace_and_hermiticity() {
        let (spec, rho) = busy_spec();
        let d = spec.dim();
        // also test on a non-pure Hermitian input
        let mut mixed = rho.data.clone();
        for k in 0..d {
            mixed[k * d + k] += C64::new(0.1 * k as f64, 0.0);
        }
        for input in [rho.data.clone(), mixed] {
            let mut out = vec![ZERO; d * d];
            let mut scratch = vec![ZERO; d * d];
            spec.apply(&input, &mut out, &mut scratch);
            let tr: C64 = (0..d).map(|k| out[k * d + k]).sum();
            assert!(tr.norm() < 1e-12, "trace of drho = {tr}");
            let m = DensityMatrix { basis: spec.basis, data: out, time: 0.0 };
            assert!(m.hermiticity_error() < 1e-13);
        }
    }

    #[test]
    fn hermitian_fast_path_matches_general_apply() {
        let (spec, rho) = busy_spec();
        let d = spec.dim();
        let (mut a, mut b, mut scratch) = (vec![ZERO; d * d], vec![ZERO; d * d], vec![ZERO; d * d]);
        spec.apply(&rho.data, &mut a, &mut scratch);
        spec.apply_hermitian(&rho.data, &mut b, &mut scratch);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_radius_of_a_precessing_spin() {
        // eigenvalues of -i[Ω σz / 2, ·] are 0, 0, ±iΩ
        let model = ModelSpec::<f64>::new(1).unwrap().with_fields(LocalFields::uniform(1, 3.0, Axis::Z)).unwrap();
        let spec = LiouvillianSpec::from_model(&model, &[], None, None, 4096).unwrap();
        let r = spec.spectral_radius_estimate();
        assert!((r - 3.0).abs() < 0.1, "radius {r}");
        assert!(r <= spec.norm_estimate());
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let (spec, _) = busy_spec();
        assert_eq!(spec.hamiltonian.adjoint().triplets().count(), spec.hamiltonian.triplets().count());
        for (r, c, v) in spec.hamiltonian.triplets() {
            assert_abs_diff_eq!((spec.hamiltonian.get(c, r).conj() - v).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_spin_unitary_keeps_purity() {
        let n = 2;
        let model = ModelSpec::<f64>::new(n).unwrap().with_coupling(CouplingMatrix::uniform(Axis::Z, n, 1.0)).unwrap();
        let spec = LiouvillianSpec::from_model(&model, &[], None, None, 4096).unwrap();
        let rho = DensityMatrix::product_state(spec.basis, &ProductStateSpec::uniform(Direction::PLUS_X, n)).unwrap();
        let grid = TimeGrid::new(10.0, 0.05, 20).unwrap();
        let (series, end) = evolve_master_equation(&spec, rho, &grid, &ObservableRequest::default(), &OracleOptions::default()).unwrap();
        assert_abs_diff_eq!(end.purity(), 1.0, epsilon = 1e-8);
        // ⟨σ^x_1⟩ = cos(2Jt) for two spins under J σzσz
        let sx = series.column("Sx").unwrap();
        for (k, t) in series.times.iter().enumerate() {
            assert_abs_diff_eq!(sx.mean[k].unwrap(), (2.0 * t).cos(), epsilon = 1e-6);
        }
    }

    #[test]
    fn coherent_cavity_state_moments() {
        let model = ModelSpec::<f64>::new(1).unwrap().with_cavity(CavityCoupling::new(0.0, 0.0, 0.0, 1).unwrap()).unwrap();
        let spec = LiouvillianSpec::from_model(&model, &[], Some(30), None, 4096).unwrap();
        let init = ProductStateSpec::uniform(Direction::DOWN, 1).with_cavity(C64::new(1.5, -0.5));
        let rho = DensityMatrix::product_state(spec.basis, &init).unwrap();
        let ops = MomentOps::new(spec.basis, &RawLayout::new(1, true, &ObservableRequest::default()));
        let p = ops.moments(&rho).photons.unwrap();
        assert_abs_diff_eq!(p.n, 2.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p.n2, 6.25, epsilon = 1e-8);
    }

    #[test]
    fn cavity_loss_of_a_coherent_field() {
        // α(t) = α0 e^{-κt}
        let kappa = 0.5;
        let model = ModelSpec::<f64>::new(1).unwrap().with_cavity(CavityCoupling::new(0.0, kappa, 0.0, 1).unwrap()).unwrap();
        let init = ProductStateSpec::uniform(Direction::DOWN, 1).with_cavity(C64::new(1.0, 0.0));
        let grid = TimeGrid::new(3.0, 0.01, 50).unwrap();
        let s = run_oracle(&model, &[], &init, Some(12), None, &grid, &ObservableRequest::default(), &OracleOptions::default()).unwrap();
        for (k, t) in s.times.iter().enumerate() {
            assert_abs_diff_eq!(s.value("photon_number", k).unwrap(), (-2.0 * kappa * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn caps_and_cutoffs_are_enforced() {
        let model = ModelSpec::<f64>::new(13).unwrap();
        assert!(matches!(LiouvillianSpec::from_model(&model, &[], None, None, 4096), Err(Error::DimensionCap { dim: 8192, cap: 4096 })));
        let model = ModelSpec::<f64>::new(1).unwrap().with_cavity(CavityCoupling::new(0.0, 0.0, 0.0, 1).unwrap()).unwrap();
        assert!(LiouvillianSpec::from_model(&model, &[], Some(1), None, 4096).is_err());
        let init = ProductStateSpec::uniform(Direction::DOWN, 1).with_cavity(C64::new(2.0, 0.0));
        let grid = TimeGrid::new(0.1, 0.01, 10).unwrap();
        let r = run_oracle(&model, &[], &init, Some(4), None, &grid, &ObservableRequest::default(), &OracleOptions::default());
        assert!(matches!(r, Err(Error::PhotonCutoff { .. })));
        let colored = [NoiseChannel::DephasingColored { sigma: 1.0, tau_c: 1.0, collective: false }];
        let model = ModelSpec::<f64>::new(1).unwrap();
        assert!(matches!(LiouvillianSpec::from_model(&model, &colored, None, None, 4096), Err(Error::Unsupported(_))));
    }
}
