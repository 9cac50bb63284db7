//! Hamiltonian data and the mean-field drift.
//!
//! The spin Hamiltonian is
//! `H = ½ Σ_i Ω_i·σ_i + Σ_{i<j} J_ij σ_i^a σ_j^a (+ ½ Σ_i ω_i σ_i^z)`
//! with one or more same-axis coupling blocks, plus an optional driven
//! Dicke coupling `(g/√N)(S+ a + S- a†) + Ω S_x`. Every spin term enters the
//! classical equations as a torque `ds_i/dt = Ω_eff^i × s_i` with
//! `Ω_eff^i = Ω_i + 2 Σ_j J_ij s_j`.

use std::collections::HashMap;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spin::{Axis, BlochVector, SpinEnsembleState};

/// Site positions of a spin lattice (open boundaries, Euclidean distance).
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub dims: [usize; 3],
    pub spacing: f64,
    positions: Vec<[f64; 3]>,
}

impl LatticeSpec {
    /// Simple cubic lattice of `dims[0] × dims[1] × dims[2]` sites; the x index
    /// runs fastest.
    pub fn cubic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("bad lattice dims {dims:?} / spacing {spacing}")));
        }
        let mut positions = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    positions.push([i as f64 * spacing, j as f64 * spacing, k as f64 * spacing]);
                }
            }
        }
        Ok(Self { dims, spacing, positions })
    }

    /// Arbitrary site positions. Exactly coincident sites are rejected.
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!("site {i} has a non-finite position")));
            }
            let key = p.map(|c| (c + 0.0).to_bits());
            if let Some(&j) = seen.get(&key) {
                return Err(Error::CoincidentSites(j, i));
            }
            seen.insert(key, i);
        }
        Ok(Self { dims: [positions.len(), 1, 1], spacing: 1.0, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum CouplingStorage<T> {
    /// Every pair couples with the same strength; evaluated through the
    /// collective sum `Σ_j s_j - s_i`.
    Uniform(T),
    /// Symmetric neighbor lists in CSR form (each pair stored in both rows).
    Sparse { offsets: Vec<usize>, cols: Vec<u32>, vals: Vec<T> },
}

/// Same-axis pair couplings `Σ_{i<j} J_ij σ_i^a σ_j^a`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix<T> {
    axis: Axis,
    n: usize,
    storage: CouplingStorage<T>,
}

impl<T: Real> CouplingMatrix<T> {
    /// All-to-all coupling of equal strength `j`.
    pub fn uniform(axis: Axis, n: usize, j: T) -> Self {
        Self { axis, n, storage: CouplingStorage::Uniform(j) }
    }

    /// Builds a sparse block from `(i, j, J_ij)` triples. Each unordered pair
    /// may appear once; self-couplings are rejected.
    pub fn from_pairs(axis: Axis, n: usize, pairs: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
        for (i, j, v) in pairs {
            if i == j {
                return Err(Error::InvalidParameter(format!("self-coupling on site {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("pair ({i}, {j}) outside {n} spins")));
            }
            rows[i].push((j as u32, v));
            rows[j].push((i as u32, v));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!("duplicate pair in row {i}")));
            }
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Ok(Self { axis, n, storage: CouplingStorage::Sparse { offsets, cols, vals } })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.storage, CouplingStorage::Uniform(_))
    }

    /// `J_ij` (zero for `i == j` and for absent pairs).
    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return T::zero();
        }
        match &self.storage {
            CouplingStorage::Uniform(v) => *v,
            CouplingStorage::Sparse { offsets, cols, vals } => {
                let row = offsets[i]..offsets[i + 1];
                match cols[row.clone()].binary_search(&(j as u32)) {
                    Ok(k) => vals[row.start + k],
                    Err(_) => T::zero(),
                }
            }
        }
    }

    /// Number of unordered pairs with a stored coupling.
    pub fn pair_count(&self) -> usize {
        match &self.storage {
            CouplingStorage::Uniform(_) => self.n * (self.n - 1) / 2,
            CouplingStorage::Sparse { cols, .. } => cols.len() / 2,
        }
    }

    /// Unordered pairs `(i, j, J_ij)` with `i < j`.
    pub fn pairs(&self) -> Box<dyn Iterator<Item = (usize, usize, T)> + '_> {
        match &self.storage {
            CouplingStorage::Uniform(v) => {
                let n = self.n;
                let v = *v;
                Box::new((0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, v))))
            }
            CouplingStorage::Sparse { offsets, cols, vals } => Box::new((0..self.n).flat_map(move |i| {
                (offsets[i]..offsets[i + 1])
                    .filter(move |&k| (cols[k] as usize) > i)
                    .map(move |k| (i, cols[k] as usize, vals[k]))
            })),
        }
    }

    /// `Σ_{i≠j} J_ij` over ordered pairs.
    pub fn ordered_sum(&self) -> T {
        match &self.storage {
            CouplingStorage::Uniform(v) => *v * T::lit((self.n * (self.n - 1)) as f64),
            CouplingStorage::Sparse { vals, .. } => vals.iter().copied().sum(),
        }
    }

    /// Adds `2 Σ_j J_ij s_j^a` to component `a` of every effective field.
    /// `total` must be `Σ_j s_j` for the uniform fast path.
    fn add_field(&self, spins: &[BlochVector<T>], total: BlochVector<T>, out: &mut [BlochVector<T>]) {
        let a = self.axis;
        let two = T::lit(2.0);
        match &self.storage {
            CouplingStorage::Uniform(v) => {
                let k = two * *v;
                for (o, s) in out.iter_mut().zip(spins) {
                    o[a] = o[a] + k * (total[a] - s[a]);
                }
            }
            CouplingStorage::Sparse { offsets, cols, vals } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for k in offsets[i]..offsets[i + 1] {
                        acc = acc + vals[k] * spins[cols[k] as usize][a];
                    }
                    o[a] = o[a] + two * acc;
                }
            }
        }
    }
}

/// Power-law couplings `J_ij = J_ref / |r_i - r_j|^alpha` on a lattice, with
/// `J_ref = J/N` if `normalize_by_n` else `J`. Pairs with
/// `|J_ij| < cutoff_ratio · |J_ref|` are dropped. `alpha = 0` (with no pair
/// dropped) yields the uniform all-to-all representation.
pub fn build_power_law_couplings<T: Real>(
    lattice: &LatticeSpec,
    axis: Axis,
    j: f64,
    alpha: f64,
    normalize_by_n: bool,
    cutoff_ratio: f64,
) -> Result<CouplingMatrix<T>> {
    if !(alpha >= 0.0) || !(cutoff_ratio >= 0.0) || !j.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha = {alpha}, cutoff_ratio = {cutoff_ratio}, J = {j}")));
    }
    let n = lattice.len();
    let j_ref = if normalize_by_n { j / n as f64 } else { j };
    let threshold = cutoff_ratio * j_ref.abs();
    if alpha == 0.0 {
        // every pair has |J_ij| = |J_ref|; duplicate sites are still an error
        LatticeSpec::from_positions(lattice.positions.clone())?;
        return Ok(if j_ref.abs() < threshold {
            CouplingMatrix::from_pairs(axis, n, std::iter::empty())?
        } else {
            CouplingMatrix::uniform(axis, n, T::lit(j_ref))
        });
    }
    let coupling = |d: f64| j_ref / d.powf(alpha);
    let mut pairs = Vec::new();
    let push = |i: usize, k: usize, pairs: &mut Vec<(usize, usize, T)>| -> Result<()> {
        let d = lattice.distance(i, k);
        if d == 0.0 {
            return Err(Error::CoincidentSites(i.min(k), i.max(k)));
        }
        let v = coupling(d);
        if v.abs() >= threshold && v != 0.0 {
            pairs.push((i.min(k), i.max(k), T::lit(v)));
        }
        Ok(())
    };
    if threshold > 0.0 {
        // Only distances up to r_max = cutoff_ratio^(-1/alpha) survive; bin the
        // sites into cells of that size and scan neighboring cells.
        let r_max = cutoff_ratio.powf(-1.0 / alpha) * (1.0 + 1e-9);
        let cell_of = |p: &[f64; 3]| p.map(|c| (c / r_max).floor() as i64);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in lattice.positions.iter().enumerate() {
            cells.entry(cell_of(p)).or_default().push(i);
        }
        for (i, p) in lattice.positions.iter().enumerate() {
            let c = cell_of(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(members) = cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &k in members {
                                if k > i {
                                    push(i, k, &mut pairs)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        for i in 0..n {
            for k in i + 1..n {
                push(i, k, &mut pairs)?;
            }
        }
    }
    CouplingMatrix::from_pairs(axis, n, pairs)
}

/// Per-spin static field vectors `Ω_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFields<T> {
    fields: Vec<BlochVector<T>>,
}

impl<T: Real> LocalFields<T> {
    pub fn zero(n: usize) -> Self {
        Self { fields: vec![BlochVector::zero(); n] }
    }

    /// Uniform drive of strength `omega` along `axis`.
    pub fn uniform(n: usize, omega: T, axis: Axis) -> Self {
        Self { fields: vec![BlochVector::unit(axis) * omega; n] }
    }

    pub fn from_vectors(fields: Vec<BlochVector<T>>) -> Self {
        Self { fields }
    }

    /// Adds static detunings `ω_i` along z.
    pub fn with_detunings(mut self, omega: &[T]) -> Result<Self> {
        if omega.len() != self.fields.len() {
            return Err(Error::DimensionMismatch(format!("{} detunings for {} spins", omega.len(), self.fields.len())));
        }
        for (f, w) in self.fields.iter_mut().zip(omega) {
            f.z = f.z + *w;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn as_slice(&self) -> &[BlochVector<T>] {
        &self.fields
    }
}

/// Collective coupling of all spins to one lossy bosonic mode,
/// `H = (g/√N)(S+ a + S- a†) + Ω S_x`, with field amplitude decay rate `κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityCoupling<T> {
    pub g: T,
    pub kappa: T,
    /// Coherent drive `Ω` of the spins along x.
    pub drive: T,
    /// Spin count entering the `1/√N` normalization.
    pub n: usize,
}

impl<T: Real> CavityCoupling<T> {
    pub fn new(g: T, kappa: T, drive: T, n: usize) -> Result<Self> {
        if !(g >= T::zero()) || !(kappa >= T::zero()) || n == 0 || !drive.is_finite() {
            return Err(Error::InvalidParameter(format!("cavity g = {g}, kappa = {kappa}, N = {n}")));
        }
        Ok(Self { g, kappa, drive, n })
    }
}

/// Gaussian inhomogeneous broadening `ω_i ~ N(0, sigma2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisorderSpec {
    pub sigma2: f64,
    /// Share one realization across all trajectories instead of redrawing
    /// per trajectory.
    pub frozen: bool,
}

/// Draws `n` i.i.d. detunings with variance `sigma2`.
pub fn sample_disorder<T: Real, R: Rng + ?Sized>(sigma2: f64, n: usize, rng: &mut R) -> Result<Vec<T>> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("disorder variance {sigma2} < 0")));
    }
    let sd = sigma2.sqrt();
    Ok((0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            T::lit(g * sd)
        })
        .collect())
}

/// Complete coherent model: fields, coupling blocks, disorder and cavity.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec<T> {
    n: usize,
    pub lattice: Option<LatticeSpec>,
    pub couplings: Vec<CouplingMatrix<T>>,
    pub fields: LocalFields<T>,
    pub disorder: Option<DisorderSpec>,
    pub cavity: Option<CavityCoupling<T>>,
}

impl<T: Real> ModelSpec<T> {
    /// `n` free spins.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("model needs at least one spin".into()));
        }
        Ok(Self { n, lattice: None, couplings: Vec::new(), fields: LocalFields::zero(n), disorder: None, cavity: None })
    }

    pub fn with_lattice(mut self, lattice: LatticeSpec) -> Result<Self> {
        if lattice.len() != self.n {
            return Err(Error::DimensionMismatch(format!("lattice has {} sites for {} spins", lattice.len(), self.n)));
        }
        self.lattice = Some(lattice);
        Ok(self)
    }

    pub fn with_coupling(mut self, c: CouplingMatrix<T>) -> Result<Self> {
        if c.n_spins() != self.n {
            return Err(Error::DimensionMismatch(format!("coupling for {} spins, model has {}", c.n_spins(), self.n)));
        }
        self.couplings.push(c);
        Ok(self)
    }

    pub fn with_fields(mut self, f: LocalFields<T>) -> Result<Self> {
        if f.len() != self.n {
            return Err(Error::DimensionMismatch(format!("{} fields for {} spins", f.len(), self.n)));
        }
        self.fields = f;
        Ok(self)
    }

    pub fn with_disorder(mut self, d: DisorderSpec) -> Result<Self> {
        if !(d.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("disorder variance {} < 0", d.sigma2)));
        }
        self.disorder = if d.sigma2 > 0.0 { Some(d) } else { None };
        Ok(self)
    }

    pub fn with_cavity(mut self, c: CavityCoupling<T>) -> Result<Self> {
        if c.n != self.n {
            return Err(Error::DimensionMismatch(format!("cavity normalized for {} spins, model has {}", c.n, self.n)));
        }
        self.cavity = Some(c);
        Ok(self)
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    /// Rescaled interaction unit `J̄ = Σ_{i≠j} J_ij / N`, summed over ordered
    /// pairs of every block.
    pub fn mean_coupling(&self) -> f64 {
        self.couplings.iter().map(|c| c.ordered_sum().as_f64()).sum::<f64>() / self.n as f64
    }

    /// Effective precession vectors `Ω_eff^i` for the current state.
    ///
    /// `detunings` (per-spin `ω_i`, e.g. disorder) and `z_noise` (colored
    /// dephasing fields `ξ_i`, length `N` or 1 for a collective field) are
    /// optional extra z-components.
    pub fn effective_fields(
        &self,
        state: &SpinEnsembleState<T>,
        detunings: Option<&[T]>,
        z_noise: Option<&[T]>,
        out: &mut [BlochVector<T>],
    ) {
        let spins = &state.spins;
        debug_assert_eq!(spins.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        out.copy_from_slice(self.fields.as_slice());
        if self.couplings.iter().any(|c| c.is_uniform()) {
            let total = state.total_spin();
            for c in &self.couplings {
                c.add_field(spins, total, out);
            }
        } else {
            for c in &self.couplings {
                c.add_field(spins, BlochVector::zero(), out);
            }
        }
        if let Some(w) = detunings {
            for (o, w) in out.iter_mut().zip(w) {
                o.z = o.z + *w;
            }
        }
        match z_noise {
            Some(xi) if xi.len() == 1 => {
                for o in out.iter_mut() {
                    o.z = o.z + xi[0];
                }
            }
            Some(xi) => {
                for (o, x) in out.iter_mut().zip(xi) {
                    o.z = o.z + *x;
                }
            }
            None => {}
        }
        if let (Some(cav), Some(alpha)) = (&self.cavity, state.cavity) {
            let k = T::lit(2.0) * cav.g / T::lit(cav.n as f64).sqrt();
            let shift = BlochVector::new(cav.drive + k * alpha.re, -k * alpha.im, T::zero());
            for o in out.iter_mut() {
                *o += shift;
            }
        }
    }

    /// `dα/dt = -i (g/√(4N)) Σ_i (s_i^x - i s_i^y)` (coherent part only).
    pub fn cavity_drift(&self, total_spin: BlochVector<T>) -> Option<Complex<T>> {
        self.cavity.map(|c| {
            let k = c.g / (T::lit(2.0) * T::lit(c.n as f64).sqrt());
            Complex::new(-k * total_spin.y, -k * total_spin.x)
        })
    }

    /// Typical `|Ω_eff|` for step-size selection: the largest per-spin norm,
    /// evaluated on the given state.
    pub fn typical_field(&self, state: &SpinEnsembleState<T>, detunings: Option<&[T]>) -> f64 {
        let mut out = vec![BlochVector::zero(); self.n];
        self.effective_fields(state, detunings, None, &mut out);
        out.iter().map(|w| w.norm_sq().as_f64().sqrt()).fold(0.0, f64::max)
    }
}

/// Mean-field velocity of every spin, `Ω_eff^i × s_i`, and of the cavity field.
pub fn mean_field_drift<T: Real>(
    state: &SpinEnsembleState<T>,
    model: &ModelSpec<T>,
) -> (Vec<BlochVector<T>>, Option<Complex<T>>) {
    let mut w = vec![BlochVector::zero(); model.n_spins()];
    model.effective_fields(state, None, None, &mut w);
    let ds = w.iter().zip(&state.spins).map(|(w, s)| w.cross(*s)).collect();
    let dalpha = if state.cavity.is_some() { model.cavity_drift(state.total_spin()) } else { None };
    (ds, dalpha)
}

/// Model parameters echoed into run metadata.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelSummary {
    pub n_spins: usize,
    /// `Σ_{i≠j} J_ij / N` over ordered pairs.
    pub mean_coupling_ordered: f64,
    pub stored_pairs: usize,
}

impl<T: Real> From<&ModelSpec<T>> for ModelSummary {
    fn from(m: &ModelSpec<T>) -> Self {
        Self {
            n_spins: m.n_spins(),
            mean_coupling_ordered: m.mean_coupling(),
            stored_pairs: m.couplings.iter().map(|c| c.pair_count()).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::TrajectoryRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state(spins: Vec<[f64; 3]>, cavity: Option<Complex<f64>>) -> SpinEnsembleState<f64> {
        SpinEnsembleState { spins: spins.into_iter().map(BlochVector::from_array).collect(), cavity, time: 0.0 }
    }

    #[test]
    fn uniform_exponent_zero() {
        let lat = LatticeSpec::cubic([2, 2, 2], 1.0).unwrap();
        let c: CouplingMatrix<f64> = build_power_law_couplings(&lat, Axis::Z, 1.0, 0.0, true, 0.0).unwrap();
        assert!(c.is_uniform());
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(c.get(i, j), if i == j { 0.0 } else { 1.0 / 8.0 });
            }
        }
        assert_eq!(c.pair_count(), 28);
        assert_eq!(c.pairs().count(), 28);
    }

    #[test]
    fn two_sites_cubed_distance() {
        let lat = LatticeSpec::from_positions(vec![[0.0; 3], [0.0, 2.0, 0.0]]).unwrap();
        let c: CouplingMatrix<f64> = build_power_law_couplings(&lat, Axis::Z, 1.0, 3.0, false, 0.0).unwrap();
        assert_eq!(c.get(0, 1), 1.0 / 8.0);
        assert_eq!(c.get(1, 0), 1.0 / 8.0);
    }

    #[test]
    fn cutoff_on_cubic_lattice() {
        let lat = LatticeSpec::cubic([10, 10, 10], 1.0).unwrap();
        let c: CouplingMatrix<f64> = build_power_law_couplings(&lat, Axis::X, 1.0, 3.0, false, 0.01).unwrap();
        let r_max = 100f64.powf(1.0 / 3.0);
        let mut brute = 0;
        for i in 0..lat.len() {
            for j in i + 1..lat.len() {
                if lat.distance(i, j) <= r_max {
                    brute += 1;
                }
            }
        }
        assert_eq!(c.pair_count(), brute);
        for (i, j, v) in c.pairs() {
            assert!(v >= 0.01, "{v}");
            assert!(lat.distance(i, j) <= r_max);
        }
    }

    #[test]
    fn coincident_sites_are_rejected() {
        assert!(matches!(LatticeSpec::from_positions(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]]), Err(Error::CoincidentSites(0, 2))));
    }

    #[test]
    fn disorder_moments() {
        let mut rng = TrajectoryRng::new(2, 0);
        let zero: Vec<f64> = sample_disorder(0.0, 10, &mut rng).unwrap();
        assert!(zero.iter().all(|&w| w == 0.0));
        let sigma2 = 2.0 * 0.5f64.powi(2);
        let w: Vec<f64> = sample_disorder(sigma2, 200_000, &mut rng).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 4.0 * (sigma2 / 2e5).sqrt());
        assert_abs_diff_eq!(var, sigma2, epsilon = 4.0 * sigma2 * (2.0 / 2e5f64).sqrt());
        assert_abs_diff_eq!(sigma2.sqrt(), 0.7071, epsilon = 1e-4);
        assert!(sample_disorder::<f64, _>(-1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn free_precession_about_x() {
        let model = ModelSpec::new(1).unwrap().with_fields(LocalFields::uniform(1, 0.7, Axis::X)).unwrap();
        let st = state(vec![[1.0, -1.0, 1.0]], None);
        let (ds, da) = mean_field_drift(&st, &model);
        let expect = BlochVector::new(0.7, 0.0, 0.0).cross(st.spins[0]);
        assert_eq!(ds[0], expect);
        assert!(da.is_none());
    }

    #[test]
    fn two_spin_zz_drift() {
        let c = CouplingMatrix::from_pairs(Axis::Z, 2, [(0, 1, 0.8)]).unwrap();
        let model = ModelSpec::new(2).unwrap().with_coupling(c).unwrap();
        let st = state(vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], None);
        let (ds, _) = mean_field_drift(&st, &model);
        // ds1x = -2J s1y s2z, ds1y = 2J s1x s2z
        assert_eq!(ds[0].x, 0.0);
        assert_eq!(ds[0].y, 2.0 * 0.8);
        assert_eq!(ds[0].z, 0.0);
    }

    #[test]
    fn dicke_drift_from_down_state() {
        let n = 4;
        let g = 1.3;
        let model = ModelSpec::new(n)
            .unwrap()
            .with_cavity(CavityCoupling::new(g, 0.5, 0.0, n).unwrap())
            .unwrap();
        let st = state(vec![[0.0, 0.0, -1.0]; n], Some(Complex::new(1.0, 0.0)));
        let (ds, da) = mean_field_drift(&st, &model);
        for d in ds {
            assert_abs_diff_eq!(d.x, 0.0);
            assert_abs_diff_eq!(d.y, 2.0 * g / (n as f64).sqrt(), epsilon = 1e-14);
            assert_abs_diff_eq!(d.z, 0.0);
        }
        assert_eq!(da.unwrap(), Complex::new(0.0, 0.0));
    }

    #[test]
    fn dicke_drift_component_equations() {
        // compare the torque form with the explicit component equations
        let (n, g, om) = (3usize, 0.9, 1.7);
        let model = ModelSpec::new(n).unwrap().with_cavity(CavityCoupling::new(g, 0.1, om, n).unwrap()).unwrap();
        let alpha = Complex::new(0.3, -1.1);
        let st = state(vec![[0.5, -1.0, 1.2], [1.0, 1.0, -1.0], [-0.2, 0.4, 1.6]], Some(alpha));
        let (ds, da) = mean_field_drift(&st, &model);
        let k = 2.0 * g / (n as f64).sqrt();
        for (d, s) in ds.iter().zip(&st.spins) {
            assert_abs_diff_eq!(d.x, -k * alpha.im * s.z, epsilon = 1e-13);
            assert_abs_diff_eq!(d.y, -k * alpha.re * s.z - om * s.z, epsilon = 1e-13);
            assert_abs_diff_eq!(d.z, k * (alpha.re * s.y + alpha.im * s.x) + om * s.y, epsilon = 1e-13);
        }
        let sum: Complex<f64> = st.spins.iter().map(|s| Complex::new(s.x, -s.y)).sum();
        let expect = Complex::new(0.0, -1.0) * g / (4.0 * n as f64).sqrt() * sum;
        assert_abs_diff_eq!(da.unwrap().re, expect.re, epsilon = 1e-13);
        assert_abs_diff_eq!(da.unwrap().im, expect.im, epsilon = 1e-13);
    }

    /// O(N²) reference: Ω_i + 2 Σ_{j≠i} J_ij s_j^a e_a from pairwise lookups.
    fn naive_fields(model: &ModelSpec<f64>, st: &SpinEnsembleState<f64>) -> Vec<BlochVector<f64>> {
        let n = model.n_spins();
        (0..n)
            .map(|i| {
                let mut w = model.fields.as_slice()[i];
                for c in &model.couplings {
                    let a = c.axis();
                    for j in 0..n {
                        if j != i {
                            w[a] += 2.0 * c.get(i, j) * st.spins[j][a];
                        }
                    }
                }
                w
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fast_paths_match_pairwise(n in 2usize..256, seed in 0u64..1000) {
            let mut rng = TrajectoryRng::new(seed, 0);
            let lat = LatticeSpec::cubic([n, 1, 1], 1.0).unwrap();
            let c_all: CouplingMatrix<f64> = build_power_law_couplings(&lat, Axis::Z, 1.0, 0.0, true, 0.0).unwrap();
            let c_sr: CouplingMatrix<f64> = build_power_law_couplings(&lat, Axis::X, 0.3, 3.0, false, 0.01).unwrap();
            let model = ModelSpec::new(n).unwrap()
                .with_fields(LocalFields::uniform(n, 0.4, Axis::Y)).unwrap()
                .with_coupling(c_all).unwrap()
                .with_coupling(c_sr).unwrap();
            let spins = (0..n).map(|_| BlochVector::new(rng.normal(), rng.normal(), rng.normal())).collect();
            let st = SpinEnsembleState { spins, cavity: None, time: 0.0 };
            let mut fast = vec![BlochVector::zero(); n];
            model.effective_fields(&st, None, None, &mut fast);
            for (f, s) in fast.iter().zip(naive_fields(&model, &st)) {
                let scale = s.norm_sq().sqrt().max(1.0);
                prop_assert!((*f - s).norm_sq().sqrt() / scale < 1e-12);
            }
        }

        #[test]
        fn drift_is_permutation_equivariant(seed in 0u64..1000) {
            let n = 12;
            let mut rng = TrajectoryRng::new(seed, 1);
            let model = ModelSpec::new(n).unwrap()
                .with_fields(LocalFields::uniform(n, 0.4, Axis::X)).unwrap()
                .with_coupling(CouplingMatrix::uniform(Axis::Z, n, 0.1)).unwrap()
                .with_cavity(CavityCoupling::new(0.7, 0.2, 0.3, n).unwrap()).unwrap();
            let spins: Vec<BlochVector<f64>> = (0..n).map(|_| BlochVector::new(rng.normal(), rng.normal(), rng.normal())).collect();
            let st = SpinEnsembleState { spins: spins.clone(), cavity: Some(Complex::new(0.2, 0.1)), time: 0.0 };
            let perm: Vec<usize> = (0..n).rev().collect();
            let pst = SpinEnsembleState { spins: perm.iter().map(|&p| spins[p]).collect(), cavity: st.cavity, time: 0.0 };
            let (d, a) = mean_field_drift(&st, &model);
            let (pd, pa) = mean_field_drift(&pst, &model);
            for (k, &p) in perm.iter().enumerate() {
                prop_assert!((pd[k] - d[p]).norm_sq() < 1e-24);
            }
            prop_assert!((pa.unwrap() - a.unwrap()).norm() < 1e-12);
        }
    }
}
