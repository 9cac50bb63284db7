//! Estimators built from trajectory moments.
//!
//! Each trajectory contributes a fixed vector of raw moments per output time
//! (see [`RawLayout`]). Averaged over trajectories these give symmetrically
//! ordered expectation values, from which collective means, variances, the
//! squeezing parameter and photon statistics are derived. Same-site products
//! in collective second moments use the operator identities `(σ^k)² = 1` and
//! `{σ^a, σ^b} = 0` for `a ≠ b`, never sampled squares.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::spin::SpinEnsembleState;

/// Which estimators to record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableRequest {
    /// `⟨S_k⟩` and `(ΔS_k)²`.
    pub collective: bool,
    /// Wineland squeezing parameter `ξ²`.
    pub squeezing: bool,
    /// `⟨a†a⟩` and `g²(0)` (ignored without a cavity).
    pub photons: bool,
    /// Mean squared spin length `⟨⟨s²⟩⟩` and per-component squares.
    pub spin_length: bool,
    /// Spins whose individual `⟨σ_i^k⟩` are recorded.
    pub per_spin: Vec<usize>,
    /// Spin pairs whose symmetric correlators `⟨{σ_i^a σ_j^b}⟩` are recorded.
    pub pairs: Vec<(usize, usize)>,
    /// `ξ²` is undefined when `|⟨S⟩| <= squeezing_eps · N`.
    pub squeezing_eps: f64,
    /// `g²(0)` is undefined when `⟨a†a⟩ <= photon_floor`.
    pub photon_floor: f64,
}

impl Default for ObservableRequest {
    fn default() -> Self {
        Self {
            collective: true,
            squeezing: true,
            photons: true,
            spin_length: true,
            per_spin: Vec::new(),
            pairs: Vec::new(),
            squeezing_eps: 1e-6,
            photon_floor: 1e-6,
        }
    }
}

impl ObservableRequest {
    pub fn validate(&self, n: usize) -> crate::Result<()> {
        let bad = self.per_spin.iter().copied().chain(self.pairs.iter().flat_map(|&(i, j)| [i, j])).find(|&i| i >= n);
        if let Some(i) = bad {
            return Err(crate::Error::InvalidParameter(format!("observable refers to spin {i} of {n}")));
        }
        if self.pairs.iter().any(|&(i, j)| i == j) {
            return Err(crate::Error::InvalidParameter("pair correlation needs two distinct spins".into()));
        }
        Ok(())
    }
}

/// Offsets of the raw per-trajectory moments.
///
/// Always present: `M_k = Σ_i s_i^k` (3), `P_ab = Σ_{i≠j} s_i^a s_j^b` for
/// `ab ∈ {xx, yy, zz, xy, xz, yz}` (6), `Σ_i |s_i|²/N` (1) and
/// `Σ_i (s_i^k)²/N` (3). With a cavity: `|α|²`, `|α|⁴`, `Re α`, `Im α`. Then
/// 3 entries per recorded spin and 9 per recorded pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLayout {
    pub n_spins: usize,
    pub cavity: bool,
    pub per_spin: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

const PAIR_INDEX: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
const BASE: usize = 13;

impl RawLayout {
    pub fn new(n_spins: usize, cavity: bool, request: &ObservableRequest) -> Self {
        Self { n_spins, cavity, per_spin: request.per_spin.clone(), pairs: request.pairs.clone() }
    }

    fn cavity_offset(&self) -> usize {
        BASE
    }

    fn per_spin_offset(&self) -> usize {
        BASE + if self.cavity { 4 } else { 0 }
    }

    fn pairs_offset(&self) -> usize {
        self.per_spin_offset() + 3 * self.per_spin.len()
    }

    pub fn len(&self) -> usize {
        self.pairs_offset() + 9 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes the raw moments of one phase-space point into `out`.
    pub fn record<T: Real>(&self, state: &SpinEnsembleState<T>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let mut m = [0.0f64; 3];
        let mut same = [0.0f64; 6];
        let mut len2 = 0.0;
        for s in &state.spins {
            let v = [s.x.as_f64(), s.y.as_f64(), s.z.as_f64()];
            for k in 0..3 {
                m[k] += v[k];
            }
            for (p, &(a, b)) in PAIR_INDEX.iter().enumerate() {
                same[p] += v[a] * v[b];
            }
            len2 += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        }
        let n = self.n_spins as f64;
        out[..3].copy_from_slice(&m);
        for (p, &(a, b)) in PAIR_INDEX.iter().enumerate() {
            out[3 + p] = m[a] * m[b] - same[p];
        }
        out[9] = len2 / n;
        for k in 0..3 {
            out[10 + k] = same[k] / n;
        }
        if self.cavity {
            let a = state.cavity.expect("layout expects a cavity amplitude");
            let (re, im) = (a.re.as_f64(), a.im.as_f64());
            let a2 = re * re + im * im;
            let o = self.cavity_offset();
            out[o] = a2;
            out[o + 1] = a2 * a2;
            out[o + 2] = re;
            out[o + 3] = im;
        }
        let o = self.per_spin_offset();
        for (k, &i) in self.per_spin.iter().enumerate() {
            let s = state.spins[i];
            out[o + 3 * k] = s.x.as_f64();
            out[o + 3 * k + 1] = s.y.as_f64();
            out[o + 3 * k + 2] = s.z.as_f64();
        }
        let o = self.pairs_offset();
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let (si, sj) = (state.spins[i].to_array(), state.spins[j].to_array());
            for a in 0..3 {
                for b in 0..3 {
                    out[o + 9 * k + 3 * a + b] = si[a].as_f64() * sj[b].as_f64();
                }
            }
        }
    }

    /// Converts trajectory-averaged raw moments into expectation values.
    pub fn moments(&self, avg: &[f64]) -> MomentSet {
        let n = self.n_spins as f64;
        let s_mean = [0.5 * avg[0], 0.5 * avg[1], 0.5 * avg[2]];
        let mut s_sym = [[0.0; 3]; 3];
        for (p, &(a, b)) in PAIR_INDEX.iter().enumerate() {
            let v = 0.25 * avg[3 + p] + if a == b { 0.25 * n } else { 0.0 };
            s_sym[a][b] = v;
            s_sym[b][a] = v;
        }
        let photons = self.cavity.then(|| {
            let o = self.cavity_offset();
            symmetric_to_normal(avg[o], avg[o + 1])
        });
        let o = self.per_spin_offset();
        let per_spin = (0..self.per_spin.len()).map(|k| [avg[o + 3 * k], avg[o + 3 * k + 1], avg[o + 3 * k + 2]]).collect();
        let o = self.pairs_offset();
        let pairs = (0..self.pairs.len())
            .map(|k| {
                let mut c = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        c[a][b] = avg[o + 9 * k + 3 * a + b];
                    }
                }
                c
            })
            .collect();
        MomentSet {
            n_spins: self.n_spins,
            s_mean,
            s_sym,
            spin_length: avg[9],
            component_squares: [avg[10], avg[11], avg[12]],
            photons,
            per_spin,
            pairs,
        }
    }
}

/// Normal-ordered photon moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonMoments {
    /// `⟨a†a⟩`
    pub n: f64,
    /// `⟨a†a†aa⟩`
    pub n2: f64,
}

/// Symmetric (Wigner) to normal ordering: `⟨a†a⟩ = ⟨|α|²⟩ - 1/2` and
/// `⟨a†²a²⟩ = ⟨|α|⁴⟩ - 2⟨|α|²⟩ + 1/2`.
pub fn symmetric_to_normal(abs2: f64, abs4: f64) -> PhotonMoments {
    PhotonMoments { n: abs2 - 0.5, n2: abs4 - 2.0 * abs2 + 0.5 }
}

/// `(⟨a†a⟩, g²(0))` from symmetric moments; `g²` is `None` when the photon
/// number is at or below `floor`.
pub fn photon_statistics(abs2: f64, abs4: f64, floor: f64) -> (f64, Option<f64>) {
    let p = symmetric_to_normal(abs2, abs4);
    (p.n, g2(p, floor))
}

fn g2(p: PhotonMoments, floor: f64) -> Option<f64> {
    (p.n > floor).then(|| p.n2 / (p.n * p.n))
}

/// Expectation values shared by the stochastic engine and the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub n_spins: usize,
    /// `⟨S_k⟩`
    pub s_mean: [f64; 3],
    /// `½⟨S_a S_b + S_b S_a⟩`
    pub s_sym: [[f64; 3]; 3],
    /// `Σ_i ⟨s_i²⟩ / N` (exactly 3 quantum mechanically)
    pub spin_length: f64,
    /// `Σ_i ⟨(s_i^k)²⟩ / N`
    pub component_squares: [f64; 3],
    pub photons: Option<PhotonMoments>,
    /// `⟨σ_i^k⟩` for requested spins.
    pub per_spin: Vec<[f64; 3]>,
    /// `⟨{σ_i^a σ_j^b}_sym⟩` for requested pairs.
    pub pairs: Vec<[[f64; 3]; 3]>,
}

impl MomentSet {
    /// Covariance matrix `½⟨{S_a, S_b}⟩ - ⟨S_a⟩⟨S_b⟩`.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let mut c = self.s_sym;
        for a in 0..3 {
            for b in 0..3 {
                c[a][b] -= self.s_mean[a] * self.s_mean[b];
            }
        }
        c
    }
}

/// Wineland parameter `ξ² = N min_φ (ΔS_φ^⊥)² / |⟨S⟩|²`.
///
/// The minimum over the plane orthogonal to `⟨S⟩` is the smaller eigenvalue
/// of the projected 2×2 covariance, with basis `n1 = ẑ × m̂` normalized (or
/// `x̂` when `m̂ ∥ ẑ`) and `n2 = m̂ × n1`. Returns `None` when
/// `|⟨S⟩| <= eps · N`.
pub fn squeezing_parameter(mean: [f64; 3], cov: [[f64; 3]; 3], n: usize, eps: f64) -> Option<f64> {
    let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    if !(norm > eps * n as f64) {
        return None;
    }
    let m = mean.map(|c| c / norm);
    let zxm = [-m[1], m[0], 0.0];
    let zn = (zxm[0] * zxm[0] + zxm[1] * zxm[1]).sqrt();
    let n1 = if zn < 1e-12 { [1.0, 0.0, 0.0] } else { [zxm[0] / zn, zxm[1] / zn, 0.0] };
    let n2 = [m[1] * n1[2] - m[2] * n1[1], m[2] * n1[0] - m[0] * n1[2], m[0] * n1[1] - m[1] * n1[0]];
    let quad = |u: [f64; 3], v: [f64; 3]| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += u[a] * cov[a][b] * v[b];
            }
        }
        s
    };
    let (a, b, c) = (quad(n1, n1), quad(n1, n2), quad(n2, n2));
    let lambda_min = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
    Some(lambda_min * n as f64 / (norm * norm))
}

/// Column of a time series: values may be undefined at some times.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnValue {
    pub name: String,
    pub value: Option<f64>,
    /// Linear in the raw moments, so its standard error follows from the
    /// per-trajectory sample variance.
    pub linear: Option<usize>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// Column names and values for one time point, in a fixed order.
pub fn columns(request: &ObservableRequest, layout: &RawLayout, m: &MomentSet) -> Vec<ColumnValue> {
    let mut out = Vec::new();
    let mut push = |name: String, value: Option<f64>, linear: Option<usize>| out.push(ColumnValue { name, value, linear });
    if request.collective {
        for k in 0..3 {
            push(format!("S{}", AXES[k]), Some(m.s_mean[k]), Some(k));
        }
        let cov = m.covariance();
        for k in 0..3 {
            push(format!("VarS{}", AXES[k]), Some(cov[k][k]), None);
        }
    }
    if request.squeezing {
        push("xi2".into(), squeezing_parameter(m.s_mean, m.covariance(), m.n_spins, request.squeezing_eps), None);
    }
    if request.spin_length {
        push("spin_length".into(), Some(m.spin_length), Some(9));
        for k in 0..3 {
            push(format!("s{}2", AXES[k]), Some(m.component_squares[k]), Some(10 + k));
        }
    }
    if request.photons {
        if let Some(p) = m.photons {
            push("photon_number".into(), Some(p.n), Some(layout.cavity_offset()));
            push("g2".into(), g2(p, request.photon_floor), None);
        }
    }
    let o = layout.per_spin_offset();
    for (k, &i) in layout.per_spin.iter().enumerate() {
        for a in 0..3 {
            push(format!("s{i}_{}", AXES[a]), Some(m.per_spin[k][a]), Some(o + 3 * k + a));
        }
    }
    let o = layout.pairs_offset();
    for (k, &(i, j)) in layout.pairs.iter().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                push(format!("c{i}{}_{j}{}", AXES[a], AXES[b]), Some(m.pairs[k][a][b]), Some(o + 9 * k + 3 * a + b));
            }
        }
    }
    out
}

/// Scale converting a raw moment to its linear column (`S_k = M_k / 2`).
pub(crate) fn linear_scale(raw_index: usize) -> f64 {
    if raw_index < 3 {
        0.5
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::TrajectoryRng;
    use crate::spin::{sample_cavity_initial, sample_initial_ensemble, BlochVector, Direction, ProductStateSpec};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex;
    use std::f64::consts::PI;

    fn averaged(layout: &RawLayout, spec: &ProductStateSpec, n_t: usize, seed: u64) -> MomentSet {
        let mut rng = TrajectoryRng::new(seed, 0);
        let mut acc = vec![0.0; layout.len()];
        let mut raw = vec![0.0; layout.len()];
        for _ in 0..n_t {
            let st: SpinEnsembleState<f64> = sample_initial_ensemble(spec, layout.n_spins, &mut rng).unwrap();
            layout.record(&st, &mut raw);
            for (a, r) in acc.iter_mut().zip(&raw) {
                *a += r;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n_t as f64);
        layout.moments(&acc)
    }

    #[test]
    fn all_down_is_an_eigenstate() {
        let n = 6;
        let req = ObservableRequest::default();
        let layout = RawLayout::new(n, false, &req);
        let m = averaged(&layout, &ProductStateSpec::uniform(Direction::DOWN, n), 500, 1);
        assert_abs_diff_eq!(m.s_mean[2], -(n as f64) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.covariance()[2][2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.spin_length, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn coherent_spin_state_statistics() {
        let n = 10;
        let req = ObservableRequest::default();
        let layout = RawLayout::new(n, false, &req);
        let n_t = 40_000;
        let m = averaged(&layout, &ProductStateSpec::uniform(Direction::PLUS_X, n), n_t, 2);
        let cov = m.covariance();
        // sample variance of a sum of n ±1/2 terms: stderr of (ΔS)² ≈ (N/4)·sqrt(2/n_t)
        let tol = 5.0 * (n as f64 / 4.0) * (2.0 / n_t as f64).sqrt();
        assert_abs_diff_eq!(cov[1][1], n as f64 / 4.0, epsilon = tol);
        assert_abs_diff_eq!(cov[2][2], n as f64 / 4.0, epsilon = tol);
        assert_abs_diff_eq!(cov[0][0], 0.0, epsilon = 1e-9);
        let xi2 = squeezing_parameter(m.s_mean, cov, n, 1e-6).unwrap();
        assert_abs_diff_eq!(xi2, 1.0, epsilon = 4.0 * (2.0 / n_t as f64).sqrt());
    }

    #[test]
    fn squeezing_of_exact_coherent_states_in_any_direction() {
        for &(theta, phi) in &[(0.3, 1.1), (PI / 2.0, 0.0), (0.0, 0.0), (PI, 0.0), (2.0, 4.0)] {
            let n = 7usize;
            let u = BlochVector::from_angles(theta, phi).to_array();
            let mean = u.map(|c| c * n as f64 / 2.0);
            // coherent state covariance: (N/4)(I - u uᵀ)
            let mut cov = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] = n as f64 / 4.0 * (if a == b { 1.0 } else { 0.0 } - u[a] * u[b]);
                }
            }
            assert_abs_diff_eq!(squeezing_parameter(mean, cov, n, 1e-6).unwrap(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(squeezing_parameter([0.0; 3], [[0.25; 3]; 3], 4, 1e-6), None);
    }

    #[test]
    fn sampled_coherent_states_rotated() {
        // estimator pipeline is rotation invariant
        let n = 5;
        let req = ObservableRequest::default();
        let layout = RawLayout::new(n, false, &req);
        let n_t = 40_000;
        let m = averaged(&layout, &ProductStateSpec::uniform(Direction { theta: 1.0, phi: 2.5 }, n), n_t, 3);
        let xi2 = squeezing_parameter(m.s_mean, m.covariance(), n, 1e-6).unwrap();
        assert_abs_diff_eq!(xi2, 1.0, epsilon = 5.0 * (2.0 / n_t as f64).sqrt());
    }

    #[test]
    fn same_site_identity_correction_vanishes_at_start() {
        // sampled squares equal one at t = 0, so the identity and sampled
        // conventions agree exactly
        let n = 4;
        let spec = ProductStateSpec::uniform(Direction { theta: 0.7, phi: 0.2 }, n);
        let mut rng = TrajectoryRng::new(8, 0);
        let st: SpinEnsembleState<f64> = sample_initial_ensemble(&spec, n, &mut rng).unwrap();
        let total_sq: f64 = st.spins.iter().map(|s| s.norm_sq()).sum();
        assert_abs_diff_eq!((total_sq - 3.0 * n as f64) / 4.0, 0.0, epsilon = 1e-12);
    }

    /// ⟨|α|⁴⟩ of the coherent-state Wigner function by quadrature on a grid.
    fn wigner_abs4(alpha0: f64) -> (f64, f64) {
        let (h, lim) = (0.01, 4.0f64);
        let (mut m2, mut m4, mut norm) = (0.0, 0.0, 0.0);
        let mut x = -lim;
        while x <= lim {
            let mut y = -lim;
            while y <= lim {
                let w = 2.0 / PI * (-2.0 * (x * x + y * y)).exp();
                let a2 = (alpha0 + x).powi(2) + y * y;
                m2 += a2 * w;
                m4 += a2 * a2 * w;
                norm += w;
                y += h;
            }
            x += h;
        }
        (m2 / norm, m4 / norm)
    }

    #[test]
    fn photon_statistics_of_coherent_states() {
        for alpha0 in [0.0, 1.0, 2.0, 4.0] {
            let (m2, m4) = wigner_abs4(alpha0);
            let a2 = alpha0 * alpha0;
            assert_abs_diff_eq!(m4, a2 * a2 + 2.0 * a2 + 0.5, epsilon = 1e-6 * (1.0 + a2 * a2));
            let (n, g) = photon_statistics(m2, m4, 1e-6);
            assert_abs_diff_eq!(n, a2, epsilon = 1e-6 * (1.0 + a2));
            if alpha0 > 0.0 {
                assert_abs_diff_eq!(g.unwrap(), 1.0, epsilon = 1e-5);
            } else {
                assert_eq!(g, None);
            }
        }
    }

    #[test]
    fn sampled_coherent_g2_is_one() {
        let mut rng = TrajectoryRng::new(12, 0);
        for a0sq in [1.0f64, 4.0, 16.0] {
            let a0 = Complex::new(a0sq.sqrt(), 0.0);
            let n_t = 400_000;
            let (mut s2, mut s4) = (0.0, 0.0);
            let mut samples = Vec::with_capacity(n_t);
            for _ in 0..n_t {
                let a: Complex<f64> = sample_cavity_initial(a0, &mut rng);
                let a2 = a.norm_sqr();
                s2 += a2;
                s4 += a2 * a2;
                samples.push(a2);
            }
            let (n, g) = photon_statistics(s2 / n_t as f64, s4 / n_t as f64, 1e-6);
            assert_abs_diff_eq!(n, a0sq, epsilon = 5.0 * (a0sq.max(0.25) / n_t as f64).sqrt() * 2.0);
            // delete-half jackknife gives the scale of the g² error
            let half = n_t / 2;
            let est = |xs: &[f64]| {
                let m2 = xs.iter().sum::<f64>() / xs.len() as f64;
                let m4 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
                photon_statistics(m2, m4, 1e-6).1.unwrap()
            };
            let spread = (est(&samples[..half]) - est(&samples[half..])).abs();
            assert!((g.unwrap() - 1.0).abs() < 4.0 * spread.max(0.01), "|α0|² = {a0sq}: g2 = {g:?}");
        }
    }

    #[test]
    fn vacuum_photon_number() {
        let mut rng = TrajectoryRng::new(13, 0);
        let n_t = 200_000;
        let mut s2 = 0.0;
        for _ in 0..n_t {
            s2 += sample_cavity_initial(Complex::new(0.0, 0.0), &mut rng).norm_sqr();
        }
        let (n, g) = photon_statistics(s2 / n_t as f64, 0.0, 1e-3);
        assert_abs_diff_eq!(n, 0.0, epsilon = 4.0 * 0.5 / (n_t as f64).sqrt());
        assert_eq!(g, None);
    }

    #[test]
    fn request_validation() {
        let mut r = ObservableRequest::default();
        r.per_spin = vec![0, 3];
        assert!(r.validate(3).is_err());
        r.per_spin = vec![0];
        r.pairs = vec![(1, 1)];
        assert!(r.validate(3).is_err());
        r.pairs = vec![(0, 2)];
        assert!(r.validate(3).is_ok());
    }
}
