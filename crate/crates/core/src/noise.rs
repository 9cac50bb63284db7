//! Stochastic increments for dephasing, decay and cavity loss.
//!
//! Markovian channels are Ito increments evaluated at the pre-step state and
//! added on top of the coherent step. Colored dephasing is a smooth random
//! rotation about z driven by an Ornstein–Uhlenbeck field, so it enters the
//! coherent precession instead.
//!
//! Expected change of `s²` per step, to first order in `dt`:
//!
//! | channel | `E[d s²] / dt` |
//! |---|---|
//! | dephasing | `0` |
//! | standard decay | `Γ (1 - (s^z)²)` |
//! | improved decay | `(Γ/2) (4 - (s^x)² - (s^y)² - 2 (s^z)²)` |
//! | Langevin (QLE) decay | `-2 Γ s^z` |

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::TrajectoryRng;
use crate::scalar::Real;
use crate::spin::BlochVector;

/// Dissipation channel acting on the spins. Several channels may be active
/// at once; their increments add within a step.
///
/// Cavity loss is not listed here: it is part of
/// [`CavityCoupling`](crate::models::CavityCoupling) and is applied whenever a
/// cavity is present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseChannel {
    /// Independent white-noise dephasing of each spin at rate `Γφ`.
    DephasingIndividual { gamma_phi: f64 },
    /// One white-noise field shared by all spins, rate `Γφ^C`.
    DephasingCollective { gamma_phi: f64 },
    /// Ornstein–Uhlenbeck dephasing with stationary variance `sigma²` and
    /// correlation time `tau_c`; `collective` shares one field.
    DephasingColored { sigma: f64, tau_c: f64, #[serde(default)] collective: bool },
    /// Length-preserving (on average) decay at rate `Γ`.
    DecayStandard { gamma: f64 },
    /// Two-Wiener decay process with a more symmetric length balance.
    DecayImproved { gamma: f64 },
    /// Decay noise obtained from the quantum Langevin equations. Kept for
    /// comparisons; it does not preserve the spin length.
    DecayQle { gamma: f64 },
}

impl NoiseChannel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v} must be >= 0")));
        match *self {
            NoiseChannel::DephasingIndividual { gamma_phi } | NoiseChannel::DephasingCollective { gamma_phi } => {
                if !(gamma_phi >= 0.0) {
                    return bad("gamma_phi", gamma_phi);
                }
            }
            NoiseChannel::DephasingColored { sigma, tau_c, .. } => {
                if !(sigma >= 0.0) {
                    return bad("sigma", sigma);
                }
                if !(tau_c > 0.0) {
                    return Err(Error::InvalidParameter(format!("tau_c = {tau_c} must be > 0")));
                }
            }
            NoiseChannel::DecayStandard { gamma } | NoiseChannel::DecayImproved { gamma } | NoiseChannel::DecayQle { gamma } => {
                if !(gamma >= 0.0) {
                    return bad("gamma", gamma);
                }
            }
        }
        Ok(())
    }

    /// Fastest rate of the channel, for step-size selection.
    pub fn max_rate(&self) -> f64 {
        match *self {
            NoiseChannel::DephasingIndividual { gamma_phi } | NoiseChannel::DephasingCollective { gamma_phi } => gamma_phi,
            NoiseChannel::DephasingColored { sigma, tau_c, .. } => sigma.max(1.0 / tau_c),
            NoiseChannel::DecayStandard { gamma } | NoiseChannel::DecayImproved { gamma } | NoiseChannel::DecayQle { gamma } => gamma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseChannel::DephasingIndividual { .. } => "dephasing_individual",
            NoiseChannel::DephasingCollective { .. } => "dephasing_collective",
            NoiseChannel::DephasingColored { .. } => "dephasing_colored",
            NoiseChannel::DecayStandard { .. } => "decay_standard",
            NoiseChannel::DecayImproved { .. } => "decay_improved",
            NoiseChannel::DecayQle { .. } => "decay_qle",
        }
    }
}

/// `ds = (-Γφ s^x dt - √(2Γφ) s^y dW, -Γφ s^y dt + √(2Γφ) s^x dW, 0)`.
#[inline]
pub fn dephasing_increment<T: Real>(s: BlochVector<T>, gamma_phi: T, dt: T, dw: T) -> BlochVector<T> {
    let d = gamma_phi * dt;
    let k = (T::lit(2.0) * gamma_phi).sqrt() * dw;
    BlochVector::new(-d * s.x - k * s.y, -d * s.y + k * s.x, T::zero())
}

/// Standard decay increment.
#[inline]
pub fn decay_increment<T: Real>(s: BlochVector<T>, gamma: T, dt: T, dw: T) -> BlochVector<T> {
    let half = T::lit(0.5) * gamma * dt;
    let k = gamma.sqrt() * dw;
    let zp = s.z + T::one();
    BlochVector::new(-half * s.x - k * s.y, -half * s.y + k * s.x, -gamma * dt * zp + k * zp)
}

/// Improved decay increment with two independent Wiener increments.
#[inline]
pub fn decay_increment_improved<T: Real>(s: BlochVector<T>, gamma: T, dt: T, dw1: T, dw2: T) -> BlochVector<T> {
    let one = T::one();
    let half = T::lit(0.5) * gamma * dt;
    let k = T::lit(0.5) * gamma.sqrt();
    let kz = (T::lit(0.5) * gamma).sqrt();
    BlochVector::new(
        -half * s.x - k * ((s.y + one) * dw1 + (s.y - one) * dw2),
        -half * s.y + k * ((s.x + one) * dw1 + (s.x - one) * dw2),
        -gamma * dt * (s.z + one) + kz * (s.z + one) * (dw1 - dw2),
    )
}

/// Decay increment from the quantum Langevin equations. Not length
/// preserving: `E[d s²] = -2Γ s^z dt`.
#[inline]
pub fn decay_increment_qle<T: Real>(s: BlochVector<T>, gamma: T, dt: T, dw1: T, dw2: T) -> BlochVector<T> {
    let half = T::lit(0.5) * gamma * dt;
    let k = gamma.sqrt();
    BlochVector::new(
        -half * s.x + k * s.z * dw1,
        -half * s.y - k * s.z * dw2,
        -gamma * dt * (s.z + T::one()) - k * (s.x * dw1 - s.y * dw2),
    )
}

/// `dα = -κ α dt + √(κ/2) (dW1 + i dW2)`.
#[inline]
pub fn cavity_loss_increment<T: Real>(alpha: Complex<T>, kappa: T, dt: T, dw1: T, dw2: T) -> Complex<T> {
    let k = (T::lit(0.5) * kappa).sqrt();
    alpha * (-kappa * dt) + Complex::new(k * dw1, k * dw2)
}

/// `ξ e_z × s`, the velocity of a rotation about z at frequency `ξ`.
#[inline]
pub fn colored_dephasing_drift<T: Real>(s: BlochVector<T>, xi: T) -> BlochVector<T> {
    BlochVector::new(-xi * s.y, xi * s.x, T::zero())
}

/// Ornstein–Uhlenbeck dephasing fields, one per spin (or one shared).
#[derive(Clone, Debug, PartialEq)]
pub struct OuState<T> {
    pub xi: Vec<T>,
}

impl<T: Real> OuState<T> {
    /// Draws every field from the stationary distribution `N(0, sigma²)`.
    pub fn stationary(len: usize, sigma: T, rng: &mut TrajectoryRng) -> Self {
        Self { xi: (0..len).map(|_| rng.normal::<T>() * sigma).collect() }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// One Euler step of `dξ = -ξ/τ_c dt + √(2/τ_c) σ dη` with caller-supplied
/// increments `deta` (one per field).
pub fn ou_step<T: Real>(state: &mut OuState<T>, tau_c: T, sigma: T, dt: T, deta: &[T]) {
    debug_assert_eq!(state.xi.len(), deta.len());
    let decay = dt / tau_c;
    let k = (T::lit(2.0) / tau_c).sqrt() * sigma;
    for (x, e) in state.xi.iter_mut().zip(deta) {
        *x = *x - *x * decay + k * *e;
    }
}
