//! Phase-space points of a single trajectory and their initial sampling.
//!
//! Each spin-1/2 is represented by a classical vector whose components are
//! drawn from the discrete Wigner distribution of the spin-down state,
//! `(±1, ±1, -1)` with equal weights, and then rotated to the requested Bloch
//! direction. A bosonic mode, when present, is sampled from the Gaussian
//! Wigner function of a coherent state.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cartesian axis label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Classical spin vector `(s^x, s^y, s^z)` of one trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> BlochVector<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Unit vector along `axis`.
    pub fn unit(axis: Axis) -> Self {
        let mut v = Self::zero();
        v[axis] = T::one();
        v
    }

    /// Unit vector with polar angle `theta` and azimuth `phi`.
    pub fn from_angles(theta: T, phi: T) -> Self {
        Self::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn cast<U: Real>(self) -> BlochVector<U> {
        BlochVector::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }

    /// Rotates `self` by angle `|w| dt` about `w`, i.e. the exact flow of
    /// `ds/dt = w × s` over `dt` for constant `w`.
    #[inline]
    pub fn precess(self, w: Self, dt: T) -> Self {
        let w2 = w.norm_sq();
        if w2 == T::zero() {
            return self;
        }
        let wn = w2.sqrt();
        let angle = wn * dt;
        let k = w * (T::one() / wn);
        let (sin, cos) = angle.sin_cos();
        let kxs = k.cross(self);
        let kds = k.dot(self);
        self * cos + kxs * sin + k * (kds * (T::one() - cos))
    }
}

impl<T> std::ops::Index<Axis> for BlochVector<T> {
    type Output = T;
    fn index(&self, a: Axis) -> &T {
        match a {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

impl<T> std::ops::IndexMut<Axis> for BlochVector<T> {
    fn index_mut(&mut self, a: Axis) -> &mut T {
        match a {
            Axis::X => &mut self.x,
            Axis::Y => &mut self.y,
            Axis::Z => &mut self.z,
        }
    }
}

impl<T: Real> Add for BlochVector<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for BlochVector<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x = self.x + o.x;
        self.y = self.y + o.y;
        self.z = self.z + o.z;
    }
}

impl<T: Real> Sub for BlochVector<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for BlochVector<T> {
    type Output = Self;
    #[inline]
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<T: Real> Neg for BlochVector<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Proper rotation matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3<T>(pub [[T; 3]; 3]);

impl<T: Real> Rotation3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self([[o, z, z], [z, o, z], [z, z, o]])
    }

    #[inline]
    pub fn apply(&self, v: BlochVector<T>) -> BlochVector<T> {
        let m = &self.0;
        BlochVector::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Rotation taking the spin-down direction `(0, 0, -1)` onto the Bloch
/// direction `(theta, phi)`.
///
/// The rotation axis is `(0,0,-1) × n̂` and the angle is the one between the
/// two vectors. For the antipodal target `+z` the rotation is by π about x.
pub fn rotation_to_direction<T: Real>(theta: T, phi: T) -> Rotation3<T> {
    let one = T::one();
    let (o, z) = (one, T::zero());
    // cos of the rotation angle: (0,0,-1) · n̂
    let c = -theta.cos();
    if one + c <= T::lit(1e-12) {
        return Rotation3([[o, z, z], [z, -o, z], [z, z, -o]]);
    }
    // R = c I + sin(angle) [u]x + (1 - c) u uᵀ with the unit axis u taken
    // from phi directly, which stays accurate close to the antipode.
    let u = [phi.sin(), -phi.cos(), z];
    let v = [u[0] * theta.sin(), u[1] * theta.sin(), z];
    let vx = [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]];
    let mut r = [[z; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let diag = if i == j { c } else { z };
            r[i][j] = diag + vx[i][j] + (one - c) * u[i] * u[j];
        }
    }
    Rotation3(r)
}

/// Draws one of the four discrete Wigner configurations of `|↓⟩`,
/// `(±1, ±1, -1)`, each with probability 1/4.
#[inline]
pub fn sample_down_configuration<T: Real, R: Rng + ?Sized>(rng: &mut R) -> BlochVector<T> {
    let bits = rng.next_u32();
    let sx = if bits & 1 == 0 { T::one() } else { -T::one() };
    let sy = if bits & 2 == 0 { T::one() } else { -T::one() };
    BlochVector::new(sx, sy, -T::one())
}

/// Samples the Wigner function `(2/π) exp(-2|α - α0|²)` of a coherent state:
/// each quadrature has variance 1/4 about `alpha0`.
pub fn sample_cavity_initial<T: Real, R: Rng + ?Sized>(alpha0: Complex<T>, rng: &mut R) -> Complex<T> {
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    let half = T::lit(0.5);
    alpha0 + Complex::new(T::lit(g1) * half, T::lit(g2) * half)
}

/// Target Bloch direction for one spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    /// Polar angle in `[0, π]`.
    pub theta: f64,
    /// Azimuth in `[0, 2π)`.
    pub phi: f64,
}

impl Direction {
    pub const DOWN: Direction = Direction { theta: std::f64::consts::PI, phi: 0.0 };
    pub const UP: Direction = Direction { theta: 0.0, phi: 0.0 };
    pub const PLUS_X: Direction = Direction { theta: std::f64::consts::FRAC_PI_2, phi: 0.0 };

    pub fn unit_vector(self) -> [f64; 3] {
        BlochVector::<f64>::from_angles(self.theta, self.phi).to_array()
    }
}

/// Product initial state: one Bloch direction per spin plus an optional
/// coherent amplitude for the cavity mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductStateSpec {
    directions: Vec<Direction>,
    pub cavity_alpha0: Option<Complex<f64>>,
}

impl ProductStateSpec {
    /// All `n` spins along the same direction. The direction is still stored
    /// per spin.
    pub fn uniform(direction: Direction, n: usize) -> Self {
        Self { directions: vec![direction; n], cavity_alpha0: None }
    }

    pub fn per_spin(directions: Vec<Direction>) -> Result<Self> {
        for (i, d) in directions.iter().enumerate() {
            if !d.theta.is_finite() || !d.phi.is_finite() {
                return Err(Error::InvalidParameter(format!("direction of spin {i} is not finite")));
            }
        }
        Ok(Self { directions, cavity_alpha0: None })
    }

    pub fn with_cavity(mut self, alpha0: Complex<f64>) -> Self {
        self.cavity_alpha0 = Some(alpha0);
        self
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Per-spin rotations, ready for repeated sampling.
    pub fn rotations<T: Real>(&self) -> Vec<Rotation3<T>> {
        self.directions.iter().map(|d| rotation_to_direction(T::lit(d.theta), T::lit(d.phi))).collect()
    }
}

/// Phase-space point of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinEnsembleState<T> {
    pub spins: Vec<BlochVector<T>>,
    pub cavity: Option<Complex<T>>,
    pub time: T,
}

impl<T: Real> SpinEnsembleState<T> {
    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    /// `Σ_i s_i`.
    pub fn total_spin(&self) -> BlochVector<T> {
        self.spins.iter().fold(BlochVector::zero(), |acc, s| acc + *s)
    }
}

/// Draws the initial phase-space point of one trajectory.
///
/// A spec holding a single direction is broadcast to all `n` spins; otherwise
/// its length must equal `n`.
pub fn sample_initial_ensemble<T: Real, R: Rng + ?Sized>(
    spec: &ProductStateSpec,
    n: usize,
    rng: &mut R,
) -> Result<SpinEnsembleState<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one spin".into()));
    }
    let rotations = spec.rotations::<T>();
    let spins = match rotations.len() {
        1 => (0..n).map(|_| rotations[0].apply(sample_down_configuration(rng))).collect(),
        len if len == n => rotations.iter().map(|r| r.apply(sample_down_configuration(rng))).collect(),
        len => {
            return Err(Error::DimensionMismatch(format!("initial state has {len} directions for {n} spins")));
        }
    };
    let cavity = spec
        .cavity_alpha0
        .map(|a| sample_cavity_initial(Complex::new(T::lit(a.re), T::lit(a.im)), rng));
    Ok(SpinEnsembleState { spins, cavity, time: T::zero() })
}
