//! Reproducible per-trajectory random streams.
//!
//! Every trajectory owns a ChaCha8 stream selected by `(master_seed,
//! trajectory_index)`. ChaCha is a counter-based generator, so stream `k` is
//! addressable without generating streams `0..k`, and the numbers a
//! trajectory sees do not depend on which worker runs it or in which order.
//! Within a trajectory, draws are consumed in a fixed order (initial state,
//! disorder, then per step: shared increments, per-spin increments in spin
//! order, cavity, colored-noise drivers).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Stream index reserved for draws shared by every trajectory (frozen disorder).
pub const SHARED_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug)]
pub struct TrajectoryRng {
    inner: ChaCha8Rng,
}

impl TrajectoryRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Standard normal variate.
    #[inline]
    pub fn normal<T: Real>(&mut self) -> T {
        let v: f64 = self.inner.sample(StandardNormal);
        T::lit(v)
    }

    /// Wiener increment with variance `dt`, given `sqrt_dt`.
    #[inline]
    pub fn wiener<T: Real>(&mut self, sqrt_dt: T) -> T {
        self.normal::<T>() * sqrt_dt
    }
}

impl RngCore for TrajectoryRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
