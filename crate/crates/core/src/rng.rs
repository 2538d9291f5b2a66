//! Reproducible random streams.
//!
//! Every random component draws from an [`RngStream`] identified by a master
//! seed and a stream id. The stream id selects an independent ChaCha stream,
//! so trees, grids and probes can be sampled in any order (or in parallel)
//! and still reproduce bit-identical output.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream for the `index`-th instance of a named component, e.g.
    /// `("forest-tree", m)`.
    pub fn derive(seed: u64, component: &str, index: u64) -> Self {
        Self::new(seed, stream_id(component, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`, the support used for inverse-CDF exponentials.
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Uniform on the open interval `(lo, hi)`; requires `lo < hi`.
    pub fn uniform_open(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let x = lo + (hi - lo) * self.uniform();
            if x > lo && x < hi {
                return x;
            }
        }
    }

    /// Exponential draw with the given rate.
    pub fn exp(&mut self, rate: f64) -> Result<f64> {
        let u = self.uniform_open_closed();
        exp_from_uniform(u, rate)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Inverse CDF of `Exp(rate)` evaluated at `u ∈ (0, 1]`: `-ln(u) / rate`.
pub fn exp_from_uniform(u: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidRate(rate));
    }
    Ok(-u.ln() / rate)
}

/// Stable 64-bit stream id for `(component, index)`.
///
/// FNV-1a over the UTF-8 bytes of `component` followed by the little-endian
/// bytes of `index`. The derivation is fixed so other implementations can
/// reproduce the stream layout.
pub fn stream_id(component: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    component
        .as_bytes()
        .iter()
        .chain(index.to_le_bytes().iter())
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
