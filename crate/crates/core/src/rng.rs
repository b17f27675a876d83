//! Seeded random streams keyed by `(global_seed, epoch, sample_index)`.
//!
//! Every consumer of randomness derives its own stream from a key, so results
//! never depend on the order in which samples are processed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent purposes draw from disjoint streams even for equal keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Augment = 0x41,
    Baseline = 0x42,
    Shuffle = 0x53,
    Init = 0x49,
    Subset = 0x55,
    Magnitude = 0x4d,
    Synth = 0x59,
}

#[derive(Debug, Clone)]
pub struct AugRng {
    inner: ChaCha8Rng,
}

impl AugRng {
    /// The augmentation stream for one sample in one epoch.
    pub fn new(global_seed: u64, epoch: u64, sample_index: u64) -> Self {
        Self::for_stream(Stream::Augment, global_seed, epoch, sample_index)
    }

    pub fn for_stream(stream: Stream, global_seed: u64, epoch: u64, sample_index: u64) -> Self {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&global_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&epoch.to_le_bytes());
        seed[16..24].copy_from_slice(&sample_index.to_le_bytes());
        seed[24..32].copy_from_slice(&(stream as u64).to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.coin() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn normal(&mut self) -> f64 {
        // Box-Muller; one value per call keeps streams simple to reason about.
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

impl RngCore for AugRng {
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
