//! Seeded Gaussian increments addressable by `(path, channel, step)`.
//!
//! Every step consumes exactly two 64-bit words per channel (Box–Muller,
//! cosine branch only), so a stream can jump to any step without replaying
//! the ones before it. Paths map to ChaCha stream ids.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_NORMAL: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
    domain: u64,
    n_channels: usize,
}

impl NoiseSource {
    pub fn new(seed: u64, n_channels: usize) -> Self {
        Self::with_domain(seed, 0, n_channels)
    }

    /// A source statistically independent of every other domain with the
    /// same seed.
    pub fn with_domain(seed: u64, domain: u64, n_channels: usize) -> Self {
        Self {
            seed,
            domain,
            n_channels,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn stream(&self, path: u64) -> NoiseStream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.domain.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path);
        NoiseStream {
            rng,
            n_channels: self.n_channels,
            step: 0,
        }
    }

    /// Standard normal driving `channel` at `step` of `path`.
    pub fn normal(&self, path: u64, channel: usize, step: u64) -> f64 {
        let mut s = self.stream(path);
        s.seek(step);
        s.rng
            .set_word_pos(s.rng.get_word_pos() + WORDS_PER_NORMAL * channel as u128);
        box_muller(&mut s.rng)
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    n_channels: usize,
    step: u64,
}

impl NoiseStream {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Index of the next step to be drawn.
    pub fn position(&self) -> u64 {
        self.step
    }

    pub fn seek(&mut self, step: u64) {
        self.rng
            .set_word_pos(step as u128 * WORDS_PER_NORMAL * self.n_channels as u128);
        self.step = step;
    }

    /// Fills `out` (one entry per channel) with the standard normals of the
    /// current step and advances.
    pub fn next_normals(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_channels);
        for z in out.iter_mut() {
            *z = box_muller(&mut self.rng);
        }
        self.step += 1;
    }

    /// Brownian increments over a step of length `dt`.
    pub fn next_increments(&mut self, dt: f64, out: &mut [f64]) {
        self.next_normals(out);
        let s = dt.sqrt();
        out.iter_mut().for_each(|z| *z *= s);
    }
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
