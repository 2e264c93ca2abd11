//! Deterministic random streams.
//!
//! Every stochastic routine in this crate draws from a [`Stream`] derived from
//! a single master seed. Sub-streams are split by hashing the master seed
//! together with a purpose label and two indices (typically epoch and chain),
//! so runs are reproducible bit-for-bit regardless of thread scheduling, and
//! adding draws to one consumer never perturbs another.
//!
//! Gaussian variates use the Box-Muller transform on top of 53-bit uniforms,
//! so values depend only on the stream state, never on platform libm quirks
//! beyond `ln`/`sqrt`/`cos`/`sin` (which are correctly rounded or nearly so on
//! every supported target).

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// FNV-1a over bytes. Stable and documented; not cryptographic, used only to
/// spread purpose labels and indices into seed material.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; bijective scrambler for seed derivation.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for purpose-scoped sub-streams of one master seed.
#[derive(Clone, Copy, Debug)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Streams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive the sub-stream identified by `(label, epoch, index)`.
    ///
    /// The stream id is `mix(master ^ fnv1a(label) ^ mix(epoch+1) ^ mix(index+0x9e..))`;
    /// distinct labels or indices give independent ChaCha streams.
    pub fn stream(&self, label: &str, epoch: u64, index: u64) -> Stream {
        let id = mix64(
            self.master
                ^ fnv1a64(label.as_bytes())
                ^ mix64(epoch.wrapping_add(1))
                ^ mix64(index.wrapping_add(0x9e37_79b9)),
        );
        Stream::from_seed_u64(id)
    }
}

/// A deterministic stream of uniforms and Gaussians backed by ChaCha12.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha12Rng,
    spare_gaussian: Option<f64>,
}

impl Stream {
    pub fn from_seed_u64(seed: u64) -> Self {
        Stream {
            rng: ChaCha12Rng::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    /// Uniform integer in [0, n) by rejection; exact for any n > 0.
    pub fn index_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller; pairs are cached so consecutive calls
    /// consume uniforms two at a time.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn gaussian_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.gaussian()).collect()
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.gaussian();
        }
    }

    /// Uniform point in the closed ball B(center, radius).
    pub fn uniform_in_ball(&mut self, center: &[f64], radius: f64) -> Vec<f64> {
        let d = center.len();
        loop {
            let mut z = self.gaussian_vec(d);
            let norm = crate::linalg::norm(&z);
            if norm == 0.0 {
                continue; // probability zero, but stay exact
            }
            let u = self.uniform01();
            let scale = radius * u.powf(1.0 / d as f64) / norm;
            for (zi, ci) in z.iter_mut().zip(center) {
                *zi = ci + *zi * scale;
            }
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let streams = Streams::new(42);
        let mut a = streams.stream("unit", 3, 7);
        let mut b = streams.stream("unit", 3, 7);
        for _ in 0..100 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
            assert_eq!(a.uniform01().to_bits(), b.uniform01().to_bits());
        }
    }

    #[test]
    fn distinct_labels_decorrelate() {
        let streams = Streams::new(42);
        let mut a = streams.stream("chain", 0, 0);
        let mut b = streams.stream("smoothing", 0, 0);
        let matches = (0..1000)
            .filter(|_| a.rng.next_u64() == b.rng.next_u64())
            .count();
        assert_eq!(matches, 0);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = Stream::from_seed_u64(7);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.gaussian();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01, "gaussian mean {m1} too far from 0");
        assert!((m2 - 1.0).abs() < 0.02, "gaussian second moment {m2} too far from 1");
    }

    #[test]
    fn ball_sampling_stays_inside_and_centers() {
        let mut s = Stream::from_seed_u64(9);
        let c = [1.0, -2.0, 0.5];
        let mut mean = [0.0; 3];
        let n = 50_000;
        for _ in 0..n {
            let x = s.uniform_in_ball(&c, 2.0);
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(r2 <= 4.0 + 1e-12);
            for (m, xi) in mean.iter_mut().zip(&x) {
                *m += xi / n as f64;
            }
        }
        for (m, ci) in mean.iter().zip(&c) {
            assert!((m - ci).abs() < 0.02, "ball mean {m} vs center {ci}");
        }
    }

    #[test]
    fn index_below_uniform() {
        let mut s = Stream::from_seed_u64(3);
        let mut counts = [0u32; 5];
        for _ in 0..50_000 {
            counts[s.index_below(5) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "count {c} far from uniform");
        }
    }
}
