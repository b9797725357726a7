//! Deterministic, label-addressed random streams.
//!
//! A stream is identified by `(seed, trial, point, purpose)`. The label is
//! mixed into the seed with SplitMix64 finalizers and the result seeds a
//! ChaCha8 generator, so every `(trial, point, purpose)` triple owns an
//! independent sequence regardless of the order in which work is scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes at the same
/// `(trial, point)` never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Pretrain,
    Calibration,
    Test,
    Prototype,
    Smoothing,
    Split,
    Bandwidth,
    Tilt,
    Redraw,
    /// Prototype and smoothing draws made inside a conformal method.
    Method,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Pretrain => 1,
            Purpose::Calibration => 2,
            Purpose::Test => 3,
            Purpose::Prototype => 4,
            Purpose::Smoothing => 5,
            Purpose::Split => 6,
            Purpose::Bandwidth => 7,
            Purpose::Tilt => 8,
            Purpose::Redraw => 9,
            Purpose::Method => 10,
            Purpose::Custom(t) => 0x1000_0000_0000_0000 ^ t,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed plus the `(trial, point)` part of a stream label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
    pub point: u64,
}

impl StreamKey {
    pub fn new(seed: u64, trial: u64, point: u64) -> Self {
        Self { seed, trial, point }
    }

    /// Same seed and trial, different point index.
    pub fn at_point(self, point: u64) -> Self {
        Self { point, ..self }
    }

    pub fn at_trial(self, trial: u64) -> Self {
        Self { trial, ..self }
    }

    pub fn stream(self, purpose: Purpose) -> RngStream {
        RngStream::new(self.seed, self.trial, self.point, purpose)
    }
}

/// A reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, trial: u64, point: u64, purpose: Purpose) -> Self {
        let mut h = splitmix64(seed);
        h = splitmix64(h ^ trial);
        h = splitmix64(h ^ point.rotate_left(17));
        h = splitmix64(h ^ purpose.tag().rotate_left(41));
        Self {
            rng: ChaCha8Rng::seed_from_u64(h),
        }
    }

    /// A stream for one-off uses that are not tied to a trial or point.
    pub fn from_seed(seed: u64, purpose: Purpose) -> Self {
        Self::new(seed, u64::MAX, u64::MAX, purpose)
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
