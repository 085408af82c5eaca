//! Random streams and the primitive draws built on them.
//!
//! Every draw goes through [`RngCore`] directly so that results depend only on
//! the sequence of 64-bit words a stream emits. That keeps outputs stable
//! across `rand` releases and lets tests drive the draws with
//! [`ScriptedRng`].

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};

/// The concrete stream used by the pipeline.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output finalizer.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream of one batch. Pure; needs no coordination between workers.
pub fn derive_stream_seed(global_seed: u64, batch_index: u64) -> u64 {
    splitmix64_mix(global_seed ^ batch_index.wrapping_mul(GOLDEN_GAMMA))
}

/// Uniform integer in `0..n` by modulo with rejection. `n` must be positive.
pub fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "uniform_below needs a non-empty range");
    // Largest accepted word; the accepted range holds a multiple of n values.
    let limit = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= limit {
            return v % n;
        }
    }
}

/// Uniform double in the open interval (0, 1).
pub fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Fair coin: low bit 0 picks `a`, 1 picks `b`.
pub fn pick_uniform<T, R: RngCore + ?Sized>(a: T, b: T, rng: &mut R) -> T {
    if rng.next_u64() & 1 == 0 {
        a
    } else {
        b
    }
}

/// Above this shape sum Jöhnk's acceptance rate collapses and the gamma-ratio
/// sampler takes over.
const JOHNK_MAX_SHAPE: f64 = 1.0;

/// One draw from Beta(alpha, beta).
///
/// Shapes up to 1 use Jöhnk's method evaluated on log scale, which stays
/// accurate when `u^(1/alpha)` underflows for small shapes such as 0.1.
/// Larger shapes fall back to `rand_distr`'s sampler.
pub fn sample_beta<R: RngCore + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidBetaParams { alpha, beta });
    }
    if alpha.max(beta) <= JOHNK_MAX_SHAPE {
        return Ok(johnk_log(alpha, beta, rng));
    }
    let dist = rand_distr::Beta::new(alpha, beta)
        .map_err(|_| Error::InvalidBetaParams { alpha, beta })?;
    let mut adapter = RngAdapter(rng);
    Ok(dist.sample(&mut adapter).clamp(0.0, 1.0))
}

fn johnk_log<R: RngCore + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    loop {
        let log_x = unit_open(rng).ln() / alpha;
        let log_y = unit_open(rng).ln() / beta;
        let (log_max, log_min) = (log_x.max(log_y), log_x.min(log_y));
        let log1p_ratio = (log_min - log_max).exp().ln_1p();
        if log_max + log1p_ratio <= 0.0 {
            // The smaller part has full relative precision; the larger one is
            // its complement, so values near 1 round correctly.
            let small = (log_min - log_max - log1p_ratio).exp();
            let x = if log_x < log_y { small } else { 1.0 - small };
            return x.clamp(0.0, 1.0);
        }
    }
}

struct RngAdapter<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// A stream that replays a fixed script of words, cycling when exhausted.
///
/// Used to enumerate every outcome of a draw in tests and to replay a
/// recorded decision sequence.
#[derive(Debug, Clone)]
pub struct ScriptedRng {
    words: Vec<u64>,
    pos: usize,
}

impl ScriptedRng {
    pub fn new(words: Vec<u64>) -> Self {
        assert!(!words.is_empty(), "script needs at least one word");
        Self { words, pos: 0 }
    }

    pub fn constant(word: u64) -> Self {
        Self::new(vec![word])
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }

    fn next_u64(&mut self) -> u64 {
        let w = self.words[self.pos % self.words.len()];
        self.pos += 1;
        w
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}
