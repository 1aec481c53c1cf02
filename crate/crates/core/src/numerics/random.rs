//! Seedable random streams and the variate generators built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{Error, Result};

/// A deterministic random stream identified by `(seed, stream_id)`.
///
/// Streams with the same identifiers replay the same draws; distinct
/// `stream_id`s under one seed select disjoint ChaCha streams.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed whose id is derived from this
    /// stream's id and `label`. Does not advance `self`.
    pub fn substream(&self, label: u64) -> Self {
        Self::new(self.seed, mix_ids(&[self.stream_id, label]))
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Exponential draw with the given rate.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }

    /// Gamma(shape, rate) draw; validates the parameters.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> Result<f64> {
        sample_gamma(self, shape, rate)
    }

    /// Gamma(shape, rate) draw without validation.
    #[inline]
    pub fn gamma_raw(&mut self, shape: f64, rate: f64) -> f64 {
        gamma_unit(self, shape) / rate
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines identifiers into a single 64-bit stream id. Order-sensitive.
pub fn mix_ids(ids: &[u64]) -> u64 {
    ids.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &id| splitmix(acc ^ splitmix(id)))
}

/// Stable 64-bit id for a real-valued label (e.g. ν_true = 2.5).
pub fn real_id(x: f64) -> u64 {
    x.to_bits()
}

/// Gamma(shape, rate) variate. Marsaglia–Tsang squeeze for shape ≥ 1; for
/// shape < 1 a Gamma(shape + 1) draw is scaled by U^{1/shape}.
pub fn sample_gamma(stream: &mut RandomStream, shape: f64, rate: f64) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(Error::domain(
            "sample_gamma",
            format!("shape and rate must be finite and > 0 (shape={shape}, rate={rate})"),
        ));
    }
    Ok(stream.gamma_raw(shape, rate))
}

fn gamma_unit(stream: &mut RandomStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = marsaglia_tsang(stream, shape + 1.0);
        let log_u = stream.uniform().ln();
        return (g.ln() + log_u / shape).exp().max(f64::MIN_POSITIVE);
    }
    marsaglia_tsang(stream, shape)
}

fn marsaglia_tsang(stream: &mut RandomStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = stream.normal();
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = stream.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}
