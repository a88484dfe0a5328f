//! BPSK over AWGN and channel log-likelihood ratios.
//!
//! Sign convention used throughout the crate: bit 0 ↦ +1, and a positive LLR
//! means bit 0 is the more likely value.
//!
//! Randomness comes from ChaCha8 streams (`rand_chacha::ChaCha8Rng`). A stream
//! is identified by `(seed, stream id)`, so independent consumers of the same
//! seed can be split without sharing mutable state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Per-bit channel log-likelihood ratios, `ln P(bit = 0 | y) / P(bit = 1 | y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrVector(Vec<f64>);

impl LlrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("LLR {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hard decision: nonnegative LLR ↦ bit 0.
    pub fn hard_decision(&self) -> Vec<u8> {
        self.0.iter().map(|&l| u8::from(l < 0.0)).collect()
    }
}

/// A seeded random stream; `stream` selects an independent ChaCha substream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn bpsk_modulate(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| if b & 1 == 0 { 1.0 } else { -1.0 }).collect()
}

/// Noise standard deviation for a rate-`rate` code at `snr_db` = Eb/N0 in dB.
pub fn awgn_sigma(snr_db: f64, rate: f64) -> f64 {
    (1.0 / (2.0 * rate * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds i.i.d. Gaussian noise at the given Eb/N0 using a caller-owned stream.
/// Returns the received samples and the noise standard deviation.
pub fn awgn_with<R: rand::Rng + ?Sized>(
    symbols: &[f64],
    snr_db: f64,
    rate: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Parameter(format!("SNR {snr_db} dB")));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Parameter(format!("code rate {rate} outside (0, 1]")));
    }
    let sigma = awgn_sigma(snr_db, rate);
    let received = symbols
        .iter()
        .map(|&s| {
            let z: f64 = StandardNormal.sample(rng);
            s + sigma * z
        })
        .collect();
    Ok((received, sigma))
}

/// [`awgn_with`] on a fresh stream derived from `seed`.
pub fn awgn(symbols: &[f64], snr_db: f64, rate: f64, seed: u64) -> Result<(Vec<f64>, f64)> {
    awgn_with(symbols, snr_db, rate, &mut rng_stream(seed, 0))
}

/// `l = 2y / σ²`.
pub fn llr_from_channel(received: &[f64], sigma: f64) -> Result<LlrVector> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let scale = 2.0 / (sigma * sigma);
    LlrVector::new(received.iter().map(|&y| scale * y).collect())
}
