//! A sparse-noisy-parity watermark over a binary vocabulary.
//!
//! Every position draws a noise pair from a keyed pseudorandom stream.
//! Most positions emit the pair untouched; every `lambda + 1`-th position
//! carries one watermark bit: the parity (over a secret support set) of
//! the preceding `lambda` pair-order indicators, embedded by keeping or
//! swapping the pair so the realized order matches the parity bit except
//! with flip probability `q`. The detector replays the stream, predicts
//! each parity bit, and scores the match rate against the observed tokens.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decode::gamma_exp_min;
use crate::error::{Error, Result};
use crate::lm::{entropy_bits, next_dist, ModelSpec, TokenSeq};
use crate::seed::{rng_for_index, rng_from_seed};
use crate::wkey::NoiseVector;

/// Secret key: a sparse parity function plus the stream seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpnKey {
    pub lambda: usize,
    /// Sorted support of the secret, |support| = floor(log2 lambda).
    pub support: Vec<usize>,
    /// Flip probability in [0, 1/2); 0 disables the embedding noise.
    pub noise_q: f64,
    pub seed: u64,
}

impl LpnKey {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 4 {
            return Err(Error::InvalidParameter("lambda must be >= 4".into()));
        }
        if !(0.0..0.5).contains(&self.noise_q) {
            return Err(Error::InvalidParameter(format!(
                "noise level must satisfy 0 <= q < 1/2, got {}",
                self.noise_q
            )));
        }
        let k = (self.lambda as f64).log2().floor() as usize;
        if self.support.len() != k {
            return Err(Error::InvalidStructure(format!(
                "support size {} but floor(log2 {}) = {k}",
                self.support.len(),
                self.lambda
            )));
        }
        if self.support.windows(2).any(|w| w[0] >= w[1])
            || self.support.iter().any(|&i| i >= self.lambda)
        {
            return Err(Error::InvalidStructure(
                "support must be sorted, distinct, and within 0..lambda".into(),
            ));
        }
        Ok(())
    }
}

/// What one detection run saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpnReport {
    /// Number of embedded positions t = floor(|y| / (lambda+1)).
    pub embedded_positions: usize,
    /// Fraction of embedded tokens matching the predicted parity bit.
    pub match_rate: f64,
    pub theta: f64,
    pub verdict: bool,
    /// Per embedded position: whether the observed token differs from the
    /// stream's natural pair order. On genuine output this reproduces the
    /// generator's swap decisions exactly.
    pub swaps: Vec<bool>,
    /// Empirical entropy (bits) of the observed tokens at embedded
    /// positions — a diagnostic, not part of the verdict.
    pub embedded_token_entropy: f64,
}

/// Generate a key: the support is a uniform size-floor(log2 lambda)
/// subset of 0..lambda, drawn deterministically from the seed.
pub fn lpn_gen(lambda: usize, q: f64, seed: u64) -> Result<LpnKey> {
    let k = if lambda >= 4 { (lambda as f64).log2().floor() as usize } else { 0 };
    let mut support: Vec<usize> = if lambda >= 4 {
        sample(&mut rng_from_seed(seed), lambda, k).into_iter().collect()
    } else {
        Vec::new()
    };
    support.sort_unstable();
    let key = LpnKey { lambda, support, noise_q: q, seed };
    key.validate()?;
    Ok(key)
}

/// Parity of `x` restricted to the key's support.
pub fn parity(key: &LpnKey, x: &[u8]) -> Result<u8> {
    if x.len() != key.lambda {
        return Err(Error::InvalidParameter(format!(
            "buffer length {} does not match lambda {}",
            x.len(),
            key.lambda
        )));
    }
    Ok(key.support.iter().fold(0, |acc, &i| acc ^ (x[i] & 1)))
}

/// The noise pair at stream position `p`.
fn stream_pair(seed: u64, p: usize) -> (f64, f64) {
    let mut rng = rng_for_index(seed, p as u64);
    (rng.gen::<f64>(), rng.gen::<f64>())
}

/// Default detection threshold, inversely proportional to the dimension.
pub fn default_theta(lambda: usize) -> f64 {
    1.0 / (2.0 * lambda as f64)
}

fn decode_pair(pair: (f64, f64), pi: &[f64]) -> Result<u32> {
    gamma_exp_min(&NoiseVector { mu: vec![pair.0, pair.1], precision: 53 }, pi)
}

fn is_embedded(p: usize, lambda: usize) -> bool {
    (p + 1) % (lambda + 1) == 0
}

/// Generate `m` watermarked bits, also reporting the swap decision made
/// at each embedded position.
pub fn lpn_generate_traced<R: Rng>(
    model: &ModelSpec,
    key: &LpnKey,
    m: usize,
    rng: &mut R,
) -> Result<(TokenSeq, Vec<bool>)> {
    key.validate()?;
    if model.vocab_size() != 2 {
        return Err(Error::InvalidParameter(format!(
            "parity embedding needs a binary vocabulary, got {}",
            model.vocab_size()
        )));
    }
    if m < key.lambda + 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least lambda+1 = {} tokens, got {m}",
            key.lambda + 1
        )));
    }
    let mut seq = Vec::with_capacity(m);
    let mut swaps = Vec::new();
    let mut buffer: Vec<u8> = Vec::with_capacity(key.lambda);
    for p in 0..m {
        let pair = stream_pair(key.seed, p);
        let indicator = (pair.0 < pair.1) as u8;
        let emitted = if is_embedded(p, key.lambda) {
            let b = parity(key, &buffer)?;
            let target = if rng.gen::<f64>() < key.noise_q { 1 - b } else { b };
            let swap = indicator != target;
            swaps.push(swap);
            if swap { (pair.1, pair.0) } else { pair }
        } else {
            buffer.push(indicator);
            if buffer.len() > key.lambda {
                buffer.remove(0);
            }
            pair
        };
        let tok = decode_pair(emitted, &next_dist(model, &seq))?;
        seq.push(tok);
    }
    Ok((seq, swaps))
}

/// Generate `m` watermarked bits.
pub fn lpn_generate<R: Rng>(
    model: &ModelSpec,
    key: &LpnKey,
    m: usize,
    rng: &mut R,
) -> Result<TokenSeq> {
    lpn_generate_traced(model, key, m, rng).map(|(seq, _)| seq)
}

/// Score `y` against the key: replay the stream, predict each embedded
/// position's parity bit from the preceding indicators, and accept when
/// the match rate reaches `1/2 + theta`.
pub fn lpn_detect(y: &[u32], key: &LpnKey, theta: f64) -> Result<LpnReport> {
    key.validate()?;
    if let Some(&bad) = y.iter().find(|&&t| t > 1) {
        return Err(Error::TokenOutOfRange { token: bad, vocab_size: 2 });
    }
    let t = y.len() / (key.lambda + 1);
    if t == 0 {
        return Err(Error::InvalidParameter(format!(
            "sequence of length {} is shorter than one embedding period ({})",
            y.len(),
            key.lambda + 1
        )));
    }
    let mut matches = 0_usize;
    let mut ones = 0_usize;
    let mut swaps = Vec::with_capacity(t);
    let mut buffer: Vec<u8> = Vec::with_capacity(key.lambda);
    for p in 0..(t * (key.lambda + 1)) {
        let pair = stream_pair(key.seed, p);
        let indicator = (pair.0 < pair.1) as u8;
        if is_embedded(p, key.lambda) {
            let predicted = parity(key, &buffer)?;
            let observed = y[p] as u8;
            if predicted == observed {
                matches += 1;
            }
            ones += observed as usize;
            swaps.push(indicator != observed);
        } else {
            buffer.push(indicator);
            if buffer.len() > key.lambda {
                buffer.remove(0);
            }
        }
    }
    let match_rate = matches as f64 / t as f64;
    let frac_ones = ones as f64 / t as f64;
    Ok(LpnReport {
        embedded_positions: t,
        match_rate,
        theta,
        verdict: match_rate >= 0.5 + theta,
        swaps,
        embedded_token_entropy: entropy_bits(&[frac_ones, 1.0 - frac_ones]),
    })
}

/// The per-token entropy (bits) a binary model must exceed for the
/// embedding to stay hidden while remaining detectable:
/// `2 + log2(1-q) - ((3-4q)/(4(1-q))) * log2(3-4q)`.
pub fn entropy_threshold(q: f64) -> Result<f64> {
    if !(0.0 < q && q < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "noise level must satisfy 0 < q < 1/2, got {q}"
        )));
    }
    Ok(2.0 + (1.0 - q).log2() - ((3.0 - 4.0 * q) / (4.0 * (1.0 - q))) * (3.0 - 4.0 * q).log2())
}
