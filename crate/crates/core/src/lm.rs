//! Toy autoregressive models: uniform, fixed-categorical, and order-k
//! Markov with add-alpha smoothing. These stand in for a real language
//! model wherever the rest of the crate needs next-token distributions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// A sequence of token ids in `[0, vocab_size)`.
pub type TokenSeq = Vec<u32>;

/// Default add-alpha smoothing for trained Markov models.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// An immutable model specification. Every variant defines a conditional
/// distribution over the next token given a prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Uniform {
        vocab_size: usize,
    },
    FixedCategorical {
        probs: Vec<f64>,
    },
    Markov {
        vocab_size: usize,
        order: usize,
        alpha: f64,
        /// Transition counts keyed by context (the preceding
        /// `min(order, position)` tokens), serialized as an entry list.
        #[serde(
            serialize_with = "serialize_counts",
            deserialize_with = "deserialize_counts"
        )]
        counts: BTreeMap<Vec<u32>, Vec<u64>>,
    },
}

fn serialize_counts<S: serde::Serializer>(
    counts: &BTreeMap<Vec<u32>, Vec<u64>>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    let entries: Vec<(&Vec<u32>, &Vec<u64>)> = counts.iter().collect();
    entries.serialize(ser)
}

fn deserialize_counts<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<BTreeMap<Vec<u32>, Vec<u64>>, D::Error> {
    let entries: Vec<(Vec<u32>, Vec<u64>)> = Vec::deserialize(de)?;
    Ok(entries.into_iter().collect())
}

impl ModelSpec {
    pub fn vocab_size(&self) -> usize {
        match self {
            ModelSpec::Uniform { vocab_size } => *vocab_size,
            ModelSpec::FixedCategorical { probs } => probs.len(),
            ModelSpec::Markov { vocab_size, .. } => *vocab_size,
        }
    }

    /// Check structural invariants: positive vocabulary, probabilities
    /// forming a distribution, count rows matching the vocabulary.
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size() == 0 {
            return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
        }
        match self {
            ModelSpec::Uniform { .. } => Ok(()),
            ModelSpec::FixedCategorical { probs } => {
                if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(Error::InvalidStructure(
                        "probabilities must be finite and non-negative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidStructure(format!(
                        "probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            ModelSpec::Markov { vocab_size, alpha, counts, .. } => {
                if !alpha.is_finite() || *alpha < 0.0 {
                    return Err(Error::InvalidParameter("alpha must be >= 0".into()));
                }
                for (ctx, row) in counts {
                    if row.len() != *vocab_size {
                        return Err(Error::InvalidStructure(format!(
                            "count row for context {ctx:?} has length {}, expected {vocab_size}",
                            row.len()
                        )));
                    }
                    if ctx.iter().any(|&t| t as usize >= *vocab_size) {
                        return Err(Error::TokenOutOfRange {
                            token: *ctx.iter().max().unwrap(),
                            vocab_size: *vocab_size,
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Train an order-`order` Markov model from an integer token stream.
/// Contexts shorter than `order` (at the start of the stream) are kept as
/// their own keys, so generation from an empty prompt is well defined.
pub fn train_markov(
    stream: &[u32],
    vocab_size: usize,
    order: usize,
    alpha: f64,
) -> Result<ModelSpec> {
    if vocab_size == 0 {
        return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
    }
    if let Some(&bad) = stream.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::TokenOutOfRange { token: bad, vocab_size });
    }
    let mut counts: BTreeMap<Vec<u32>, Vec<u64>> = BTreeMap::new();
    for (i, &tok) in stream.iter().enumerate() {
        let ctx = stream[i.saturating_sub(order)..i].to_vec();
        counts.entry(ctx).or_insert_with(|| vec![0; vocab_size])[tok as usize] += 1;
    }
    let model = ModelSpec::Markov { vocab_size, order, alpha, counts };
    model.validate()?;
    Ok(model)
}

/// Train a byte-level Markov model (vocabulary = 256) from text.
pub fn train_markov_bytes(text: &[u8], order: usize, alpha: f64) -> Result<ModelSpec> {
    let stream: Vec<u32> = text.iter().map(|&b| b as u32).collect();
    train_markov(&stream, 256, order, alpha)
}

/// The conditional distribution over the next token given `prefix`.
pub fn next_dist(model: &ModelSpec, prefix: &[u32]) -> Vec<f64> {
    let vocab = model.vocab_size();
    match model {
        ModelSpec::Uniform { .. } => vec![1.0 / vocab as f64; vocab],
        ModelSpec::FixedCategorical { probs } => probs.clone(),
        ModelSpec::Markov { order, alpha, counts, .. } => {
            let ctx = &prefix[prefix.len().saturating_sub(*order)..];
            match counts.get(ctx) {
                Some(row) => {
                    let total: u64 = row.iter().sum();
                    let denom = total as f64 + alpha * vocab as f64;
                    if denom == 0.0 {
                        // alpha = 0 and an unseen context: fall back to
                        // uniform so the output is still a distribution.
                        vec![1.0 / vocab as f64; vocab]
                    } else {
                        row.iter().map(|&n| (n as f64 + alpha) / denom).collect()
                    }
                }
                None => vec![1.0 / vocab as f64; vocab],
            }
        }
    }
}

/// Draw one token from a probability vector by inverse CDF.
pub fn sample_token<R: Rng>(dist: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (j, &p) in dist.iter().enumerate() {
        cum += p;
        if u < cum {
            return j as u32;
        }
    }
    dist.len() as u32 - 1
}

/// Sample `m` tokens autoregressively after `prompt` (the prompt is not
/// included in the output).
pub fn generate_plain(model: &ModelSpec, prompt: &[u32], m: usize, seed: u64) -> TokenSeq {
    let mut rng = rng_from_seed(seed);
    let mut seq: Vec<u32> = prompt.to_vec();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let dist = next_dist(model, &seq);
        let tok = sample_token(&dist, &mut rng);
        seq.push(tok);
        out.push(tok);
    }
    out
}

/// Shannon entropy of a distribution, in bits.
pub fn entropy_bits(dist: &[f64]) -> f64 {
    dist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Monte-Carlo estimate of the model's per-token entropy: repeatedly
/// generate a length-`m` sequence, pick a uniformly random position, and
/// average the conditional next-token entropy there.
pub fn entropy_rate(model: &ModelSpec, samples: usize, m: usize, seed: u64) -> f64 {
    assert!(samples >= 1 && m >= 1, "need samples >= 1 and m >= 1");
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for s in 0..samples {
        let seq = generate_plain(model, &[], m, seed.wrapping_add(1).wrapping_mul(31).wrapping_add(s as u64));
        let i = rng.gen_range(0..m);
        total += entropy_bits(&next_dist(model, &seq[..i]));
    }
    total / samples as f64
}
