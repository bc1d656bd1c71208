//! Watermarked generation: binary expansion of unit-interval values, the
//! exponential-minimum decoder, and the autoregressive loop that couples a
//! model with a key automaton.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{next_dist, ModelSpec, TokenSeq};
use crate::wkey::{sample_initial, state_noise, transition, KeyAutomaton, NoiseVector};

/// The `c` least significant bits of `floor(z * 2^c)`, least significant
/// bit first, so `bits[i]` carries weight `2^i / 2^c`.
pub fn binary_expand(z: f64, c: u32) -> Result<Vec<u8>> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::InvalidParameter(format!(
            "binary expansion needs 0 <= z < 1, got {z}"
        )));
    }
    if c > 63 {
        return Err(Error::InvalidParameter(format!("precision {c} exceeds 63 bits")));
    }
    let scale = 1_u64 << c;
    // Cap against float rounding pushing z * 2^c up to 2^c.
    let t = ((z * scale as f64) as u64).min(scale - 1);
    Ok((0..c).map(|i| ((t >> i) & 1) as u8).collect())
}

/// Inverse of [`binary_expand`]: `sum_i bits[i] * 2^i / 2^len`.
pub fn bits_to_unit(bits: &[u8]) -> f64 {
    let t: u64 = bits
        .iter()
        .enumerate()
        .map(|(i, &b)| (b as u64) << i)
        .sum();
    t as f64 / (1_u64 << bits.len()) as f64
}

/// Exponential-minimum decoding: the token minimizing `pi[j] / ln(mu[j])`.
///
/// All ratios are non-positive (`mu < 1` makes the log negative), so the
/// minimum is the supported token whose ratio is most negative. Tokens
/// with `pi[j] = 0` are never candidates; a supported token with
/// `mu[j] = 0` has ratio `-0` (the `ln(0) = -inf` limit) and loses to any
/// strictly negative ratio. Exact ties go to the lowest token id.
pub fn gamma_exp_min(xi: &NoiseVector, pi: &[f64]) -> Result<u32> {
    if xi.mu.len() != pi.len() {
        return Err(Error::InvalidParameter(format!(
            "noise vector has {} entries but distribution has {}",
            xi.mu.len(),
            pi.len()
        )));
    }
    if pi.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::InvalidParameter(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    if xi.mu.iter().any(|&m| !(0.0..1.0).contains(&m)) {
        return Err(Error::InvalidParameter("noise values must lie in [0, 1)".into()));
    }
    let mut best: Option<(u32, f64)> = None;
    for (j, (&p, &m)) in pi.iter().zip(&xi.mu).enumerate() {
        if p == 0.0 {
            continue;
        }
        let ratio = p / m.ln();
        match best {
            Some((_, r)) if ratio >= r => {}
            _ => best = Some((j as u32, ratio)),
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::InvalidParameter("all probabilities are zero".into()))
}

/// One generation run: the sampled tokens, the key state each token was
/// decoded at, and (when they carry free bits beyond the key) the noise
/// vectors used. When every noise bit is fixed by the key the vectors are
/// omitted and can be reconstructed from the states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub tokens: TokenSeq,
    pub states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noises: Option<Vec<NoiseVector>>,
}

impl GenerationTrace {
    /// Check lengths and that consecutive states follow the key's
    /// successor relation.
    pub fn validate(&self, key: &KeyAutomaton) -> Result<()> {
        if self.states.len() != self.tokens.len() {
            return Err(Error::InvalidStructure(format!(
                "{} tokens but {} states",
                self.tokens.len(),
                self.states.len()
            )));
        }
        if let Some(noises) = &self.noises {
            if noises.len() != self.tokens.len() {
                return Err(Error::InvalidStructure(format!(
                    "{} tokens but {} noise vectors",
                    self.tokens.len(),
                    noises.len()
                )));
            }
        }
        for w in self.states.windows(2) {
            if !key.successors(w[0]).any(|s| s == w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "state {} does not succeed state {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(())
    }

    /// The noise vectors, either stored or reconstructed from the key
    /// (possible only when the key fixes every bit).
    pub fn resolve_noises(&self, key: &KeyAutomaton) -> Result<Vec<NoiseVector>> {
        if let Some(noises) = &self.noises {
            return Ok(noises.clone());
        }
        let (b, c) = key.bits();
        if b != c {
            return Err(Error::InvalidStructure(
                "trace stores no noise vectors and the key has free bits".into(),
            ));
        }
        Ok(self
            .states
            .iter()
            .map(|&q| NoiseVector { mu: key.noise_row(q).to_vec(), precision: c })
            .collect())
    }
}

/// Sample `m` watermarked tokens after `prompt`.
///
/// Each step draws the state's noise vector, decodes the next token from
/// the model's conditional distribution, then advances the key state.
pub fn generate_watermarked<R: Rng>(
    model: &ModelSpec,
    key: &KeyAutomaton,
    prompt: &[u32],
    m: usize,
    rng: &mut R,
) -> Result<GenerationTrace> {
    if model.vocab_size() != key.vocab_size {
        return Err(Error::InvalidParameter(format!(
            "model vocabulary {} does not match key vocabulary {}",
            model.vocab_size(),
            key.vocab_size
        )));
    }
    let (b, c) = key.bits();
    let mut seq: Vec<u32> = prompt.to_vec();
    let mut tokens = Vec::with_capacity(m);
    let mut states = Vec::with_capacity(m);
    let mut noises = Vec::with_capacity(m);
    let mut state = sample_initial(key, rng);
    for _ in 0..m {
        let xi = state_noise(key, state, rng);
        let pi = next_dist(model, &seq);
        let tok = gamma_exp_min(&xi, &pi)?;
        tokens.push(tok);
        states.push(state);
        noises.push(xi);
        seq.push(tok);
        state = transition(key, state, rng);
    }
    Ok(GenerationTrace {
        tokens,
        states,
        noises: if b == c { None } else { Some(noises) },
    })
}

/// Decode a full sequence deterministically from an explicit state path
/// and explicit free-bit choices: `free[i][j]` is the low-bit numerator
/// (in `[0, 2^(c-b))`) for token `j` at step `i`. Used to enumerate every
/// sequence a key can emit.
pub fn decode_with(
    model: &ModelSpec,
    key: &KeyAutomaton,
    prompt: &[u32],
    states: &[usize],
    free: &[Vec<u64>],
) -> Result<TokenSeq> {
    if model.vocab_size() != key.vocab_size {
        return Err(Error::InvalidParameter("model/key vocabulary mismatch".into()));
    }
    if free.len() != states.len() {
        return Err(Error::InvalidParameter(format!(
            "{} states but {} free-bit rows",
            states.len(),
            free.len()
        )));
    }
    let (b, c) = key.bits();
    let per_value = 1_u64 << (c - b);
    let denom = (1_u64 << c) as f64;
    let mut seq: Vec<u32> = prompt.to_vec();
    let mut out = Vec::with_capacity(states.len());
    for (&q, row) in states.iter().zip(free) {
        if row.len() != key.vocab_size || row.iter().any(|&u| u >= per_value) {
            return Err(Error::InvalidParameter(format!(
                "free-bit row {row:?} invalid for {} free bits per value",
                c - b
            )));
        }
        let mu: Vec<f64> = key
            .noise_row(q)
            .iter()
            .zip(row)
            .map(|(&v, &u)| v + u as f64 / denom)
            .collect();
        let xi = NoiseVector { mu, precision: c };
        let tok = gamma_exp_min(&xi, &next_dist(model, &seq))?;
        out.push(tok);
        seq.push(tok);
    }
    Ok(out)
}
