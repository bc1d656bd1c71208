//! Edit-based corruption for robustness experiments: substitute, delete,
//! or insert a fraction of tokens, deterministically per seed.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TokenSeq;
use crate::seed::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Substitute,
    Delete,
    Insert,
}

/// One attack: corrupt `floor(epsilon * |y|)` tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, epsilon: f64, seed: u64) -> Result<Self> {
        let spec = AttackSpec { kind, epsilon, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "corruption fraction must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Apply an attack to `y`.
///
/// Substitutions and deletions hit `floor(epsilon * |y|)` distinct
/// positions; insertions add that many uniform tokens at uniform
/// positions one after another (so the sequence grows as it goes).
/// Replacement tokens are uniform over the full vocabulary and may equal
/// the original. No padding or truncation is applied.
pub fn corrupt(y: &[u32], spec: &AttackSpec, vocab_size: usize) -> Result<TokenSeq> {
    spec.validate()?;
    if vocab_size == 0 {
        return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
    }
    let count = (spec.epsilon * y.len() as f64).floor() as usize;
    let mut rng = rng_from_seed(spec.seed);
    match spec.kind {
        AttackKind::Substitute => {
            let mut out = y.to_vec();
            for pos in sample(&mut rng, y.len(), count) {
                out[pos] = rng.gen_range(0..vocab_size) as u32;
            }
            Ok(out)
        }
        AttackKind::Delete => {
            let mut doomed = vec![false; y.len()];
            for pos in sample(&mut rng, y.len(), count) {
                doomed[pos] = true;
            }
            Ok(y.iter()
                .zip(&doomed)
                .filter(|(_, &gone)| !gone)
                .map(|(&t, _)| t)
                .collect())
        }
        AttackKind::Insert => {
            let mut out = y.to_vec();
            for _ in 0..count {
                let pos = rng.gen_range(0..=out.len());
                let tok = rng.gen_range(0..vocab_size) as u32;
                out.insert(pos, tok);
            }
            Ok(out)
        }
    }
}
