//! The watermark key: a cyclic d-regular automaton over `lambda` states.
//!
//! State `i` transitions to `{i+1, …, i+d} mod lambda`, each with
//! probability `1/d`. Every state carries one noise value per vocabulary
//! entry, fixed to `b` bits by the key; sampling a noise vector fills the
//! remaining `c - b` bits uniformly. Keys are immutable after construction
//! and all randomness is passed in by the caller.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Maximum bit width representable exactly in an `f64` mantissa.
const MAX_BITS: u32 = 53;

/// Number of fixed noise bits per value: either an explicit count or "float
/// mode", which stands in for a machine-precision float draw (equivalent to
/// a 53-bit grid, with no free bits left to sample).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bitwidth {
    Bits(u32),
    Float,
}

impl Bitwidth {
    /// The `(b, c)` pair actually used for grid arithmetic, given the key's
    /// nominal precision.
    fn resolve(self, precision: u32) -> (u32, u32) {
        match self {
            Bitwidth::Bits(b) => (b, precision),
            Bitwidth::Float => (MAX_BITS, MAX_BITS),
        }
    }
}

/// One sampled noise vector: a unit-interval value per vocabulary entry,
/// each on the `2^precision` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector {
    pub mu: Vec<f64>,
    pub precision: u32,
}

/// The watermark key automaton.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyAutomaton {
    pub lambda: usize,
    pub degree: usize,
    pub vocab_size: usize,
    pub bitwidth: Bitwidth,
    pub precision: u32,
    pub seed: u64,
    /// Row-major `lambda x vocab_size` fixed noise values.
    noise: Vec<f64>,
}

impl KeyAutomaton {
    /// Construct from explicit parts, validating every invariant.
    ///
    /// Unlike [`gen_key`], this accepts degenerate topologies (`lambda = 1`,
    /// `degree = lambda`) that are useful in hand-built detector tests.
    pub fn from_parts(
        lambda: usize,
        degree: usize,
        vocab_size: usize,
        bitwidth: Bitwidth,
        precision: u32,
        seed: u64,
        noise: Vec<f64>,
    ) -> Result<Self> {
        if lambda == 0 {
            return Err(Error::InvalidParameter("lambda must be >= 1".into()));
        }
        if degree == 0 || degree > lambda {
            return Err(Error::InvalidParameter(format!(
                "degree must be in 1..=lambda, got {degree} with lambda {lambda}"
            )));
        }
        if vocab_size == 0 {
            return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
        }
        let (b, c) = bitwidth.resolve(precision);
        if b == 0 || b > c || c > MAX_BITS {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= bitwidth <= precision <= {MAX_BITS}, got b={b} c={c}"
            )));
        }
        if noise.len() != lambda * vocab_size {
            return Err(Error::InvalidStructure(format!(
                "noise matrix has {} entries, expected {}x{}",
                noise.len(),
                lambda,
                vocab_size
            )));
        }
        let scale = (1_u64 << b) as f64;
        for &v in &noise {
            let max = 1.0 - 1.0 / scale;
            if !(0.0..=max).contains(&v) || (v * scale).fract() != 0.0 {
                return Err(Error::InvalidStructure(format!(
                    "noise value {v} is not on the {b}-bit grid [0, 1 - 2^-{b}]"
                )));
            }
        }
        Ok(KeyAutomaton { lambda, degree, vocab_size, bitwidth, precision, seed, noise })
    }

    /// The `(b, c)` pair in effect (float mode resolves to 53/53).
    pub fn bits(&self) -> (u32, u32) {
        self.bitwidth.resolve(self.precision)
    }

    /// Fixed noise value for `(state, token)`.
    pub fn noise(&self, state: usize, token: u32) -> f64 {
        self.noise[state * self.vocab_size + token as usize]
    }

    /// One state's fixed noise row.
    pub fn noise_row(&self, state: usize) -> &[f64] {
        &self.noise[state * self.vocab_size..(state + 1) * self.vocab_size]
    }

    /// The d successors of `state`, in order.
    pub fn successors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=self.degree).map(move |k| (state + k) % self.lambda)
    }

    /// The fixed bits of one state's noise row, most significant first —
    /// the layer inputs for the explicit bit-emission automaton.
    pub fn key_bits(&self, state: usize) -> Vec<Vec<u8>> {
        let (b, _) = self.bits();
        let scale = (1_u64 << b) as f64;
        self.noise_row(state)
            .iter()
            .map(|&v| {
                let t = (v * scale) as u64;
                (0..b).map(|j| ((t >> (b - 1 - j)) & 1) as u8).collect()
            })
            .collect()
    }

    /// Every noise vector `state_noise` can return for `state`, enumerated
    /// over all free-bit assignments. Errors when the support is larger
    /// than `max_size`.
    pub fn noise_support(&self, state: usize, max_size: usize) -> Result<Vec<Vec<f64>>> {
        let (b, c) = self.bits();
        let free = (c - b) as u64 * self.vocab_size as u64;
        if free >= 40 || (1_u64 << free) > max_size as u64 {
            return Err(Error::InstanceTooLarge(format!(
                "noise support has 2^{free} vectors"
            )));
        }
        let per_value = 1_u64 << (c - b);
        let row = self.noise_row(state);
        let mut out = Vec::new();
        let mut combo = vec![0_u64; row.len()];
        loop {
            out.push(
                row.iter()
                    .zip(&combo)
                    .map(|(&v, &u)| v + u as f64 / (1_u64 << c) as f64)
                    .collect(),
            );
            let mut pos = 0;
            loop {
                if pos == combo.len() {
                    return Ok(out);
                }
                combo[pos] += 1;
                if combo[pos] < per_value {
                    break;
                }
                combo[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// Generate a fresh key: `lambda x vocab_size` noise values drawn i.i.d.
/// uniform on the `2^b` grid `{t/2^b : 0 <= t < 2^b}`, in fixed row-major
/// order so a seed always yields the same key.
pub fn gen_key(
    lambda: usize,
    degree: usize,
    vocab_size: usize,
    bitwidth: Bitwidth,
    precision: u32,
    seed: u64,
) -> Result<KeyAutomaton> {
    if lambda < 2 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 2, got {lambda}"
        )));
    }
    if degree >= lambda {
        return Err(Error::InvalidParameter(format!(
            "degree must be < lambda, got {degree} with lambda {lambda}"
        )));
    }
    let (b, c) = bitwidth.resolve(precision);
    if degree == 0 || vocab_size == 0 || b == 0 || b > c || c > MAX_BITS {
        return Err(Error::InvalidParameter(format!(
            "invalid parameters: degree={degree} vocab_size={vocab_size} b={b} c={c}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let grid = 1_u64 << b;
    let noise = (0..lambda * vocab_size)
        .map(|_| match bitwidth {
            Bitwidth::Float => rng.gen::<f64>(),
            Bitwidth::Bits(_) => rng.gen_range(0..grid) as f64 / grid as f64,
        })
        .collect();
    KeyAutomaton::from_parts(lambda, degree, vocab_size, bitwidth, precision, seed, noise)
}

/// Uniform initial state.
pub fn sample_initial<R: Rng>(key: &KeyAutomaton, rng: &mut R) -> usize {
    rng.gen_range(0..key.lambda)
}

/// One uniform step along the successor relation.
pub fn transition<R: Rng>(key: &KeyAutomaton, state: usize, rng: &mut R) -> usize {
    (state + rng.gen_range(1..=key.degree)) % key.lambda
}

/// Sample a noise vector at `state`: the key's fixed `b` bits plus fresh
/// uniform low-order bits up to the key's precision. Deterministic when
/// `b = c` (including float mode).
pub fn state_noise<R: Rng>(key: &KeyAutomaton, state: usize, rng: &mut R) -> NoiseVector {
    let (b, c) = key.bits();
    let free = 1_u64 << (c - b);
    let denom = (1_u64 << c) as f64;
    let mu = key
        .noise_row(state)
        .iter()
        .map(|&v| {
            if free == 1 {
                v
            } else {
                v + rng.gen_range(0..free) as f64 / denom
            }
        })
        .collect();
    NoiseVector { mu, precision: c }
}

// --- serialization -----------------------------------------------------

/// On-disk form. `bitwidth` is either a bit count or the string "float";
/// `noise` is normally omitted (re-derived from the seed) but an expanded
/// file carrying the explicit matrix is also accepted.
#[derive(Serialize, Deserialize)]
struct KeyFile {
    lambda: usize,
    degree: usize,
    vocab_size: usize,
    bitwidth: Bitwidth,
    precision: u32,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BitwidthRepr {
    Num(u32),
    Tag(String),
}

impl Serialize for Bitwidth {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bitwidth::Bits(b) => BitwidthRepr::Num(*b),
            Bitwidth::Float => BitwidthRepr::Tag("float".into()),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Bitwidth {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match BitwidthRepr::deserialize(de)? {
            BitwidthRepr::Num(b) => Ok(Bitwidth::Bits(b)),
            BitwidthRepr::Tag(s) if s == "float" => Ok(Bitwidth::Float),
            BitwidthRepr::Tag(s) => Err(serde::de::Error::custom(format!(
                "bitwidth must be a number or \"float\", got {s:?}"
            ))),
        }
    }
}

impl TryFrom<KeyFile> for KeyAutomaton {
    type Error = Error;

    fn try_from(f: KeyFile) -> Result<Self> {
        let bitwidth = f.bitwidth;
        match f.noise {
            None => gen_key(f.lambda, f.degree, f.vocab_size, bitwidth, f.precision, f.seed),
            Some(rows) => {
                if rows.len() != f.lambda || rows.iter().any(|r| r.len() != f.vocab_size) {
                    return Err(Error::InvalidStructure(format!(
                        "noise matrix must be {}x{}",
                        f.lambda, f.vocab_size
                    )));
                }
                KeyAutomaton::from_parts(
                    f.lambda,
                    f.degree,
                    f.vocab_size,
                    bitwidth,
                    f.precision,
                    f.seed,
                    rows.into_iter().flatten().collect(),
                )
            }
        }
    }
}

impl From<KeyAutomaton> for KeyFile {
    fn from(k: KeyAutomaton) -> Self {
        KeyFile {
            lambda: k.lambda,
            degree: k.degree,
            vocab_size: k.vocab_size,
            bitwidth: k.bitwidth,
            precision: k.precision,
            seed: k.seed,
            noise: None,
        }
    }
}

impl Serialize for KeyAutomaton {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        KeyFile::from(self.clone()).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for KeyAutomaton {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = KeyFile::deserialize(de)?;
        KeyAutomaton::try_from(file).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{build_subordinate_pa, support_automaton};
    use std::collections::BTreeSet;

    fn small_key(seed: u64) -> KeyAutomaton {
        gen_key(4, 2, 3, Bitwidth::Bits(2), 3, seed).unwrap()
    }

    #[test]
    fn same_seed_same_key_and_serialization() {
        let a = small_key(11);
        let b = small_key(11);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, small_key(12));
    }

    #[test]
    fn one_bit_noise_lives_on_the_half_grid() {
        let key = gen_key(2, 1, 2, Bitwidth::Bits(1), 1, 3).unwrap();
        for state in 0..2 {
            for &v in key.noise_row(state) {
                assert!(v == 0.0 || v == 0.5, "got {v}");
            }
        }
    }

    #[test]
    fn noise_entries_stay_below_one() {
        for seed in 0..20 {
            let key = gen_key(8, 3, 4, Bitwidth::Bits(4), 6, seed).unwrap();
            let max = 1.0 - 2.0_f64.powi(-4);
            assert!(key.noise.iter().all(|&v| (0.0..=max).contains(&v)));
        }
        let fkey = gen_key(8, 1, 4, Bitwidth::Float, 53, 1).unwrap();
        assert!(fkey.noise.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn successor_sets_are_exactly_the_next_d_states() {
        for lambda in 2..=64_usize {
            for degree in 1..=4.min(lambda - 1) {
                let key = gen_key(lambda, degree, 1, Bitwidth::Bits(1), 1, 0).unwrap();
                for state in 0..lambda {
                    let got: Vec<usize> = key.successors(state).collect();
                    let want: Vec<usize> =
                        (1..=degree).map(|k| (state + k) % lambda).collect();
                    assert_eq!(got, want, "lambda={lambda} degree={degree} state={state}");
                }
            }
        }
    }

    #[test]
    fn transition_wraps_and_is_uniform() {
        let key = gen_key(4, 1, 1, Bitwidth::Bits(1), 1, 0).unwrap();
        let mut rng = rng_from_seed(0);
        assert_eq!(transition(&key, 3, &mut rng), 0);

        let key2 = gen_key(4, 2, 1, Bitwidth::Bits(1), 1, 0).unwrap();
        let mut counts = [0_u32; 4];
        let mut rng = rng_from_seed(5);
        for _ in 0..100_000 {
            counts[transition(&key2, 0, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert_eq!(counts[3], 0);
        for to in [1, 2] {
            let freq = counts[to] as f64 / 100_000.0;
            assert!((freq - 0.5).abs() < 0.01, "state {to} frequency {freq}");
        }
    }

    #[test]
    fn full_degree_reaches_every_other_state() {
        let key = gen_key(5, 4, 1, Bitwidth::Bits(1), 1, 0).unwrap();
        let got: BTreeSet<usize> = key.successors(2).collect();
        assert_eq!(got, BTreeSet::from([3, 4, 0, 1]));
    }

    #[test]
    fn sample_initial_is_uniform() {
        let key = gen_key(4, 1, 1, Bitwidth::Bits(1), 1, 0).unwrap();
        let mut counts = [0_u32; 4];
        let mut rng = rng_from_seed(9);
        for _ in 0..100_000 {
            counts[sample_initial(&key, &mut rng)] += 1;
        }
        for (state, &n) in counts.iter().enumerate() {
            let freq = n as f64 / 100_000.0;
            assert!((0.24..=0.26).contains(&freq), "state {state} frequency {freq}");
        }
    }

    #[test]
    fn degenerate_single_state_key_loops() {
        let key = KeyAutomaton::from_parts(
            1, 1, 2, Bitwidth::Bits(1), 1, 0, vec![0.5, 0.0],
        )
        .unwrap();
        let mut rng = rng_from_seed(0);
        assert_eq!(sample_initial(&key, &mut rng), 0);
        assert_eq!(transition(&key, 0, &mut rng), 0);
    }

    #[test]
    fn state_noise_is_fixed_bits_plus_free_tail() {
        // b = c: deterministic, exactly the stored row.
        let key = small_key(7);
        let detkey =
            gen_key(4, 2, 3, Bitwidth::Bits(3), 3, 7).unwrap();
        let mut rng = rng_from_seed(1);
        let nv = state_noise(&detkey, 2, &mut rng);
        assert_eq!(nv.mu, detkey.noise_row(2));
        assert_eq!(nv.precision, 3);

        // b=1, c=2, v=0.5: mu in {0.5, 0.75}, both occurring.
        let key2 = KeyAutomaton::from_parts(
            2, 1, 1, Bitwidth::Bits(1), 2, 0, vec![0.5, 0.0],
        )
        .unwrap();
        let mut seen = BTreeSet::new();
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let nv = state_noise(&key2, 0, &mut rng);
            assert!(nv.mu[0] == 0.5 || nv.mu[0] == 0.75);
            seen.insert(nv.mu[0].to_bits());
        }
        assert_eq!(seen.len(), 2);

        // Everything stays below 1 even at the top of the grid.
        let _ = key;
        let top = KeyAutomaton::from_parts(
            2, 1, 1, Bitwidth::Bits(1), 3, 0, vec![0.5, 0.5],
        )
        .unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            assert!(state_noise(&top, 1, &mut rng).mu[0] < 1.0);
        }
    }

    #[test]
    fn float_mode_is_deterministic_per_state() {
        let key = gen_key(4, 1, 3, Bitwidth::Float, 53, 21).unwrap();
        let mut r1 = rng_from_seed(100);
        let mut r2 = rng_from_seed(200);
        assert_eq!(state_noise(&key, 1, &mut r1), state_noise(&key, 1, &mut r2));
        assert_eq!(key.bits(), (53, 53));
    }

    /// Cross-module check: the set of noise vectors `state_noise` can emit
    /// equals the support language of the explicit bit-emission automaton
    /// built from the same key bits (bits compared most significant first).
    #[test]
    fn noise_support_matches_subordinate_automaton_language() {
        for (vocab, b, c, seed) in
            [(1, 1, 2, 0_u64), (2, 1, 2, 1), (2, 2, 3, 2), (2, 3, 3, 3), (1, 2, 3, 4)]
        {
            let key = gen_key(3, 1, vocab, Bitwidth::Bits(b), c, seed).unwrap();
            for state in 0..key.lambda {
                let pa = build_subordinate_pa(vocab, b, c, &key.key_bits(state)).unwrap();
                let lang = support_automaton(&pa)
                    .enumerate_language(vocab * c as usize, 100_000)
                    .unwrap();
                // Decode each accepted bit string (c bits per vocabulary
                // entry, most significant first) into a noise vector.
                let decoded: BTreeSet<Vec<u64>> = lang
                    .iter()
                    .map(|word| {
                        word.chunks(c as usize)
                            .map(|bits| {
                                let mu: f64 = bits
                                    .iter()
                                    .enumerate()
                                    .map(|(j, &bit)| bit as f64 / (1_u64 << (j + 1)) as f64)
                                    .sum();
                                mu.to_bits()
                            })
                            .collect()
                    })
                    .collect();
                let support: BTreeSet<Vec<u64>> = key
                    .noise_support(state, 100_000)
                    .unwrap()
                    .into_iter()
                    .map(|v| v.into_iter().map(f64::to_bits).collect())
                    .collect();
                assert_eq!(
                    decoded, support,
                    "vocab={vocab} b={b} c={c} seed={seed} state={state}"
                );
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(gen_key(1, 1, 1, Bitwidth::Bits(1), 1, 0).is_err());
        assert!(gen_key(4, 4, 1, Bitwidth::Bits(1), 1, 0).is_err());
        assert!(gen_key(4, 0, 1, Bitwidth::Bits(1), 1, 0).is_err());
        assert!(gen_key(4, 1, 0, Bitwidth::Bits(1), 1, 0).is_err());
        assert!(gen_key(4, 1, 1, Bitwidth::Bits(0), 1, 0).is_err());
        assert!(gen_key(4, 1, 1, Bitwidth::Bits(3), 2, 0).is_err());
        assert!(gen_key(4, 1, 1, Bitwidth::Bits(60), 60, 0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let key = gen_key(16, 3, 5, Bitwidth::Bits(4), 7, 999).unwrap();
        let text = serde_json::to_string(&key).unwrap();
        assert!(!text.contains("noise"), "compact form should omit the matrix");
        let back: KeyAutomaton = serde_json::from_str(&text).unwrap();
        assert_eq!(key, back);

        let fkey = gen_key(8, 1, 2, Bitwidth::Float, 53, 5).unwrap();
        let text = serde_json::to_string(&fkey).unwrap();
        assert!(text.contains("\"float\""));
        let back: KeyAutomaton = serde_json::from_str(&text).unwrap();
        assert_eq!(fkey, back);
    }

    #[test]
    fn expanded_key_file_with_noise_matrix_is_readable() {
        let text = r#"{
            "lambda": 2, "degree": 1, "vocab_size": 2,
            "bitwidth": 1, "precision": 2, "seed": 0,
            "noise": [[0.5, 0.0], [0.0, 0.5]]
        }"#;
        let key: KeyAutomaton = serde_json::from_str(text).unwrap();
        assert_eq!(key.noise_row(0), &[0.5, 0.0]);
        assert_eq!(key.noise_row(1), &[0.0, 0.5]);

        let off_grid = r#"{
            "lambda": 1, "degree": 1, "vocab_size": 1,
            "bitwidth": 1, "precision": 1, "seed": 0,
            "noise": [[0.3]]
        }"#;
        assert!(serde_json::from_str::<KeyAutomaton>(off_grid).is_err());
    }

    #[test]
    fn key_bits_are_most_significant_first() {
        let key = KeyAutomaton::from_parts(
            1, 1, 2, Bitwidth::Bits(2), 2, 0, vec![0.75, 0.25],
        )
        .unwrap();
        // 0.75 = 0b11 / 4, 0.25 = 0b01 / 4.
        assert_eq!(key.key_bits(0), vec![vec![1, 1], vec![0, 1]]);
    }
}
