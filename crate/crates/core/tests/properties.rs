//! Randomized property tests: serialization round-trips, arithmetic
//! identities, and structural bounds that must hold on all inputs.

use proptest::prelude::*;

use pawmark::attacks::{corrupt, AttackKind, AttackSpec};
use pawmark::automata::suffix_automaton_cyclic;
use pawmark::decode::{binary_expand, bits_to_unit, gamma_exp_min, generate_watermarked};
use pawmark::lm::ModelSpec;
use pawmark::seed::rng_from_seed;
use pawmark::wkey::{gen_key, Bitwidth, KeyAutomaton, NoiseVector};

fn attack_kind() -> impl Strategy<Value = AttackKind> {
    prop_oneof![
        Just(AttackKind::Substitute),
        Just(AttackKind::Delete),
        Just(AttackKind::Insert),
    ]
}

proptest! {
    /// Expanding a unit-interval value to bits and back reproduces the
    /// value rounded down to the grid, and re-expansion is idempotent.
    #[test]
    fn binary_expansion_round_trips(z in 0.0..1.0f64, c in 1u32..=53) {
        let bits = binary_expand(z, c).unwrap();
        prop_assert_eq!(bits.len(), c as usize);
        let grid = bits_to_unit(&bits);
        let scale = (c as f64).exp2();
        prop_assert_eq!(grid, (z * scale).floor().min(scale - 1.0) / scale);
        prop_assert!(grid <= z);
        prop_assert!(z - grid < 1.0 / scale + f64::EPSILON);
        prop_assert_eq!(binary_expand(grid, c).unwrap(), bits);
    }

    /// Key files survive a JSON round-trip exactly, whether compact
    /// (seed only) or expanded (explicit noise matrix).
    #[test]
    fn key_json_round_trips(
        lambda in 2usize..12,
        degree in 1usize..3,
        vocab in 1usize..6,
        bits in 1u32..=4,
        extra in 0u32..=3,
        seed in any::<u64>(),
    ) {
        prop_assume!(degree < lambda);
        let key = gen_key(lambda, degree, vocab, Bitwidth::Bits(bits), bits + extra, seed).unwrap();
        let compact = serde_json::to_string(&key).unwrap();
        let back: KeyAutomaton = serde_json::from_str(&compact).unwrap();
        prop_assert_eq!(&back, &key);

        let mut expanded: serde_json::Value = serde_json::from_str(&compact).unwrap();
        let rows: Vec<Vec<f64>> = (0..lambda).map(|q| key.noise_row(q).to_vec()).collect();
        expanded["noise"] = serde_json::to_value(rows).unwrap();
        let back: KeyAutomaton = serde_json::from_value(expanded).unwrap();
        prop_assert_eq!(&back, &key);
    }

    /// Generation traces round-trip through JSON and always validate
    /// against the key that produced them.
    #[test]
    fn trace_json_round_trips_and_validates(
        lambda in 2usize..10,
        degree in 1usize..3,
        vocab in 1usize..6,
        m in 0usize..12,
        seed in any::<u64>(),
    ) {
        prop_assume!(degree < lambda);
        let key = gen_key(lambda, degree, vocab, Bitwidth::Bits(2), 4, seed).unwrap();
        let model = ModelSpec::Uniform { vocab_size: vocab };
        let mut rng = rng_from_seed(seed ^ 0xABCD);
        let trace = generate_watermarked(&model, &key, &[], m, &mut rng).unwrap();
        prop_assert!(trace.validate(&key).is_ok());
        let text = serde_json::to_string(&trace).unwrap();
        let back: pawmark::decode::GenerationTrace = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, trace);
    }

    /// The decoder is scale-invariant in the model distribution.
    #[test]
    fn decoder_ignores_distribution_scale(
        pi in prop::collection::vec(0.001..10.0f64, 1..8),
        mu in prop::collection::vec(0.0..1.0f64, 8),
        scale in 0.01..100.0f64,
    ) {
        let xi = NoiseVector { mu: mu[..pi.len()].to_vec(), precision: 53 };
        let scaled: Vec<f64> = pi.iter().map(|p| p * scale).collect();
        prop_assert_eq!(
            gamma_exp_min(&xi, &pi).unwrap(),
            gamma_exp_min(&xi, &scaled).unwrap()
        );
    }

    /// Corruption respects the edit budget exactly: the length change per
    /// kind, tokens stay in-vocabulary, and repeat runs are identical.
    #[test]
    fn corruption_respects_the_budget(
        y in prop::collection::vec(any::<u32>(), 0..200),
        vocab in 2usize..50,
        epsilon in 0.0..=1.0f64,
        kind in attack_kind(),
        seed in any::<u64>(),
    ) {
        let y: Vec<u32> = y.into_iter().map(|t| t % vocab as u32).collect();
        let spec = AttackSpec::new(kind, epsilon, seed).unwrap();
        let out = corrupt(&y, &spec, vocab).unwrap();
        let count = (epsilon * y.len() as f64).floor() as usize;
        match kind {
            AttackKind::Substitute => {
                prop_assert_eq!(out.len(), y.len());
                let changed = out.iter().zip(&y).filter(|(a, b)| a != b).count();
                prop_assert!(changed <= count);
            }
            AttackKind::Delete => prop_assert_eq!(out.len(), y.len() - count),
            AttackKind::Insert => prop_assert_eq!(out.len(), y.len() + count),
        }
        prop_assert!(out.iter().all(|&t| (t as usize) < vocab || y.contains(&t)));
        prop_assert_eq!(corrupt(&y, &spec, vocab).unwrap(), out);
    }

    /// The cyclic suffix automaton stays within its size bound and
    /// accepts every rotation of its string.
    #[test]
    fn cyclic_automaton_is_small_and_accepts_rotations(
        s in prop::collection::vec(0u32..5, 1..48),
    ) {
        let sam = suffix_automaton_cyclic(&s).unwrap();
        prop_assert!(sam.nodes.len() <= 4 * s.len());
        for r in 0..s.len() {
            let rotated: Vec<u32> = s[r..].iter().chain(&s[..r]).copied().collect();
            prop_assert!(sam.accepts(&rotated));
        }
    }
}
