use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability-sum checks on deserialized or constructed
/// automata.
pub const PROB_TOL: f64 = 1e-9;

/// One probabilistic transition `from --symbol/prob--> to`.
///
/// Serialized as the array `[from, symbol, to, prob]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, u32, usize, f64)", into = "(usize, u32, usize, f64)")]
pub struct Transition {
    pub from: usize,
    pub symbol: u32,
    pub to: usize,
    pub prob: f64,
}

impl From<(usize, u32, usize, f64)> for Transition {
    fn from((from, symbol, to, prob): (usize, u32, usize, f64)) -> Self {
        Transition { from, symbol, to, prob }
    }
}

impl From<Transition> for (usize, u32, usize, f64) {
    fn from(t: Transition) -> Self {
        (t.from, t.symbol, t.to, t.prob)
    }
}

/// A probabilistic nondeterministic finite automaton with an initial
/// distribution over states and per-state termination probabilities.
///
/// Two modes exist:
///
/// * `generative: true` — the automaton is a string sampler: at every state,
///   the termination probability plus the outgoing transition probabilities
///   must sum to 1.
/// * `generative: false` — purely recognizing: probabilities only need to be
///   in range, no per-state sum constraint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pnfa {
    pub states: usize,
    /// Symbols are the integers `0..alphabet`.
    pub alphabet: usize,
    pub transitions: Vec<Transition>,
    /// Initial probability per state; must sum to 1.
    pub initial: Vec<f64>,
    /// Termination (accept-and-stop) probability per state.
    #[serde(rename = "final")]
    pub final_probs: Vec<f64>,
    pub generative: bool,
}

impl Pnfa {
    /// Check all structural invariants. Call this after deserializing.
    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.states || self.final_probs.len() != self.states {
            return Err(Error::InvalidStructure(format!(
                "initial/final vectors must have length {} (got {}/{})",
                self.states,
                self.initial.len(),
                self.final_probs.len()
            )));
        }
        for (name, v) in [("initial", &self.initial), ("final", &self.final_probs)] {
            if let Some(p) = v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidStructure(format!(
                    "{name} probability {p} outside [0, 1]"
                )));
            }
        }
        let init_sum: f64 = self.initial.iter().sum();
        if (init_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidStructure(format!(
                "initial distribution sums to {init_sum}, expected 1"
            )));
        }
        let mut outgoing = vec![0.0_f64; self.states];
        for t in &self.transitions {
            if t.from >= self.states || t.to >= self.states {
                return Err(Error::InvalidStructure(format!(
                    "transition references state {} outside 0..{}",
                    t.from.max(t.to),
                    self.states
                )));
            }
            if t.symbol as usize >= self.alphabet {
                return Err(Error::UnknownSymbol {
                    symbol: t.symbol,
                    alphabet_size: self.alphabet,
                });
            }
            if !(0.0..=1.0).contains(&t.prob) {
                return Err(Error::InvalidStructure(format!(
                    "transition probability {} outside [0, 1]",
                    t.prob
                )));
            }
            outgoing[t.from] += t.prob;
        }
        if self.generative {
            for q in 0..self.states {
                let total = outgoing[q] + self.final_probs[q];
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidStructure(format!(
                        "state {q}: final + outgoing probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the automaton has a unique start state and at most one
    /// positive-probability transition per (state, symbol) pair.
    pub fn is_deterministic(&self) -> bool {
        let starts = self.initial.iter().filter(|p| **p > 0.0).count();
        if starts != 1 {
            return false;
        }
        let mut seen = BTreeSet::new();
        for t in &self.transitions {
            if t.prob > 0.0 && !seen.insert((t.from, t.symbol)) {
                return false;
            }
        }
        true
    }
}

/// The Boolean skeleton of a [`Pnfa`]: only which transitions exist.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Nfa {
    pub states: usize,
    pub alphabet: usize,
    /// `(from, symbol, to)` triples.
    pub transitions: Vec<(usize, u32, usize)>,
    pub initial: BTreeSet<usize>,
    pub final_states: BTreeSet<usize>,
}

impl Nfa {
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.states * self.alphabet];
        for &(from, symbol, to) in &self.transitions {
            adj[from * self.alphabet + symbol as usize].push(to);
        }
        adj
    }

    /// Subset-simulation membership. The empty string is accepted exactly
    /// when some state is both initial and final.
    pub fn accepts(&self, input: &[u32]) -> Result<bool> {
        let adj = self.adjacency();
        let mut current: BTreeSet<usize> = self.initial.clone();
        for &symbol in input {
            if symbol as usize >= self.alphabet {
                return Err(Error::UnknownSymbol {
                    symbol,
                    alphabet_size: self.alphabet,
                });
            }
            let mut next = BTreeSet::new();
            for &q in &current {
                for &to in &adj[q * self.alphabet + symbol as usize] {
                    next.insert(to);
                }
            }
            if next.is_empty() {
                return Ok(false);
            }
            current = next;
        }
        Ok(current.iter().any(|q| self.final_states.contains(q)))
    }

    /// All accepted strings of length at most `max_len`, lexicographically
    /// ordered. `node_budget` caps the number of prefixes explored so a
    /// careless call cannot run away.
    pub fn enumerate_language(
        &self,
        max_len: usize,
        node_budget: usize,
    ) -> Result<Vec<Vec<u32>>> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        let mut visited = 0_usize;
        // Depth-first over string prefixes, carrying the reachable state set.
        let mut stack: Vec<(Vec<u32>, BTreeSet<usize>)> =
            vec![(Vec::new(), self.initial.clone())];
        while let Some((prefix, reachable)) = stack.pop() {
            visited += 1;
            if visited > node_budget {
                return Err(Error::InstanceTooLarge(format!(
                    "language enumeration exceeded {node_budget} prefixes"
                )));
            }
            if reachable.iter().any(|q| self.final_states.contains(q)) {
                out.push(prefix.clone());
            }
            if prefix.len() == max_len {
                continue;
            }
            // Push in reverse symbol order so the DFS pops symbols ascending.
            for symbol in (0..self.alphabet as u32).rev() {
                let mut next = BTreeSet::new();
                for &q in &reachable {
                    for &to in &adj[q * self.alphabet + symbol as usize] {
                        next.insert(to);
                    }
                }
                if !next.is_empty() {
                    let mut p = prefix.clone();
                    p.push(symbol);
                    stack.push((p, next));
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

/// Free-function form of [`Nfa::accepts`].
pub fn nfa_accepts(nfa: &Nfa, input: &[u32]) -> Result<bool> {
    nfa.accepts(input)
}

/// Strip probabilities: keep every positive-probability transition, take
/// positive-probability initial/final states.
pub fn support_automaton(pa: &Pnfa) -> Nfa {
    Nfa {
        states: pa.states,
        alphabet: pa.alphabet,
        transitions: pa
            .transitions
            .iter()
            .filter(|t| t.prob > 0.0)
            .map(|t| (t.from, t.symbol, t.to))
            .collect(),
        initial: (0..pa.states).filter(|&q| pa.initial[q] > 0.0).collect(),
        final_states: (0..pa.states)
            .filter(|&q| pa.final_probs[q] > 0.0)
            .collect(),
    }
}

/// Build the layered bit-emission automaton for one noise vector.
///
/// The machine emits, per vocabulary entry `i`, the `c` bits of that entry's
/// noise value most-significant first: the first `b` bits are pinned to
/// `key_bits[i]`, the remaining `c - b` bits branch into parallel pair states
/// (one per bit value) with equal probability. Layers are chained in
/// vocabulary order, so the support language is exactly the set of
/// `vocab_size * c`-bit strings whose layer-`i` prefix bits equal
/// `key_bits[i]` — `2^((c-b) * vocab_size)` strings in all.
///
/// Convention: a transition is labeled with the bit encoded by its *target*
/// state. The start state emits nothing. The state that would encode the
/// very last bit is merged into the terminal state, with that bit carried on
/// the transitions entering the terminal; this keeps every transition
/// labeled while preserving the support language and the Θ(vocab_size · c)
/// state count.
pub fn build_subordinate_pa(
    vocab_size: usize,
    b: u32,
    c: u32,
    key_bits: &[Vec<u8>],
) -> Result<Pnfa> {
    if vocab_size == 0 {
        return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
    }
    if b == 0 || b > c {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= b <= c, got b={b} c={c}"
        )));
    }
    if key_bits.len() != vocab_size {
        return Err(Error::InvalidParameter(format!(
            "key_bits has {} rows, expected {vocab_size}",
            key_bits.len()
        )));
    }
    for (i, row) in key_bits.iter().enumerate() {
        if row.len() != b as usize {
            return Err(Error::InvalidParameter(format!(
                "key_bits[{i}] has {} bits, expected {b}",
                row.len()
            )));
        }
        if row.iter().any(|&bit| bit > 1) {
            return Err(Error::InvalidParameter(format!(
                "key_bits[{i}] contains a non-bit value"
            )));
        }
    }

    let b = b as usize;
    let c = c as usize;
    let per_layer = b + 2 * (c - b);
    // The final bit position of the final layer is absorbed by the terminal
    // state: one elided state when that position is key-pinned, two when free.
    let elided = if c > b { 2 } else { 1 };
    let q_f = 1 + vocab_size * per_layer - elided;
    let states = q_f + 1;

    let sigma_id = |layer: usize, j: usize| 1 + layer * per_layer + (j - 1);
    let free_id =
        |layer: usize, j: usize, bit: usize| 1 + layer * per_layer + b + 2 * (j - b - 1) + bit;

    // States entered when emitting bit position `j` (1-based) of `layer`,
    // paired with the bit each emits.
    let entry = |layer: usize, j: usize| -> Vec<(usize, u32)> {
        let last_position = layer == vocab_size - 1 && j == c;
        if j <= b {
            let bit = key_bits[layer][j - 1] as u32;
            vec![(if last_position { q_f } else { sigma_id(layer, j) }, bit)]
        } else if last_position {
            vec![(q_f, 0), (q_f, 1)]
        } else {
            vec![(free_id(layer, j, 0), 0), (free_id(layer, j, 1), 1)]
        }
    };

    let mut transitions = Vec::new();
    let mut connect = |sources: &[(usize, u32)], layer: usize, j: usize| {
        let targets = entry(layer, j);
        let p = 1.0 / targets.len() as f64;
        for &(from, _) in sources {
            for &(to, bit) in &targets {
                transitions.push(Transition { from, symbol: bit, to, prob: p });
            }
        }
    };

    let mut frontier: Vec<(usize, u32)> = vec![(0, 0)]; // start state, dummy bit
    for layer in 0..vocab_size {
        for j in 1..=c {
            if layer == vocab_size - 1 && j == c {
                connect(&frontier, layer, j);
                frontier = vec![(q_f, 0)];
            } else {
                connect(&frontier, layer, j);
                frontier = entry(layer, j);
            }
        }
    }

    let mut initial = vec![0.0; states];
    initial[0] = 1.0;
    let mut final_probs = vec![0.0; states];
    final_probs[q_f] = 1.0;

    let pa = Pnfa {
        states,
        alphabet: 2,
        transitions,
        initial,
        final_probs,
        generative: true,
    };
    pa.validate()?;
    Ok(pa)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bit_string(s: &str) -> Vec<u32> {
        s.bytes().map(|b| (b - b'0') as u32).collect()
    }

    #[test]
    fn single_token_single_bit_support() {
        let pa = build_subordinate_pa(1, 1, 1, &[vec![1]]).unwrap();
        let nfa = support_automaton(&pa);
        let lang = nfa.enumerate_language(4, 10_000).unwrap();
        assert_eq!(lang, vec![bit_string("1")]);
    }

    #[test]
    fn support_language_is_key_prefix_times_free_bits() {
        // Two vocabulary entries, 1 pinned bit, 2 total bits per entry.
        let pa = build_subordinate_pa(2, 1, 2, &[vec![1], vec![0]]).unwrap();
        let nfa = support_automaton(&pa);
        let lang = nfa.enumerate_language(4, 10_000).unwrap();
        let expected: Vec<Vec<u32>> = ["1000", "1001", "1100", "1101"]
            .iter()
            .map(|s| bit_string(s))
            .collect();
        assert_eq!(lang, expected);
    }

    #[test]
    fn support_size_and_length_scale_with_free_bits() {
        for vocab in 1..=3_usize {
            for b in 1..=3_u32 {
                for c in b..=3_u32 {
                    let key_bits: Vec<Vec<u8>> = (0..vocab)
                        .map(|i| (0..b).map(|j| ((i as u32 + j) % 2) as u8).collect())
                        .collect();
                    let pa = build_subordinate_pa(vocab, b, c, &key_bits).unwrap();
                    let nfa = support_automaton(&pa);
                    let len = vocab * c as usize;
                    let lang = nfa.enumerate_language(len, 1_000_000).unwrap();
                    assert_eq!(
                        lang.len() as u64,
                        1_u64 << ((c - b) as u64 * vocab as u64),
                        "vocab={vocab} b={b} c={c}"
                    );
                    assert!(lang.iter().all(|w| w.len() == len));
                    // Every string carries the pinned bits in place.
                    for w in &lang {
                        for (i, row) in key_bits.iter().enumerate() {
                            for (j, &bit) in row.iter().enumerate() {
                                assert_eq!(w[i * c as usize + j], bit as u32);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn subordinate_pa_is_generative_and_deterministic() {
        let pa = build_subordinate_pa(2, 1, 3, &[vec![0], vec![1]]).unwrap();
        pa.validate().unwrap();
        // Branching always uses distinct bit labels, so the machine is a
        // probabilistic *deterministic* automaton.
        assert!(pa.is_deterministic());
        // All outgoing probabilities at a branching state are equal.
        for q in 0..pa.states {
            let probs: Vec<f64> = pa
                .transitions
                .iter()
                .filter(|t| t.from == q)
                .map(|t| t.prob)
                .collect();
            if let Some(first) = probs.first() {
                assert!(probs.iter().all(|p| p == first));
            }
        }
    }

    #[test]
    fn subordinate_pa_state_count_is_linear() {
        let pa = build_subordinate_pa(4, 2, 5, &vec![vec![0, 1]; 4]).unwrap();
        // 1 start + per-layer (b + 2(c-b)) - elided pair + terminal.
        assert_eq!(pa.states, 1 + 4 * (2 + 2 * 3) - 2 + 1);
    }

    #[test]
    fn build_rejects_bad_parameters() {
        assert!(build_subordinate_pa(0, 1, 1, &[]).is_err());
        assert!(build_subordinate_pa(1, 0, 1, &[vec![]]).is_err());
        assert!(build_subordinate_pa(1, 2, 1, &[vec![0, 1]]).is_err());
        assert!(build_subordinate_pa(1, 1, 1, &[vec![0], vec![1]]).is_err());
        assert!(build_subordinate_pa(1, 1, 1, &[vec![7]]).is_err());
    }

    #[test]
    fn empty_string_needs_initial_final_overlap() {
        let nfa = Nfa {
            states: 2,
            alphabet: 1,
            transitions: vec![(0, 0, 1)],
            initial: [0].into(),
            final_states: [1].into(),
        };
        assert!(!nfa.accepts(&[]).unwrap());
        assert!(nfa.accepts(&[0]).unwrap());

        let overlap = Nfa {
            final_states: [0, 1].into(),
            ..nfa.clone()
        };
        assert!(overlap.accepts(&[]).unwrap());
    }

    #[test]
    fn unknown_symbol_is_an_error() {
        let pa = build_subordinate_pa(1, 1, 1, &[vec![0]]).unwrap();
        let nfa = support_automaton(&pa);
        assert!(matches!(
            nfa_accepts(&nfa, &[5]),
            Err(Error::UnknownSymbol { symbol: 5, .. })
        ));
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let pa = build_subordinate_pa(3, 1, 3, &[vec![0], vec![1], vec![0]]).unwrap();
        let nfa = support_automaton(&pa);
        assert!(matches!(
            nfa.enumerate_language(9, 10),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn validate_catches_generative_probability_gaps() {
        let mut pa = build_subordinate_pa(1, 1, 2, &[vec![1]]).unwrap();
        pa.transitions[0].prob = 0.25;
        assert!(pa.validate().is_err());
        pa.generative = false;
        pa.validate().unwrap(); // recognizing mode relaxes the sum
    }

    #[test]
    fn pnfa_json_round_trip() {
        let pa = build_subordinate_pa(2, 1, 2, &[vec![1], vec![0]]).unwrap();
        let text = serde_json::to_string(&pa).unwrap();
        assert!(text.contains("\"transitions\":[[0,1,"));
        let back: Pnfa = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.states, pa.states);
        assert_eq!(back.transitions, pa.transitions);
        let lang_a = support_automaton(&pa).enumerate_language(4, 10_000).unwrap();
        let lang_b = support_automaton(&back).enumerate_language(4, 10_000).unwrap();
        assert_eq!(lang_a, lang_b);
    }

    #[test]
    fn nondeterminism_is_detected() {
        let nfa_like = Pnfa {
            states: 2,
            alphabet: 1,
            transitions: vec![
                Transition { from: 0, symbol: 0, to: 0, prob: 0.5 },
                Transition { from: 0, symbol: 0, to: 1, prob: 0.5 },
            ],
            initial: vec![1.0, 0.0],
            final_probs: vec![0.0, 1.0],
            generative: false,
        };
        nfa_like.validate().unwrap();
        assert!(!nfa_like.is_deterministic());
    }
}
