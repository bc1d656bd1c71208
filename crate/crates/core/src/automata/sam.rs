use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One suffix-automaton state. `link` is -1 for the root. Transition keys
/// are serialized as strings because JSON objects require string keys.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamNode {
    pub len: usize,
    pub link: i64,
    #[serde(
        serialize_with = "serialize_next",
        deserialize_with = "deserialize_next"
    )]
    pub next: BTreeMap<u32, usize>,
}

fn serialize_next<S>(next: &BTreeMap<u32, usize>, ser: S) -> std::result::Result<S::Ok, S::Error>
where
    S: serde::Serializer,
{
    use serde::ser::SerializeMap;
    let mut map = ser.serialize_map(Some(next.len()))?;
    for (k, v) in next {
        map.serialize_entry(&k.to_string(), v)?;
    }
    map.end()
}

fn deserialize_next<'de, D>(de: D) -> std::result::Result<BTreeMap<u32, usize>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw = BTreeMap::<String, usize>::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("non-integer symbol key {k:?}")))
        })
        .collect()
}

/// A suffix automaton over integer symbols, possibly augmented with a wrap
/// transition for cyclic membership. Every state is accepting; membership is
/// plain transition-walking from the root.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuffixAutomaton {
    pub nodes: Vec<SamNode>,
}

impl SuffixAutomaton {
    pub fn accepts(&self, w: &[u32]) -> bool {
        let mut state = 0_usize;
        for sym in w {
            match self.nodes[state].next.get(sym) {
                Some(&to) => state = to,
                None => return false,
            }
        }
        true
    }
}

struct Builder {
    nodes: Vec<SamNode>,
    last: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: vec![SamNode { len: 0, link: -1, next: BTreeMap::new() }],
            last: 0,
        }
    }

    fn extend(&mut self, ch: u32) {
        let cur = self.nodes.len();
        self.nodes.push(SamNode {
            len: self.nodes[self.last].len + 1,
            link: -1,
            next: BTreeMap::new(),
        });
        let mut p = self.last as i64;
        while p >= 0 && !self.nodes[p as usize].next.contains_key(&ch) {
            self.nodes[p as usize].next.insert(ch, cur);
            p = self.nodes[p as usize].link;
        }
        if p < 0 {
            self.nodes[cur].link = 0;
        } else {
            let q = self.nodes[p as usize].next[&ch];
            if self.nodes[q].len == self.nodes[p as usize].len + 1 {
                self.nodes[cur].link = q as i64;
            } else {
                let clone = self.nodes.len();
                self.nodes.push(SamNode {
                    len: self.nodes[p as usize].len + 1,
                    link: self.nodes[q].link,
                    next: self.nodes[q].next.clone(),
                });
                while p >= 0 && self.nodes[p as usize].next.get(&ch) == Some(&q) {
                    self.nodes[p as usize].next.insert(ch, clone);
                    p = self.nodes[p as usize].link;
                }
                self.nodes[q].link = clone as i64;
                self.nodes[cur].link = clone as i64;
            }
        }
        self.last = cur;
    }
}

/// Where the wrap transition points. The first two variants exist only so
/// tests can demonstrate why they are wrong; production code always uses
/// [`WrapTarget::PrefixAligned`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) enum WrapTarget {
    /// The state with the highest index after the first pass (which can be a
    /// clone created by the final extension). Not phase-correct in general;
    /// kept for comparison.
    NewestState,
    /// The active last state after the first pass (the state whose longest
    /// string is `s` itself). Also not phase-correct: its transitions only
    /// cover continuations valid at position `|s|` of `s·s`.
    LastState,
    /// The state reached by walking `s` followed by `s[0]` from the root of
    /// the finished automaton — the automaton's own notion of "one full
    /// period plus one symbol". Continuations from here walk the second copy
    /// of `s` and hit the wrap edge again, so paths of any length stay
    /// aligned with the cycle.
    PrefixAligned,
}

pub(crate) fn suffix_automaton_cyclic_with(
    s: &[u32],
    target: WrapTarget,
) -> Result<SuffixAutomaton> {
    if s.is_empty() {
        return Err(Error::InvalidParameter(
            "cyclic suffix automaton needs a non-empty string".into(),
        ));
    }
    let mut b = Builder::new();
    for &ch in s {
        b.extend(ch);
    }
    let mid_newest = b.nodes.len() - 1;
    let mid_last = b.last;
    for &ch in s {
        b.extend(ch);
    }
    let idx = match target {
        WrapTarget::NewestState => mid_newest,
        WrapTarget::LastState => mid_last,
        WrapTarget::PrefixAligned => {
            let mut state = 0_usize;
            for ch in s.iter().chain(std::iter::once(&s[0])) {
                state = b.nodes[state].next[ch];
            }
            state
        }
    };
    let last = b.last;
    b.nodes[last].next.insert(s[0], idx);
    Ok(SuffixAutomaton { nodes: b.nodes })
}

/// Build the suffix automaton of `s · s` and add a single wrap transition
/// from the final state back into the middle on symbol `s[0]`, so that
/// walking can continue around the cycle indefinitely.
///
/// The wrap edge targets the state reached by reading `s` followed by
/// `s[0]`: every string mapped to the final state ends flush with the end of
/// a period, so after consuming `s[0]` the walk must sit exactly one symbol
/// into a period — which is what that state's outgoing transitions encode.
/// (Recording "the newest state after the first pass" instead is subtly
/// wrong: when the last extension of the first pass clones, the newest state
/// is the clone, and even the pre-clone last state only carries the
/// transitions valid at the seam of `s·s`, not around the cycle; both
/// variants misclassify strings as short as `2|s|`.)
///
/// For `|w| <= 2|s|`, `accepts(w)` is true exactly when `w` occurs in `s`
/// repeated enough times to cover it. State count stays that of the plain
/// suffix automaton of `s·s`, at most `4|s|`.
pub fn suffix_automaton_cyclic(s: &[u32]) -> Result<SuffixAutomaton> {
    suffix_automaton_cyclic_with(s, WrapTarget::PrefixAligned)
}
