//! Explicit automata: probabilistic NFAs, their support NFAs, and a suffix
//! automaton extended with a wrap transition for cyclic membership.
//!
//! These structures exist mostly to *cross-check* the compact key
//! representation in [`crate::wkey`]: the keyed noise vectors are never
//! materialized as graphs during generation or detection, but the graphs
//! built here must generate exactly the same languages.

mod pnfa;
mod sam;

pub use pnfa::{build_subordinate_pa, nfa_accepts, support_automaton, Nfa, Pnfa, Transition};
pub use sam::{suffix_automaton_cyclic, SamNode, SuffixAutomaton};

use crate::error::{Error, Result};

/// Number of distinct state paths of length `m` through the cyclic d-regular
/// key topology: `lambda * d^m` (every state has exactly `d` successors, any
/// state may start a path).
///
/// Errors on zero-sized inputs and reports overflow instead of wrapping.
pub fn count_paths(lambda: usize, degree: usize, m: usize) -> Result<u128> {
    if lambda == 0 {
        return Err(Error::InvalidParameter("lambda must be >= 1".into()));
    }
    if degree == 0 {
        return Err(Error::InvalidParameter("degree must be >= 1".into()));
    }
    let mut total: u128 = lambda as u128;
    for _ in 0..m {
        total = total
            .checked_mul(degree as u128)
            .ok_or_else(|| Error::Overflow(format!("{lambda} * {degree}^{m} exceeds u128")))?;
    }
    Ok(total)
}
