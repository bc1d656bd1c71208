//! Watermarking for autoregressive token generators, built on probabilistic
//! automata.
//!
//! The pieces fit together like this:
//!
//! * [`wkey`] — the watermark key: a cyclic d-regular automaton over `lambda`
//!   states whose states carry per-token noise values on a `2^b` grid.
//! * [`lm`] — toy autoregressive models (uniform, fixed categorical, smoothed
//!   Markov) standing in for a language model.
//! * [`decode`] — distortion-preserving decoding: the exponential-minimum
//!   rule turns a model distribution plus a keyed noise vector into a token
//!   without changing the marginal token law.
//! * [`detect`] — edit-tolerant detection: a generalized Levenshtein distance
//!   between observed tokens and the key automaton's noise language, plus a
//!   permutation p-value over freshly sampled null keys and a
//!   Vysochanskij–Petunin tail bound.
//! * [`automata`] — explicit probabilistic/nondeterministic automata used to
//!   cross-check the key machinery, and a cyclic suffix automaton.
//! * [`lpn`] — a binary-vocabulary scheme whose watermark signal is a noisy
//!   parity of keyed indicator bits, detectable only with the sparse secret.
//! * [`attacks`] — token-level corruption harnesses (substitute / delete /
//!   insert) for robustness experiments.
//! * [`bench`] — runtime scaling probes for the detector and a deliberately
//!   quadratic block-alignment baseline.

pub mod attacks;
pub mod automata;
pub mod bench;
pub mod decode;
pub mod detect;
pub mod error;
pub mod lm;
pub mod lpn;
pub mod seed;
pub mod wkey;

pub use error::{Error, Result};
