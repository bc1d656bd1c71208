//! Detection: alignment costs, the cyclic soft-Levenshtein dynamic
//! program, a brute-force oracle for it, and the empirical p-value
//! machinery (null statistics, z-score, and a Vysochanskij–Petunin tail
//! bound).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seeds;
use crate::wkey::{gen_key, KeyAutomaton};

/// Edit costs for the generalized Levenshtein distance. Matches are
/// rewarded through the (non-positive) substitution cost, deletions of
/// observed tokens cost `gamma_d`, and unmatched key states cost
/// `gamma_i`. The insertion cost must be strictly positive: free
/// insertions would let any token align with an arbitrary state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub gamma_d: f64,
    pub gamma_i: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { gamma_d: 0.0, gamma_i: 2.0 }
    }
}

impl CostParams {
    pub fn new(gamma_d: f64, gamma_i: f64) -> Result<Self> {
        let params = CostParams { gamma_d, gamma_i };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma_d.is_finite() || self.gamma_d < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "deletion cost must be finite and >= 0, got {}",
                self.gamma_d
            )));
        }
        if !self.gamma_i.is_finite() || self.gamma_i <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "insertion cost must be finite and > 0, got {}",
                self.gamma_i
            )));
        }
        Ok(())
    }
}

/// Everything a detection run produces. `verdict` is false until a
/// threshold has been applied (see [`detect`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub psi: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub p_hat: f64,
    pub z: f64,
    pub vp_bound: f64,
    pub verdict: bool,
}

/// Alignment reward for observing a token whose noise value is `mu_y`:
/// `ln(1 - mu_y)`, which is 0 at `mu_y = 0` and decreases as the noise
/// value (and hence the evidence of a match) grows.
pub fn cost_d0(mu_y: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&mu_y) {
        return Err(Error::InvalidParameter(format!(
            "substitution cost needs 0 <= mu < 1, got {mu_y}"
        )));
    }
    Ok((1.0 - mu_y).ln())
}

/// Alignment reward of token `y` against a key state, maximized over
/// every noise vector the state can emit. The maximum of `ln(1 - mu)` is
/// attained with all free bits zero, i.e. at the stored fixed value.
pub fn cost_d0_state(key: &KeyAutomaton, state: usize, y: u32) -> f64 {
    (1.0 - key.noise(state, y)).ln()
}

fn check_tokens(y: &[u32], key: &KeyAutomaton) -> Result<()> {
    if let Some(&bad) = y.iter().find(|&&t| t as usize >= key.vocab_size) {
        return Err(Error::TokenOutOfRange { token: bad, vocab_size: key.vocab_size });
    }
    Ok(())
}

/// The detection statistic: the generalized Levenshtein distance between
/// `y` and the key automaton, minimized over every start state, path
/// length, and alignment.
///
/// Dynamic program over the cyclic state graph: two rolling rows of size
/// `lambda` start at zero (any state may begin a path); each token applies
/// deletion and predecessor substitutions, then insertions are relaxed by
/// two sweeps around the cycle starting after the row's minimum. Because
/// the insertion cost is strictly positive, no improving insertion chain
/// can pass the global minimum, so one lap suffices. Runs in
/// O(|y| * lambda * degree).
pub fn lev_dp(y: &[u32], key: &KeyAutomaton, costs: &CostParams) -> Result<f64> {
    costs.validate()?;
    check_tokens(y, key)?;
    let lambda = key.lambda;
    let degree = key.degree;
    let mut g = vec![0.0_f64; lambda];
    let mut f = vec![0.0_f64; lambda];

    fn relax_insert(f: &mut [f64], u: usize, lambda: usize, degree: usize, gamma_i: f64) {
        for k in 1..=degree {
            let v = (u + lambda - k) % lambda;
            let cand = f[v] + gamma_i;
            if cand < f[u] {
                f[u] = cand;
            }
        }
    }

    for &tok in y {
        for u in 0..lambda {
            let d0 = cost_d0_state(key, u, tok);
            let mut best = g[u] + costs.gamma_d;
            for k in 1..=degree {
                let v = (u + lambda - k) % lambda;
                let cand = g[v] + d0;
                if cand < best {
                    best = cand;
                }
            }
            f[u] = best;
        }
        let mut ustar = 0;
        for u in 1..lambda {
            if f[u] < f[ustar] {
                ustar = u;
            }
        }
        for u in ustar + 1..lambda {
            relax_insert(&mut f, u, lambda, degree, costs.gamma_i);
        }
        for u in 0..ustar {
            relax_insert(&mut f, u, lambda, degree, costs.gamma_i);
        }
        std::mem::swap(&mut f, &mut g);
    }
    // After the final swap the fully-relaxed row for the whole sequence
    // lives in g.
    Ok(g.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Exact reference value computed by direct recursion: enumerate every
/// state path of length at most `max_path_len` (from every start state,
/// every path length, empty path included) and run the textbook
/// edit-distance recursion against each, keeping the global minimum.
///
/// Exponential in `max_path_len` for `degree > 1`; admissible pruning
/// (a per-suffix lower bound that ignores insertion costs) keeps small
/// instances fast without affecting exactness. Refuses instances whose
/// search exceeds an internal node budget.
pub fn lev_bruteforce(
    y: &[u32],
    key: &KeyAutomaton,
    costs: &CostParams,
    max_path_len: usize,
) -> Result<f64> {
    costs.validate()?;
    check_tokens(y, key)?;
    let m = y.len();

    // Lower bound on the cost of consuming tokens j.. : each must go by
    // deletion or by its best substitution anywhere in the key.
    let mut suffix_lb = vec![0.0_f64; m + 1];
    for j in (0..m).rev() {
        let best_sub = (0..key.lambda)
            .map(|u| cost_d0_state(key, u, y[j]))
            .fold(f64::INFINITY, f64::min);
        suffix_lb[j] = suffix_lb[j + 1] + best_sub.min(costs.gamma_d);
    }

    struct Search<'a> {
        y: &'a [u32],
        key: &'a KeyAutomaton,
        costs: &'a CostParams,
        suffix_lb: &'a [f64],
        max_path_len: usize,
        budget: u64,
        best: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, state: usize, depth: usize, prev: &[f64]) -> Result<()> {
            if self.budget == 0 {
                return Err(Error::InstanceTooLarge(
                    "path enumeration exceeded the node budget".into(),
                ));
            }
            self.budget -= 1;
            let m = self.y.len();
            let mut row = vec![0.0_f64; m + 1];
            row[0] = prev[0] + self.costs.gamma_i;
            for j in 1..=m {
                let sub = prev[j - 1] + cost_d0_state(self.key, state, self.y[j - 1]);
                let del = row[j - 1] + self.costs.gamma_d;
                let ins = prev[j] + self.costs.gamma_i;
                row[j] = sub.min(del).min(ins);
            }
            if row[m] < self.best {
                self.best = row[m];
            }
            if depth == self.max_path_len {
                return Ok(());
            }
            let bound = row
                .iter()
                .zip(self.suffix_lb)
                .map(|(r, lb)| r + lb)
                .fold(f64::INFINITY, f64::min);
            if bound >= self.best {
                return Ok(());
            }
            for next in self.key.successors(state).collect::<Vec<_>>() {
                self.visit(next, depth + 1, &row)?;
            }
            Ok(())
        }
    }

    let root: Vec<f64> = (0..=m).map(|j| costs.gamma_d * j as f64).collect();
    let mut search = Search {
        y,
        key,
        costs,
        suffix_lb: &suffix_lb,
        max_path_len,
        budget: 50_000_000 / (m as u64 + 1),
        best: root[m],
    };
    if max_path_len > 0 {
        for start in 0..key.lambda {
            search.visit(start, 1, &root)?;
        }
    }
    Ok(search.best)
}

/// One-sided Vysochanskij–Petunin tail bound for a unimodal statistic at
/// `z` standard deviations: `4/(9(z^2+1))` in the far tail
/// (`|z| >= sqrt(5/3)`), `4/(3(z^2+1)) - 1/3` otherwise, clamped to
/// (0, 1].
pub fn vp_bound(z: f64) -> f64 {
    let t = z * z + 1.0;
    let value = if z.abs() >= (5.0_f64 / 3.0).sqrt() {
        4.0 / (9.0 * t)
    } else {
        4.0 / (3.0 * t) - 1.0 / 3.0
    };
    value.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Empirical p-value of the statistic `psi = lev_dp(y, key)` against `n`
/// null keys freshly generated with the same shape parameters as `key`
/// (seeds derived deterministically from `seed`):
/// `p_hat = (1 + #{psi_i <= psi}) / (n + 1)`. Smaller statistics mean
/// stronger evidence, so the test is on the left tail.
///
/// The report's verdict is left `false`; [`detect`] applies a threshold.
pub fn p_value(
    y: &[u32],
    key: &KeyAutomaton,
    costs: &CostParams,
    n: usize,
    seed: u64,
) -> Result<DetectionReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one null sample".into()));
    }
    let psi = lev_dp(y, key, costs)?;
    let mut null_psi = Vec::with_capacity(n);
    for s in derive_seeds(seed, n) {
        let null_key = gen_key(
            key.lambda,
            key.degree,
            key.vocab_size,
            key.bitwidth,
            key.precision,
            s,
        )?;
        null_psi.push(lev_dp(y, &null_key, costs)?);
    }
    let exceed = null_psi.iter().filter(|&&v| v <= psi).count();
    let p_hat = (1 + exceed) as f64 / (n + 1) as f64;
    let null_mean = null_psi.iter().sum::<f64>() / n as f64;
    let null_std = if n > 1 {
        (null_psi.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / (n - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    let z = if null_std > 0.0 { (psi - null_mean) / null_std } else { 0.0 };
    Ok(DetectionReport {
        psi,
        null_mean,
        null_std,
        p_hat,
        z,
        vp_bound: vp_bound(z),
        verdict: false,
    })
}

/// Full detection: true iff the empirical p-value is at or below
/// `threshold`.
pub fn detect(
    y: &[u32],
    key: &KeyAutomaton,
    costs: &CostParams,
    threshold: f64,
    n: usize,
    seed: u64,
) -> Result<DetectionReport> {
    let mut report = p_value(y, key, costs, n, seed)?;
    report.verdict = report.p_hat <= threshold;
    Ok(report)
}
