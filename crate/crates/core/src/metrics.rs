//! Distances between finite point patterns and between count laws.
//!
//! * [`d1`]: mean truncated distance under an optimal perfect matching, or 1
//!   when the total masses differ.
//! * [`d_hat1`]: the unequal-mass variant that matches the smaller pattern into
//!   a sub-pattern of the larger one.
//! * [`empirical_d2`]: optimal transport between two empirical samples of
//!   patterns, with ground cost `d1`.
//! * [`tv`]: total variation between distributions on the non-negative integers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::geometry::d0;
use crate::sampling::CountingMeasure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("brute force limited to m <= {max}, got {m}")]
    TooLarge { m: usize, max: usize },
    #[error("patterns must have equal mass for brute force ({0} vs {1})")]
    MassMismatch(usize, usize),
    #[error("sample lists differ in length ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("empty sample list")]
    Empty,
    #[error("cutoff {cutoff} leaves tail mass {tail:e} >= 1e-9")]
    CutoffTooSmall { cutoff: usize, tail: f64 },
    #[error("cluster mass must be positive and finite, got {0}")]
    InvalidMass(f64),
}

/// Probability mass function on `{0, 1, ..., len-1}`.
///
/// `tail` records mass that was truncated away; `sum(probs) + tail == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail: f64,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricsError> {
        Self::with_tail(probs, 0.0)
    }

    pub fn with_tail(mut probs: Vec<f64>, tail: f64) -> Result<Self, MetricsError> {
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(MetricsError::InvalidPmf(format!("entry {p} is not a probability")));
        }
        if !(tail.is_finite() && tail >= 0.0) {
            return Err(MetricsError::InvalidPmf(format!("tail {tail} is not a probability")));
        }
        let sum: f64 = probs.iter().sum::<f64>() + tail;
        let tol = 1e-12 * (probs.len().max(1) as f64);
        if (sum - 1.0).abs() > tol {
            return Err(MetricsError::InvalidPmf(format!("total mass {sum} != 1")));
        }
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Ok(Pmf { probs, tail })
    }

    /// Point mass at `k`.
    pub fn dirac(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Pmf { probs, tail: 0.0 }
    }

    /// Poisson(`mean`) truncated at `cutoff` (inclusive), tail recorded.
    pub fn poisson(mean: f64, cutoff: usize) -> Self {
        let mut probs = Vec::with_capacity(cutoff + 1);
        let mut term = (-mean).exp();
        for k in 0..=cutoff {
            probs.push(term);
            term *= mean / (k + 1) as f64;
        }
        let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        Pmf { probs, tail }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// One past the largest index with stored mass.
    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn cdf(&self, k: usize) -> f64 {
        self.probs.iter().take(k + 1).sum()
    }

    /// Inverse-CDF draw from a uniform in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // Rounding or truncated tail: fall back to the largest supported value.
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// Value of a matching distance together with the optimal assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub value: f64,
    /// Matched `(mu index, chi index)` pairs.
    pub assignment: Vec<(usize, usize)>,
}

fn cost_matrix(rows: &[crate::geometry::Point], cols: &[crate::geometry::Point]) -> Vec<f64> {
    let mut c = Vec::with_capacity(rows.len() * cols.len());
    for p in rows {
        for q in cols {
            c.push(d0(p, q));
        }
    }
    c
}

fn mean_cost(mu: &CountingMeasure, chi: &CountingMeasure, pairs: &[(usize, usize)]) -> f64 {
    // Sorted summation makes the value independent of pair order.
    let mut costs: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| d0(&mu.points()[i], &chi.points()[j]))
        .collect();
    costs.sort_by(f64::total_cmp);
    costs.iter().sum::<f64>() / pairs.len() as f64
}

/// Optimal-matching distance between equal-mass patterns; 1 on mass mismatch.
pub fn d1(mu: &CountingMeasure, chi: &CountingMeasure) -> MatchResult {
    let m = mu.len();
    if m != chi.len() {
        return MatchResult {
            value: 1.0,
            assignment: Vec::new(),
        };
    }
    if m == 0 {
        return MatchResult {
            value: 0.0,
            assignment: Vec::new(),
        };
    }
    let cost = cost_matrix(mu.points(), chi.points());
    let cols = assignment::solve(&cost, m, m);
    let pairs: Vec<(usize, usize)> = cols.into_iter().enumerate().collect();
    MatchResult {
        value: mean_cost(mu, chi, &pairs),
        assignment: pairs,
    }
}

pub const BRUTE_FORCE_MAX: usize = 8;

/// Exhaustive minimum over all `m!` pairings. Equal masses, `m <= 8`.
pub fn d1_bruteforce(mu: &CountingMeasure, chi: &CountingMeasure) -> Result<f64, MetricsError> {
    let m = mu.len();
    if m != chi.len() {
        return Err(MetricsError::MassMismatch(m, chi.len()));
    }
    if m > BRUTE_FORCE_MAX {
        return Err(MetricsError::TooLarge {
            m,
            max: BRUTE_FORCE_MAX,
        });
    }
    if m == 0 {
        return Ok(0.0);
    }
    fn recurse(i: usize, used: &mut [bool], acc: f64, cost: &[f64], m: usize, best: &mut f64) {
        if i == m {
            *best = best.min(acc);
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                recurse(i + 1, used, acc + cost[i * m + j], cost, m, best);
                used[j] = false;
            }
        }
    }
    let cost = cost_matrix(mu.points(), chi.points());
    let mut best = f64::INFINITY;
    recurse(0, &mut vec![false; m], 0.0, &cost, m, &mut best);
    Ok(best / m as f64)
}

/// Unequal-mass matching distance: the smaller pattern is matched injectively
/// into the larger one and the mean is taken over the smaller mass.
pub fn d_hat1(mu: &CountingMeasure, chi: &CountingMeasure) -> MatchResult {
    if mu.len() == chi.len() {
        return d1(mu, chi);
    }
    let (small, large, flipped) = if mu.len() < chi.len() {
        (mu, chi, false)
    } else {
        (chi, mu, true)
    };
    if small.is_empty() {
        return MatchResult {
            value: 0.0,
            assignment: Vec::new(),
        };
    }
    let cost = cost_matrix(small.points(), large.points());
    let cols = assignment::solve(&cost, small.len(), large.len());
    let pairs: Vec<(usize, usize)> = cols.into_iter().enumerate().collect();
    let value = mean_cost(small, large, &pairs);
    let assignment = if flipped {
        pairs.into_iter().map(|(i, j)| (j, i)).collect()
    } else {
        pairs
    };
    MatchResult { value, assignment }
}

/// Optimal-transport estimate between two equally sized samples of patterns,
/// with `d1` as ground cost.
pub fn empirical_d2(a: &[CountingMeasure], b: &[CountingMeasure]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::SizeMismatch(a.len(), b.len()));
    }
    let m = a.len();
    if m == 0 {
        return Err(MetricsError::Empty);
    }
    let cost: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|k| d1(&a[k / m], &b[k % m]).value)
        .collect();
    let cols = assignment::solve(&cost, m, m);
    let mut matched: Vec<f64> = cols.iter().enumerate().map(|(i, &j)| cost[i * m + j]).collect();
    matched.sort_by(f64::total_cmp);
    Ok(matched.iter().sum::<f64>() / m as f64)
}

/// Total variation `1/2 sum |p(i) - q(i)|` over the union of supports.
pub fn tv(p: &Pmf, q: &Pmf) -> f64 {
    let len = p.support_len().max(q.support_len());
    let s: f64 = (0..len).map(|k| (p.get(k) - q.get(k)).abs()).sum();
    (0.5 * s).min(1.0)
}

/// Exact law of `sum_i i * N_i` with independent `N_i ~ Poisson(mass_i)`,
/// truncated at `cutoff`; the discarded tail is kept in [`Pmf::tail`].
pub fn cp_count_pmf(cluster_masses: &[(usize, f64)], cutoff: usize) -> Result<Pmf, MetricsError> {
    let mut acc = vec![0.0; cutoff + 1];
    acc[0] = 1.0;
    for &(size, mass) in cluster_masses {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(MetricsError::InvalidMass(mass));
        }
        if size == 0 {
            // Zero-size clusters do not change the total.
            continue;
        }
        let mut component = vec![0.0; cutoff + 1];
        let mut term = (-mass).exp();
        let mut j = 0usize;
        while j * size <= cutoff {
            component[j * size] = term;
            j += 1;
            term *= mass / j as f64;
        }
        let mut next = vec![0.0; cutoff + 1];
        for (k, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (l, &c) in component[..=cutoff - k].iter().enumerate() {
                next[k + l] += a * c;
            }
        }
        acc = next;
    }
    let tail = (1.0 - acc.iter().sum::<f64>()).max(0.0);
    if tail >= 1e-9 {
        return Err(MetricsError::CutoffTooSmall { cutoff, tail });
    }
    Pmf::with_tail(acc, tail)
}

/// Smallest cutoff (doubling search) whose truncation tail is below `1e-12`.
pub fn cp_count_pmf_auto(cluster_masses: &[(usize, f64)]) -> Result<Pmf, MetricsError> {
    let mean: f64 = cluster_masses.iter().map(|&(i, m)| i as f64 * m).sum();
    let mut cutoff = (mean.ceil() as usize).max(16);
    loop {
        match cp_count_pmf(cluster_masses, cutoff) {
            Ok(p) if p.tail() < 1e-12 => return Ok(p),
            Ok(_) | Err(MetricsError::CutoffTooSmall { .. }) => cutoff *= 2,
            Err(e) => return Err(e),
        }
    }
}

/// Empirical frequencies of a non-empty list of counts.
pub fn empirical_count_pmf(samples: &[usize]) -> Result<Pmf, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let max = *samples.iter().max().unwrap();
    let mut counts = vec![0usize; max + 1];
    for &s in samples {
        counts[s] += 1;
    }
    let n = samples.len() as f64;
    Pmf::new(counts.into_iter().map(|c| c as f64 / n).collect())
}
