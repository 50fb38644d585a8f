//! Softmax and alpha-entmax probability transforms.
//!
//! For scores `s` and alpha > 1, alpha-entmax maps
//!
//! ```text
//! p_i = [(alpha - 1) s_i - tau]_+^(1/(alpha-1))
//! ```
//!
//! with tau chosen so the output sums to one. Entries at or below the
//! threshold are exactly zero, so the support is `{i : (alpha-1) s_i > tau}`.
//! Alpha = 2 recovers sparsemax and is solved exactly by sorting; other
//! alphas use bracketed bisection followed by Halley refinement.

use crate::error::{Error, Result};

/// Sparsity parameter of the entmax family. Must be strictly greater
/// than 1; the companion exponent `beta = 1/(alpha - 1)` is recomputed on
/// demand so the two can never drift apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    value: f64,
}

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 1.0 {
            return Err(Error::InvalidAlpha { value });
        }
        Ok(Self { value })
    }

    /// Alpha = 2, the sparsemax case.
    pub fn sparsemax() -> Self {
        Self { value: 2.0 }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// The score multiplier `a = alpha - 1`.
    pub fn a(self) -> f64 {
        self.value - 1.0
    }

    /// The exponent `beta = 1/(alpha - 1)`.
    pub fn beta(self) -> f64 {
        1.0 / (self.value - 1.0)
    }
}

/// Raw per-token scores. The flag records whether the 1/sqrt(d) scaling was
/// already applied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    scaled: bool,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        Self::build(scores, false)
    }

    /// Scores that already carry the 1/sqrt(d) attention scaling.
    pub fn new_scaled(scores: Vec<f64>) -> Result<Self> {
        Self::build(scores, true)
    }

    fn build(scores: Vec<f64>, scaled: bool) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteScore { index });
        }
        Ok(Self { scores, scaled })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }
}

/// A probability distribution produced by a transform, with its threshold
/// and explicit support. For softmax, `tau` records the log-normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDist {
    probs: Vec<f64>,
    tau: f64,
    support: Vec<usize>,
}

impl AttentionDist {
    /// Build directly from probabilities (no transform). The entries must
    /// be nonnegative and sum to one within 1e-9; `tau` is NaN.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some(index) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFiniteScore { index });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Convergence {
                residual: (total - 1.0).abs(),
                iterations: 0,
            });
        }
        let support = support_indices(&probs);
        Ok(Self {
            probs,
            tau: f64::NAN,
            support,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Threshold used by the transform (log-normalizer for softmax).
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Sum of probabilities over indices NOT in `keep` (sorted slice).
    pub fn mass_outside(&self, keep: &[usize]) -> f64 {
        let mut dropped = 0.0;
        let mut it = keep.iter().peekable();
        for (i, &p) in self.probs.iter().enumerate() {
            while let Some(&&k) = it.peek() {
                if k < i {
                    it.next();
                } else {
                    break;
                }
            }
            if it.peek() != Some(&&i) {
                dropped += p;
            }
        }
        dropped
    }
}

/// Indices with strictly positive probability.
fn support_indices(probs: &[f64]) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// The support of a distribution: exactly `{i : probs[i] > 0}`.
pub fn support_of(dist: &AttentionDist) -> Vec<usize> {
    support_indices(&dist.probs)
}

/// Numerically stable softmax. Every output entry is strictly positive.
pub fn softmax(scores: &ScoreVector) -> Result<AttentionDist> {
    let s = scores.scores();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / total).collect();
    let support = (0..probs.len()).collect();
    Ok(AttentionDist {
        probs,
        tau: max + total.ln(),
        support,
    })
}

/// Alpha-entmax with exact-zero semantics: entries at or below the
/// threshold are bitwise zero.
pub fn entmax(scores: &ScoreVector, alpha: Alpha) -> Result<AttentionDist> {
    entmax_with_init(scores, alpha, None)
}

/// Alpha-entmax seeded with an externally estimated threshold (same units
/// as the solver's return value). The estimate only warm-starts the solve;
/// the result is still exact.
pub fn entmax_with_init(
    scores: &ScoreVector,
    alpha: Alpha,
    tau_init: Option<f64>,
) -> Result<AttentionDist> {
    let s = scores.scores();
    let a = alpha.a();
    let beta = alpha.beta();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Shifted scores z_i = a (s_i - max) put the threshold in [-1, 0).
    let z: Vec<f64> = s.iter().map(|&x| a * (x - max)).collect();
    let t = if alpha.value() == 2.0 {
        sparsemax_shifted_threshold(&z)
    } else {
        let init = tau_init.map(|tau| tau - a * max);
        solve_shifted_threshold(&z, beta, init)?
    };
    let probs: Vec<f64> = z
        .iter()
        .map(|&zi| if zi > t { (zi - t).powf(beta) } else { 0.0 })
        .collect();
    let support = support_indices(&probs);
    Ok(AttentionDist {
        probs,
        tau: t + a * max,
        support,
    })
}

/// Threshold tau with `sum_i [(alpha-1) s_i - tau]_+^beta = 1` to residual
/// 1e-12. Deterministic for fixed input.
pub fn solve_entmax_threshold(scores: &ScoreVector, alpha: Alpha) -> Result<f64> {
    let s = scores.scores();
    let a = alpha.a();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = s.iter().map(|&x| a * (x - max)).collect();
    let t = if alpha.value() == 2.0 {
        sparsemax_shifted_threshold(&z)
    } else {
        solve_shifted_threshold(&z, alpha.beta(), None)?
    };
    Ok(t + a * max)
}

/// Exact sparsemax threshold on shifted scores (max entry is 0):
/// sort descending, take the largest prefix with 1 + k z_(k) > cumsum_k.
fn sparsemax_shifted_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("scores are finite"));
    let mut cumsum = 0.0;
    let mut k = 1;
    let mut cumsum_k = sorted[0];
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (j + 1) as f64 * v > cumsum {
            k = j + 1;
            cumsum_k = cumsum;
        }
    }
    (cumsum_k - 1.0) / k as f64
}

/// Residual `h(t) = sum_i [z_i - t]_+^beta - 1` with compensated summation,
/// plus first and second derivatives over the active set.
fn residual(z: &[f64], t: f64, beta: f64) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &zi in z {
        let gap = zi - t;
        if gap > 0.0 {
            let g = gap.powf(beta);
            // Neumaier compensation keeps the residual trustworthy at the
            // 1e-12 scale even for very wide inputs.
            let fresh = sum + g;
            if sum.abs() >= g.abs() {
                comp += (sum - fresh) + g;
            } else {
                comp += (g - fresh) + sum;
            }
            sum = fresh;
            d1 -= beta * g / gap;
            d2 += beta * (beta - 1.0) * g / (gap * gap);
        }
    }
    (sum + comp - 1.0, d1, d2)
}

/// Bracketed solve on shifted scores: the root lies in [-1, 0] because the
/// max shifted score is 0 and contributes unit mass at t = -1. A cold solve
/// bisects to width 1e-8 before switching to Halley steps; a warm start
/// inside the bracket goes straight to Halley. Every candidate step is kept
/// inside the live bracket, so the solve cannot diverge. Target residual
/// 1e-12, cap 100 iterations.
fn solve_shifted_threshold(z: &[f64], beta: f64, init: Option<f64>) -> Result<f64> {
    const BISECT_WIDTH: f64 = 1e-8;
    const RESIDUAL_TOL: f64 = 1e-12;
    const MAX_ITERS: usize = 100;

    let mut lo = -1.0;
    let mut hi = 0.0;
    let mut polish = false;
    let mut t = match init {
        Some(t0) if t0 > lo && t0 < hi => {
            polish = true;
            t0
        }
        _ => 0.5 * (lo + hi),
    };
    let mut iterations = 0;
    let mut last = f64::INFINITY;

    while iterations < MAX_ITERS {
        iterations += 1;
        let (h, d1, d2) = residual(z, t, beta);
        last = h;
        if h.abs() <= RESIDUAL_TOL {
            return Ok(t);
        }
        if h > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= BISECT_WIDTH {
            polish = true;
        }
        t = if polish && d1 != 0.0 {
            let newton = h / d1;
            let denom = 1.0 - 0.5 * newton * d2 / d1;
            let step = if denom.is_finite() && denom != 0.0 {
                newton / denom
            } else {
                newton
            };
            let cand = t - step;
            if cand > lo && cand < hi {
                cand
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Convergence {
        residual: last,
        iterations,
    })
}
