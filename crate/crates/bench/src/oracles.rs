//! Independent oracles for the selftest and acceptance suites.
//!
//! These share no code with the production solvers: the entmax oracle
//! enumerates sorted-prefix supports and solves each candidate with
//! high-precision bisection; the threshold oracle is bisection-only; the
//! moment oracle is plain Monte-Carlo.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Entmax by support enumeration. For each sorted-prefix support size k,
/// solve the unclamped prefix normalization exactly and keep the tau
/// consistent with z_(k-1) > tau >= z_(k).
pub fn entmax_by_enumeration(scores: &[f64], alpha: f64) -> Vec<f64> {
    let a = alpha - 1.0;
    let beta = 1.0 / a;
    let n = scores.len();
    let z: Vec<f64> = scores.iter().map(|&s| a * s).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| z[j].partial_cmp(&z[i]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| z[i]).collect();

    for k in 1..=n {
        let prefix = &sorted[..k];
        let Some(tau) = solve_prefix_tau(prefix, beta) else {
            continue;
        };
        if sorted[k - 1] > tau && (k == n || sorted[k] <= tau) {
            let mut probs = vec![0.0; n];
            for (&i, &zi) in order.iter().zip(&sorted).take(k) {
                probs[i] = (zi - tau).powf(beta);
            }
            return probs;
        }
    }
    panic!("no consistent prefix support for scores {scores:?}");
}

fn solve_prefix_tau(prefix: &[f64], beta: f64) -> Option<f64> {
    let z_min = *prefix.last().unwrap();
    let at_min: f64 = prefix.iter().map(|&z| (z - z_min).powf(beta)).sum();
    if at_min >= 1.0 {
        return None;
    }
    let mut lo = z_min - 1.0;
    let mut hi = z_min;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let total: f64 = prefix.iter().map(|&z| (z - mid).powf(beta)).sum();
        if total >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Entmax threshold by bisection only on the clamped residual.
pub fn threshold_by_bisection(scores: &[f64], alpha: f64) -> f64 {
    let a = alpha - 1.0;
    let beta = 1.0 / a;
    let z_max = a * scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = z_max - 1.0;
    let mut hi = z_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let total: f64 = scores
            .iter()
            .map(|&s| {
                let gap = a * s - mid;
                if gap > 0.0 {
                    gap.powf(beta)
                } else {
                    0.0
                }
            })
            .sum();
        if total >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Monte-Carlo estimate of E[((alpha-1) S - tau)_+^(1/(alpha-1))] for
/// S ~ N(mu, sigma^2). Returns (mean, standard error). Small integer
/// exponents are multiplied out; powf would dominate the sampling loop.
pub fn mc_truncated_mass(
    rng: &mut ChaCha8Rng,
    mu: f64,
    sigma: f64,
    tau: f64,
    alpha: f64,
    samples: usize,
) -> (f64, f64) {
    let a = alpha - 1.0;
    let beta = 1.0 / a;
    let beta_int = if (beta - beta.round()).abs() < 1e-9 && beta.round() >= 1.0 {
        Some(beta.round() as u32)
    } else {
        None
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let s: f64 = mu + sigma * rng.sample::<f64, _>(StandardNormal);
        let gap = a * s - tau;
        let g = if gap > 0.0 {
            match beta_int {
                Some(1) => gap,
                Some(2) => gap * gap,
                Some(3) => gap * gap * gap,
                _ => gap.powf(beta),
            }
        } else {
            0.0
        };
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}
