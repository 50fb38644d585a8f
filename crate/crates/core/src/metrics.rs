//! Per-step approximation metrics.
//!
//! For one decode step the report captures: dropped probability mass delta,
//! support retention rho, relative output error, slack of the 2*B*delta
//! bound, coverage, and the traffic counters. Softmax runs can still be
//! scored against the entmax support of the same scores (retention against
//! softmax's own dense support is trivially coverage and says nothing); the
//! report records which support definition was used.

use crate::attention::AttentionOutput;
use crate::cache::PagedKvCache;
use crate::entmax::AttentionDist;
use crate::error::{Error, Result};
use crate::matrix::norm2;
use crate::selection::SelectionResult;

/// Which support set rho was measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportDef {
    /// The support of the full distribution of the run's own transform.
    TransformNative,
    /// An entmax support supplied by the caller (used to score softmax
    /// runs on support-retention grounds).
    EntmaxReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    /// Full-distribution probability mass of the dropped tokens, in [0, 1].
    pub delta: f64,
    /// Fraction of the reference support contained in the kept set; 1 when
    /// the support is empty.
    pub rho: f64,
    /// ||o - o_sparse|| / ||o||, with the zero-norm convention below.
    pub rel_error: f64,
    /// True when ||o|| was below 1e-12 and a nonzero absolute error is
    /// reported instead of a ratio.
    pub rel_error_is_absolute: bool,
    /// 2*B*delta - ||o - o_sparse||; nonnegative up to 1e-9 rounding.
    pub bound_slack: f64,
    /// |kept tokens| / n.
    pub coverage: f64,
    pub kv_bytes_sparse: u64,
    pub kv_bytes_full: u64,
    pub support_def: SupportDef,
    pub support_size: usize,
    pub support_retained: usize,
}

/// Number of elements common to two sorted, deduplicated index slices.
fn sorted_intersection_count(a: &[usize], b: &[usize]) -> usize {
    let mut count = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn transform_name(out: &AttentionOutput) -> String {
    out.transform
        .map(|t| t.name())
        .unwrap_or_else(|| "renormalized-truncation".to_string())
}

/// Compare a sparse step against its full-cache oracle, scoring retention
/// against the full distribution's own support.
pub fn evaluate_step(
    full: &AttentionOutput,
    sparse: &AttentionOutput,
    selection: &SelectionResult,
    cache: &PagedKvCache,
) -> Result<ApproxReport> {
    evaluate_with(full, sparse, selection, cache, None)
}

/// As [`evaluate_step`], but score retention against an externally supplied
/// entmax support (for softmax runs).
pub fn evaluate_step_with_support(
    full: &AttentionOutput,
    sparse: &AttentionOutput,
    selection: &SelectionResult,
    cache: &PagedKvCache,
    entmax_support: &[usize],
) -> Result<ApproxReport> {
    evaluate_with(full, sparse, selection, cache, Some(entmax_support))
}

fn evaluate_with(
    full: &AttentionOutput,
    sparse: &AttentionOutput,
    selection: &SelectionResult,
    cache: &PagedKvCache,
    entmax_support: Option<&[usize]>,
) -> Result<ApproxReport> {
    match (full.transform, sparse.transform) {
        (Some(a), Some(b)) if a == b => {}
        _ => {
            return Err(Error::TransformMismatch {
                full: transform_name(full),
                sparse: transform_name(sparse),
            })
        }
    }
    let n = cache.len();
    if full.evaluated.len() != n {
        return Err(Error::LengthMismatch {
            left: full.evaluated.len(),
            right: n,
        });
    }

    let keep = &sparse.evaluated;
    let delta = full.dist.mass_outside(keep).clamp(0.0, 1.0);

    let (support, support_def): (Vec<usize>, SupportDef) = match entmax_support {
        Some(s) => {
            let mut s = s.to_vec();
            s.sort_unstable();
            s.dedup();
            (s, SupportDef::EntmaxReference)
        }
        None => (full.dist.support().to_vec(), SupportDef::TransformNative),
    };
    let support_retained = sorted_intersection_count(&support, keep);
    let rho = if support.is_empty() {
        1.0
    } else {
        support_retained as f64 / support.len() as f64
    };

    let diff: Vec<f64> = full
        .output
        .iter()
        .zip(&sparse.output)
        .map(|(a, b)| a - b)
        .collect();
    let diff_norm = norm2(&diff);
    let full_norm = norm2(&full.output);
    let (rel_error, rel_error_is_absolute) = if full_norm < 1e-12 {
        if diff_norm < 1e-12 {
            (0.0, false)
        } else {
            (diff_norm, true)
        }
    } else {
        (diff_norm / full_norm, false)
    };

    let value_bound = (0..n).map(|j| norm2(cache.value(j))).fold(0.0, f64::max);
    let bound_slack = 2.0 * value_bound * delta - diff_norm;

    let charge_metadata = selection.diagnostics.policy.reads_metadata();
    Ok(ApproxReport {
        delta,
        rho,
        rel_error,
        rel_error_is_absolute,
        bound_slack,
        coverage: keep.len() as f64 / n as f64,
        kv_bytes_sparse: cache.traffic_bytes(keep, charge_metadata),
        kv_bytes_full: cache.kv_traffic_bytes(n),
        support_def,
        support_size: support.len(),
        support_retained,
    })
}

/// Split the dropped-mass gap between softmax and entmax over the same
/// dropped set into the support-miss term (dropped tokens inside the entmax
/// support) and the softmax tail term (dropped tokens outside it, always
/// nonnegative). The two sum to delta_softmax - delta_entmax.
pub fn advantage_decomposition(
    full_softmax: &AttentionDist,
    full_entmax: &AttentionDist,
    drop: &[usize],
) -> Result<(f64, f64)> {
    let n = full_softmax.len();
    if full_entmax.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: full_entmax.len(),
        });
    }
    let mut dropped: Vec<usize> = drop.to_vec();
    dropped.sort_unstable();
    dropped.dedup();
    if let Some(&bad) = dropped.iter().find(|&&i| i >= n) {
        return Err(Error::TokenOutOfRange {
            token: bad,
            tokens: n,
        });
    }
    let mut support_miss = 0.0;
    let mut tail = 0.0;
    for &i in &dropped {
        let p_sm = full_softmax.probs()[i];
        let p_ent = full_entmax.probs()[i];
        if p_ent > 0.0 {
            support_miss += p_sm - p_ent;
        } else {
            tail += p_sm;
        }
    }
    Ok((support_miss, tail))
}
