//! Attention outputs over a paged cache.
//!
//! Three evaluation paths:
//!
//! * [`full_attention`] — exact scores over the whole cache, one transform,
//!   the reference output.
//! * [`sparse_attention`] — scores computed only for the selected token
//!   set, transform re-run on the restricted vector. Tokens outside the
//!   selection have probability zero. When the selection covers the full
//!   entmax support this equals the full output exactly.
//! * [`truncate_renormalize`] — drop a subset of a *full* distribution and
//!   rescale the remainder by 1/(1-delta). This is the object the 2B*delta
//!   error bound speaks about; it differs from re-running the transform
//!   unless the support is covered (entmax) or the transform is softmax,
//!   where the two coincide identically.

use crate::cache::PagedKvCache;
use crate::entmax::{entmax_with_init, softmax, Alpha, AttentionDist, ScoreVector};
use crate::error::{Error, Result};
use crate::matrix::{dot, RowMatrix};
use crate::selection::SelectionResult;

/// Probability transform applied to attention scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Softmax,
    Entmax(Alpha),
}

impl Transform {
    pub fn is_entmax(self) -> bool {
        matches!(self, Transform::Entmax(_))
    }

    pub fn name(self) -> String {
        match self {
            Transform::Softmax => "softmax".to_string(),
            Transform::Entmax(alpha) => format!("entmax({})", alpha.value()),
        }
    }
}

/// One attention evaluation: the output vector, the distribution over the
/// evaluated tokens (locally indexed), and which global tokens those are.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Vec<f64>,
    pub dist: AttentionDist,
    /// Global token indices the distribution ranges over, ascending.
    pub evaluated: Vec<usize>,
    /// Transform that produced the distribution; None for renormalized
    /// truncations, which are transform-agnostic.
    pub transform: Option<Transform>,
}

fn scaled_scores(query: &[f64], cache: &PagedKvCache, tokens: &[usize]) -> Result<ScoreVector> {
    let d = cache.config().head_dim;
    if query.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores = Vec::with_capacity(tokens.len());
    for &j in tokens {
        if j >= cache.len() {
            return Err(Error::TokenOutOfRange {
                token: j,
                tokens: cache.len(),
            });
        }
        scores.push(dot(query, cache.key(j)) * scale);
    }
    ScoreVector::new_scaled(scores)
}

fn apply_transform(
    scores: &ScoreVector,
    transform: Transform,
    tau_init: Option<f64>,
) -> Result<AttentionDist> {
    match transform {
        Transform::Softmax => softmax(scores),
        Transform::Entmax(alpha) => entmax_with_init(scores, alpha, tau_init),
    }
}

fn weighted_values(dist: &AttentionDist, tokens: &[usize], cache: &PagedKvCache) -> Vec<f64> {
    let mut output = vec![0.0; cache.config().value_dim];
    for (local, &global) in tokens.iter().enumerate() {
        let p = dist.probs()[local];
        if p > 0.0 {
            for (o, &v) in output.iter_mut().zip(cache.value(global)) {
                *o += p * v;
            }
        }
    }
    output
}

/// Exact attention over every cached token.
pub fn full_attention(
    query: &[f64],
    cache: &PagedKvCache,
    transform: Transform,
) -> Result<AttentionOutput> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    let tokens: Vec<usize> = (0..cache.len()).collect();
    let scores = scaled_scores(query, cache, &tokens)?;
    let dist = apply_transform(&scores, transform, None)?;
    let output = weighted_values(&dist, &tokens, cache);
    Ok(AttentionOutput {
        output,
        dist,
        evaluated: tokens,
        transform: Some(transform),
    })
}

/// Attention restricted to the selected token set. The transform is re-run
/// on the restricted scores; unselected tokens implicitly carry zero
/// probability. For entmax the selection's estimated threshold, when
/// present, warm-starts the exact solve.
pub fn sparse_attention(
    query: &[f64],
    cache: &PagedKvCache,
    selection: &SelectionResult,
    transform: Transform,
) -> Result<AttentionOutput> {
    sparse_attention_with_init(query, cache, selection, transform, selection.tau_hat)
}

/// As [`sparse_attention`] with an explicit warm-start threshold. The warm
/// start only seeds the solver; the distribution is still solved exactly.
pub fn sparse_attention_with_init(
    query: &[f64],
    cache: &PagedKvCache,
    selection: &SelectionResult,
    transform: Transform,
    tau_init: Option<f64>,
) -> Result<AttentionOutput> {
    if selection.tokens.is_empty() {
        return Err(Error::EmptySelection);
    }
    let scores = scaled_scores(query, cache, &selection.tokens)?;
    let dist = apply_transform(&scores, transform, tau_init)?;
    let output = weighted_values(&dist, &selection.tokens, cache);
    Ok(AttentionOutput {
        output,
        dist,
        evaluated: selection.tokens.clone(),
        transform: Some(transform),
    })
}

/// Drop every token outside `keep` from a full distribution, renormalize
/// the kept probabilities by 1/(1-delta), and recompute the output.
/// Returns the truncated output and the dropped mass delta.
///
/// Errors with `DegenerateTruncation` when the kept set carries no mass.
pub fn truncate_renormalize(
    full_dist: &AttentionDist,
    keep: &[usize],
    values: &RowMatrix,
) -> Result<(AttentionOutput, f64)> {
    let n = full_dist.len();
    if values.rows() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: values.rows(),
        });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&i| i >= n) {
        return Err(Error::TokenOutOfRange {
            token: bad,
            tokens: n,
        });
    }
    let delta = full_dist.mass_outside(&kept);
    let kept_mass: f64 = kept.iter().map(|&i| full_dist.probs()[i]).sum();
    let scale = 1.0 - delta;
    if kept_mass <= 0.0 || scale <= 0.0 {
        return Err(Error::DegenerateTruncation);
    }
    let probs: Vec<f64> = kept.iter().map(|&i| full_dist.probs()[i] / scale).collect();
    let mut output = vec![0.0; values.cols()];
    for (local, &global) in kept.iter().enumerate() {
        let p = probs[local];
        if p > 0.0 {
            for (o, &v) in output.iter_mut().zip(values.row(global)) {
                *o += p * v;
            }
        }
    }
    let dist = AttentionDist::from_probs(probs)?;
    Ok((
        AttentionOutput {
            output,
            dist,
            evaluated: kept,
            transform: None,
        },
        delta,
    ))
}
