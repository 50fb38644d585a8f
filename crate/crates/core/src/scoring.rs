//! Query-aware page scores computed from page metadata only.
//!
//! Two summaries per page: a deterministic upper bound on any token score
//! inside the page (from the coordinate-wise key box), and the mean /
//! variance of the score of a randomly chosen token in the page under a
//! diagonal Gaussian model of the keys. The variance deliberately ignores
//! cross-coordinate covariance; it is computable from metadata alone.

use crate::cache::{PageMetadata, PagedKvCache};
use crate::error::{Error, Result};
use crate::matrix::dot;

/// Per-page scores for one query, aligned with page indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PageScores {
    /// Deterministic score upper bound per page.
    pub box_bounds: Vec<f64>,
    /// Mean token score per page under the Gaussian model.
    pub mu: Vec<f64>,
    /// Score variance per page; nonnegative.
    pub sigma2: Vec<f64>,
}

impl PageScores {
    pub fn num_pages(&self) -> usize {
        self.box_bounds.len()
    }
}

/// Upper bound on the score of any token in the page:
/// `(1/sqrt(d)) * sum_i max(q_i k_min_i, q_i k_max_i)`.
///
/// No token in the page can score higher, because each coordinate of its
/// key lies inside [k_min_i, k_max_i].
pub fn box_bound(query: &[f64], page: &PageMetadata) -> Result<f64> {
    let d = page.k_min.len();
    if query.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    let mut total = 0.0;
    for ((&q, &lo), &hi) in query.iter().zip(&page.k_min).zip(&page.k_max) {
        total += (q * lo).max(q * hi);
    }
    Ok(total / (d as f64).sqrt())
}

/// Mean and variance of the score of a random token in the page:
/// `mu = q . k_avg / sqrt(d)`, `sigma2 = (1/d) sum_i q_i^2 k_std_i^2`.
pub fn gaussian_moments(query: &[f64], page: &PageMetadata) -> Result<(f64, f64)> {
    let d = page.k_avg.len();
    if query.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    let mu = dot(query, &page.k_avg) / (d as f64).sqrt();
    let mut sigma2 = 0.0;
    for (&q, &std) in query.iter().zip(&page.k_std) {
        let qs = q * std;
        sigma2 += qs * qs;
    }
    sigma2 /= d as f64;
    Ok((mu, sigma2))
}

/// Both summaries for every page of the cache.
pub fn score_pages(query: &[f64], cache: &PagedKvCache) -> Result<PageScores> {
    let m = cache.num_pages();
    let mut box_bounds = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    let mut sigma2 = Vec::with_capacity(m);
    for page in cache.pages() {
        box_bounds.push(box_bound(query, page)?);
        let (m1, v) = gaussian_moments(query, page)?;
        mu.push(m1);
        sigma2.push(v);
    }
    Ok(PageScores {
        box_bounds,
        mu,
        sigma2,
    })
}
