//! Candidate-page selection policies.
//!
//! Two policies over per-page scores:
//!
//! * fixed-budget top-k on the deterministic box bounds, and
//! * a Gaussian-aware entmax selector. It models the score of a random
//!   token in page p as N(mu_p, sigma_p^2), solves the page-level
//!   normalization equation
//!
//!   ```text
//!   sum_p |P_p| * E[((alpha-1) S_p - tau)_+^beta] = 1
//!   ```
//!
//!   for an estimated threshold tau_hat (closed forms exist for
//!   alpha in {4/3, 3/2, 2}, where beta = 1/(alpha-1) is an integer), and
//!   keeps pages whose confidence-level maximum score clears
//!   tau_hat - delta.
//!
//! A conservative variant keeps every page whose box bound clears a given
//! lower bound on the true threshold; that selection provably contains all
//! support-bearing pages.

use crate::entmax::Alpha;
use crate::error::{Error, Result};
use crate::normal::{inverse_norm_cdf, norm_cdf, norm_pdf};
use crate::scoring::PageScores;

/// How a selection was produced. Full-cache runs charge no metadata
/// traffic; the selector policies do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    Full,
    TopK,
    Gaussian,
    ConservativeBox,
}

impl SelectionPolicy {
    pub fn reads_metadata(self) -> bool {
        !matches!(self, SelectionPolicy::Full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDiagnostics {
    pub policy: SelectionPolicy,
    /// Score per page as used by the policy (box bound or Gaussian page
    /// maximum), aligned with page indices.
    pub page_scores: Vec<f64>,
    /// Safety margin applied (0 unless the Gaussian policy used one).
    pub margin: f64,
    /// True when the threshold kept nothing and the fallback page was used.
    pub fallback_used: bool,
}

/// Selected pages plus the implied token set.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected page indices. Top-k lists them best-first; threshold
    /// policies list them in ascending page order.
    pub pages: Vec<usize>,
    /// Union of the owned token ranges, ascending, no duplicates.
    pub tokens: Vec<usize>,
    /// Estimated entmax threshold (Gaussian selector only).
    pub tau_hat: Option<f64>,
    pub diagnostics: SelectionDiagnostics,
}

impl SelectionResult {
    /// Trivial selection covering the whole cache.
    pub fn full(page_counts: &[usize]) -> Self {
        let total: usize = page_counts.iter().sum();
        Self {
            pages: (0..page_counts.len()).collect(),
            tokens: (0..total).collect(),
            tau_hat: None,
            diagnostics: SelectionDiagnostics {
                policy: SelectionPolicy::Full,
                page_scores: Vec::new(),
                margin: 0.0,
                fallback_used: false,
            },
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }
}

/// Token indices owned by the selected pages, given per-page token counts.
/// Pages own contiguous ranges in page order.
fn tokens_for_pages(pages: &[usize], counts: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for &c in counts {
        acc += c;
        offsets.push(acc);
    }
    let mut sorted = pages.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut tokens = Vec::new();
    for &p in &sorted {
        tokens.extend(offsets[p]..offsets[p + 1]);
    }
    tokens
}

/// Configuration for the Gaussian-aware selector. The closed-form solver
/// accepts alpha in {4/3, 3/2, 2} only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSelectorConfig {
    pub alpha: Alpha,
    /// Confidence level for the per-page maximum estimate, in (0, 1).
    pub q_page: f64,
    /// Safety margin delta >= 0; larger keeps more pages.
    pub delta_margin: f64,
    /// Residual tolerance for the threshold solve.
    pub solver_tol: f64,
    pub iter_cap: usize,
}

impl GaussianSelectorConfig {
    pub fn new(alpha: Alpha) -> Self {
        Self {
            alpha,
            q_page: 0.99,
            delta_margin: 0.0,
            solver_tol: 1e-10,
            iter_cap: 200,
        }
    }

    pub fn with_q_page(mut self, q_page: f64) -> Self {
        self.q_page = q_page;
        self
    }

    pub fn with_delta_margin(mut self, delta: f64) -> Self {
        self.delta_margin = delta;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.q_page > 0.0 && self.q_page < 1.0) {
            return Err(Error::InvalidConfidence { q: self.q_page });
        }
        if self.delta_margin < 0.0 || !self.delta_margin.is_finite() {
            return Err(Error::InvalidConfidence {
                q: self.delta_margin,
            });
        }
        Ok(())
    }
}

/// One page's score model: mean, standard deviation, and token count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageMoment {
    pub mu: f64,
    pub sigma: f64,
    pub count: usize,
}

/// Integer exponents with closed-form truncated Gaussian moments.
fn closed_form_beta(alpha: Alpha) -> Result<u32> {
    let v = alpha.value();
    if (v - 2.0).abs() < 1e-12 {
        Ok(1)
    } else if (v - 1.5).abs() < 1e-12 {
        Ok(2)
    } else if (v - 4.0 / 3.0).abs() < 1e-12 {
        Ok(3)
    } else {
        Err(Error::NoClosedForm { alpha: v })
    }
}

/// `E[((alpha-1) S - tau)_+^beta]` for `S ~ N(mu, sigma^2)`, via the
/// truncated Gaussian moment of order beta. With
/// `mu_y = (alpha-1) mu - tau`, `sigma_y = (alpha-1) sigma`,
/// `t = mu_y / sigma_y`:
///
/// ```text
/// beta = 1:  mu_y Phi(t) + sigma_y phi(t)
/// beta = 2:  (mu_y^2 + sigma_y^2) Phi(t) + mu_y sigma_y phi(t)
/// beta = 3:  (mu_y^3 + 3 mu_y sigma_y^2) Phi(t) + (mu_y^2 sigma_y + 2 sigma_y^3) phi(t)
/// ```
///
/// At sigma = 0 this degenerates to the point mass `[mu_y]_+^beta`.
pub fn expected_entmax_mass(mu: f64, sigma: f64, tau: f64, alpha: Alpha) -> Result<f64> {
    let beta = closed_form_beta(alpha)?;
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    Ok(truncated_moment(
        alpha.a() * mu - tau,
        alpha.a() * sigma,
        beta,
    ))
}

/// `E[(Y)_+^beta]` for `Y ~ N(mu_y, sigma_y^2)`, beta in {1, 2, 3}.
/// Clamped at zero: far in the left tail the two closed-form terms cancel
/// below f64 resolution and can round to a tiny negative number.
fn truncated_moment(mu_y: f64, sigma_y: f64, beta: u32) -> f64 {
    if sigma_y == 0.0 {
        return if mu_y > 0.0 {
            mu_y.powi(beta as i32)
        } else {
            0.0
        };
    }
    let t = mu_y / sigma_y;
    let cdf = norm_cdf(t);
    let pdf = norm_pdf(t);
    let value = match beta {
        1 => mu_y * cdf + sigma_y * pdf,
        2 => (mu_y * mu_y + sigma_y * sigma_y) * cdf + mu_y * sigma_y * pdf,
        3 => {
            (mu_y * mu_y * mu_y + 3.0 * mu_y * sigma_y * sigma_y) * cdf
                + (mu_y * mu_y * sigma_y + 2.0 * sigma_y * sigma_y * sigma_y) * pdf
        }
        _ => unreachable!("closed forms exist for beta in {{1, 2, 3}}"),
    };
    value.max(0.0)
}

/// Total expected mass at threshold `tau` and its derivative in `tau`.
/// d/dtau E[(Y)_+^beta] = -beta E[(Y)_+^(beta-1)], with the order-zero
/// moment being Phi(t).
fn total_mass_and_derivative(pages: &[PageMoment], a: f64, beta: u32, tau: f64) -> (f64, f64) {
    let mut mass = 0.0;
    let mut deriv = 0.0;
    for page in pages {
        let mu_y = a * page.mu - tau;
        let sigma_y = a * page.sigma;
        let count = page.count as f64;
        mass += count * truncated_moment(mu_y, sigma_y, beta);
        let lower = if beta == 1 {
            if sigma_y == 0.0 {
                if mu_y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                norm_cdf(mu_y / sigma_y)
            }
        } else {
            truncated_moment(mu_y, sigma_y, beta - 1)
        };
        deriv -= count * beta as f64 * lower;
    }
    (mass, deriv)
}

/// Solve the page-level normalization equation for the estimated entmax
/// threshold tau_hat.
///
/// The total expected mass is continuous and strictly decreasing in tau on
/// its active region, so the root is unique. Bracketing: the upper endpoint
/// `a * max_p(mu_p + 6 sigma_p)` leaves essentially no mass; the lower
/// endpoint `a * max_p(mu_p) - 1` guarantees mass >= 1 because the best
/// page alone contributes at least `[a mu - tau]_+^beta >= 1` there
/// (Jensen, beta >= 1). Bisection narrows the bracket, Newton polishes.
pub fn solve_distributional_tau(
    pages: &[PageMoment],
    alpha: Alpha,
    config: &GaussianSelectorConfig,
) -> Result<f64> {
    if pages.is_empty() {
        return Err(Error::EmptyScores);
    }
    assert!(
        pages.iter().all(|p| p.count >= 1),
        "page counts must be >= 1"
    );
    let beta = closed_form_beta(alpha)?;
    let a = alpha.a();

    let mu_max = pages.iter().map(|p| p.mu).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = pages
        .iter()
        .map(|p| a * (p.mu + 6.0 * p.sigma))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut lo = a * mu_max - 1.0;

    // The analytic endpoints hold for sane inputs; expand defensively and
    // report the endpoint masses if they ever fail to straddle the root.
    let mut width = (hi - lo).max(1.0);
    let (mut lo_mass, _) = total_mass_and_derivative(pages, a, beta, lo);
    let mut expansions = 0;
    while lo_mass < 1.0 {
        lo -= width;
        width *= 2.0;
        lo_mass = total_mass_and_derivative(pages, a, beta, lo).0;
        expansions += 1;
        if expansions > 64 {
            let hi_mass = total_mass_and_derivative(pages, a, beta, hi).0;
            return Err(Error::BracketFailure { lo_mass, hi_mass });
        }
    }
    let (mut hi_mass, _) = total_mass_and_derivative(pages, a, beta, hi);
    expansions = 0;
    width = (hi - lo).max(1.0);
    while hi_mass >= 1.0 {
        hi += width;
        width *= 2.0;
        hi_mass = total_mass_and_derivative(pages, a, beta, hi).0;
        expansions += 1;
        if expansions > 64 {
            return Err(Error::BracketFailure { lo_mass, hi_mass });
        }
    }

    let mut tau = 0.5 * (lo + hi);
    let mut last = f64::INFINITY;
    for iteration in 0..config.iter_cap {
        let (mass, deriv) = total_mass_and_derivative(pages, a, beta, tau);
        let residual = mass - 1.0;
        last = residual;
        if residual.abs() <= config.solver_tol {
            return Ok(tau);
        }
        if residual > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        // Newton once the bracket is tight enough for the step to be
        // trustworthy; pure bisection before that.
        let newton_ok = deriv != 0.0 && (hi - lo) < 1e-2 * (1.0 + tau.abs());
        tau = if newton_ok {
            let cand = tau - residual / deriv;
            if cand > lo && cand < hi {
                cand
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let _ = iteration;
    }
    Err(Error::Convergence {
        residual: last,
        iterations: config.iter_cap,
    })
}

/// Confidence-level estimate of the maximum score among `count` tokens
/// modeled as i.i.d. N(mu, sigma^2): `mu + sigma * Phi^{-1}(q^(1/count))`.
/// The exponent accounts for the maximum being over the whole page.
pub fn gaussian_page_max(mu: f64, sigma: f64, count: usize, q_page: f64) -> Result<f64> {
    if !(q_page > 0.0 && q_page < 1.0) {
        return Err(Error::InvalidConfidence { q: q_page });
    }
    assert!(count >= 1, "count must be >= 1");
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    if sigma == 0.0 {
        return Ok(mu);
    }
    Ok(mu + sigma * inverse_norm_cdf(q_page.powf(1.0 / count as f64)))
}

/// Fixed-budget policy: the min(k, M) pages with the largest box bounds,
/// best first. Ties break toward the lower page index.
pub fn select_topk(scores: &PageScores, counts: &[usize], k: usize) -> Result<SelectionResult> {
    if k < 1 {
        return Err(Error::InvalidBudget);
    }
    let m = scores.num_pages();
    if m == 0 {
        return Err(Error::EmptyCache);
    }
    debug_assert_eq!(counts.len(), m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        scores.box_bounds[j]
            .partial_cmp(&scores.box_bounds[i])
            .expect("box bounds are finite")
            .then(i.cmp(&j))
    });
    order.truncate(k.min(m));
    let tokens = tokens_for_pages(&order, counts);
    Ok(SelectionResult {
        pages: order,
        tokens,
        tau_hat: None,
        diagnostics: SelectionDiagnostics {
            policy: SelectionPolicy::TopK,
            page_scores: scores.box_bounds.clone(),
            margin: 0.0,
            fallback_used: false,
        },
    })
}

/// Gaussian-aware policy: estimate tau_hat from page moments, then keep
/// pages whose confidence-level maximum clears `tau_hat - delta` (in
/// threshold units, i.e. after the alpha-1 multiplier). Falls back to the
/// single page with the largest mean when the threshold keeps nothing.
pub fn select_gaussian(
    scores: &PageScores,
    counts: &[usize],
    config: &GaussianSelectorConfig,
) -> Result<SelectionResult> {
    config.validate()?;
    let m = scores.num_pages();
    if m == 0 {
        return Err(Error::EmptyCache);
    }
    debug_assert_eq!(counts.len(), m);
    let moments: Vec<PageMoment> = (0..m)
        .map(|p| PageMoment {
            mu: scores.mu[p],
            sigma: scores.sigma2[p].max(0.0).sqrt(),
            count: counts[p],
        })
        .collect();
    let tau_hat = solve_distributional_tau(&moments, config.alpha, config)?;
    let a = config.alpha.a();
    let mut page_scores = Vec::with_capacity(m);
    let mut pages = Vec::new();
    for (p, moment) in moments.iter().enumerate() {
        let s_max = gaussian_page_max(moment.mu, moment.sigma, moment.count, config.q_page)?;
        page_scores.push(s_max);
        if a * s_max > tau_hat - config.delta_margin {
            pages.push(p);
        }
    }
    let mut fallback_used = false;
    if pages.is_empty() {
        let best = (0..m)
            .max_by(|&i, &j| {
                moments[i]
                    .mu
                    .partial_cmp(&moments[j].mu)
                    .expect("moments are finite")
                    .then(j.cmp(&i))
            })
            .expect("at least one page");
        pages.push(best);
        fallback_used = true;
    }
    let tokens = tokens_for_pages(&pages, counts);
    Ok(SelectionResult {
        pages,
        tokens,
        tau_hat: Some(tau_hat),
        diagnostics: SelectionDiagnostics {
            policy: SelectionPolicy::Gaussian,
            page_scores,
            margin: config.delta_margin,
            fallback_used,
        },
    })
}

/// Keep every page whose deterministic box bound clears `tau_lower`. When
/// `tau_lower` is at most the true entmax threshold, the selected tokens
/// are a superset of the entmax support: a support token has
/// `(alpha-1) s_i > tau >= tau_lower`, and its page's box bound dominates
/// its score, so its page always clears the test.
pub fn conservative_box_select(
    scores: &PageScores,
    counts: &[usize],
    tau_lower: f64,
    alpha: Alpha,
) -> Result<SelectionResult> {
    let m = scores.num_pages();
    if m == 0 {
        return Err(Error::EmptyCache);
    }
    debug_assert_eq!(counts.len(), m);
    let a = alpha.a();
    let mut pages: Vec<usize> = (0..m)
        .filter(|&p| a * scores.box_bounds[p] > tau_lower)
        .collect();
    let mut fallback_used = false;
    if pages.is_empty() {
        let best = (0..m)
            .max_by(|&i, &j| {
                scores.box_bounds[i]
                    .partial_cmp(&scores.box_bounds[j])
                    .expect("box bounds are finite")
                    .then(j.cmp(&i))
            })
            .expect("at least one page");
        pages.push(best);
        fallback_used = true;
    }
    let tokens = tokens_for_pages(&pages, counts);
    Ok(SelectionResult {
        pages,
        tokens,
        tau_hat: None,
        diagnostics: SelectionDiagnostics {
            policy: SelectionPolicy::ConservativeBox,
            page_scores: scores.box_bounds.clone(),
            margin: 0.0,
            fallback_used,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(box_bounds: Vec<f64>, mu: Vec<f64>, sigma2: Vec<f64>) -> PageScores {
        PageScores {
            box_bounds,
            mu,
            sigma2,
        }
    }

    #[test]
    fn topk_picks_argmax() {
        let s = scores(vec![1.0, 5.0, 3.0], vec![0.0; 3], vec![0.0; 3]);
        let sel = select_topk(&s, &[2, 2, 2], 1).unwrap();
        assert_eq!(sel.pages, vec![1]);
        assert_eq!(sel.tokens, vec![2, 3]);
    }

    #[test]
    fn topk_saturates_at_all_pages() {
        let s = scores(vec![1.0, 5.0, 3.0], vec![0.0; 3], vec![0.0; 3]);
        let sel = select_topk(&s, &[2, 2, 1], 10).unwrap();
        assert_eq!(sel.tokens, vec![0, 1, 2, 3, 4]);
        assert_eq!(sel.pages.len(), 3);
    }

    #[test]
    fn topk_tie_breaks_to_lower_index() {
        let s = scores(vec![7.0, 7.0, 2.0], vec![0.0; 3], vec![0.0; 3]);
        let sel = select_topk(&s, &[1, 1, 1], 1).unwrap();
        assert_eq!(sel.pages, vec![0]);
    }

    #[test]
    fn topk_rejects_zero_budget() {
        let s = scores(vec![1.0], vec![0.0], vec![0.0]);
        assert!(matches!(
            select_topk(&s, &[1], 0),
            Err(Error::InvalidBudget)
        ));
    }

    #[test]
    fn mass_symmetric_half_moment() {
        // alpha = 2, mu = tau: mu_y = 0, so the mass is sigma * phi(0).
        let alpha = Alpha::sparsemax();
        let mass = expected_entmax_mass(0.7, 1.0, 0.7, alpha).unwrap();
        assert!((mass - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn mass_point_mass_at_zero_sigma() {
        let alpha = Alpha::sparsemax();
        let mass = expected_entmax_mass(0.5, 0.0, 0.25, alpha).unwrap();
        assert!((mass - 0.25).abs() < 1e-15);
        // Below threshold: exactly zero.
        assert_eq!(expected_entmax_mass(0.1, 0.0, 0.25, alpha).unwrap(), 0.0);
    }

    #[test]
    fn mass_rejects_alpha_without_closed_form() {
        let alpha = Alpha::new(1.7).unwrap();
        assert!(matches!(
            expected_entmax_mass(0.0, 1.0, 0.0, alpha),
            Err(Error::NoClosedForm { .. })
        ));
    }

    #[test]
    fn mass_nonincreasing_in_tau() {
        for &(alpha, _beta) in &[(2.0, 1), (1.5, 2), (4.0 / 3.0, 3)] {
            let alpha = Alpha::new(alpha).unwrap();
            let mut prev = f64::INFINITY;
            let mut tau = -4.0;
            while tau <= 4.0 {
                let mass = expected_entmax_mass(0.3, 0.8, tau, alpha).unwrap();
                assert!(mass <= prev + 1e-12, "mass increased at tau={tau}");
                assert!(mass >= 0.0);
                prev = mass;
                tau += 0.05;
            }
        }
    }

    #[test]
    fn distributional_tau_point_mass_reduces_to_exact() {
        let alpha = Alpha::sparsemax();
        let config = GaussianSelectorConfig::new(alpha);
        let pages = [PageMoment {
            mu: 3.0,
            sigma: 0.0,
            count: 1,
        }];
        let tau = solve_distributional_tau(&pages, alpha, &config).unwrap();
        assert!((tau - 2.0).abs() < 1e-9, "tau = {tau}");

        let two = [
            PageMoment {
                mu: 3.0,
                sigma: 0.0,
                count: 1,
            },
            PageMoment {
                mu: 0.0,
                sigma: 0.0,
                count: 1,
            },
        ];
        let tau = solve_distributional_tau(&two, alpha, &config).unwrap();
        assert!((tau - 2.0).abs() < 1e-9, "tau = {tau}");
    }

    #[test]
    fn distributional_tau_residual_meets_tolerance() {
        for alpha in [2.0, 1.5, 4.0 / 3.0] {
            let alpha = Alpha::new(alpha).unwrap();
            let config = GaussianSelectorConfig::new(alpha);
            let pages: Vec<PageMoment> = (0..8)
                .map(|p| PageMoment {
                    mu: (p as f64 * 0.37).sin(),
                    sigma: 0.5 + 0.1 * p as f64,
                    count: 128,
                })
                .collect();
            let tau = solve_distributional_tau(&pages, alpha, &config).unwrap();
            let (mass, _) =
                total_mass_and_derivative(&pages, alpha.a(), closed_form_beta(alpha).unwrap(), tau);
            assert!((mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn page_max_median_of_single_draw_is_mu() {
        let got = gaussian_page_max(1.3, 2.0, 1, 0.5).unwrap();
        assert!((got - 1.3).abs() < 1e-12);
    }

    #[test]
    fn page_max_degenerate_sigma() {
        for q in [0.01, 0.5, 0.999] {
            assert_eq!(gaussian_page_max(-0.4, 0.0, 64, q).unwrap(), -0.4);
        }
    }

    #[test]
    fn page_max_rejects_bad_confidence() {
        assert!(matches!(
            gaussian_page_max(0.0, 1.0, 4, 0.0),
            Err(Error::InvalidConfidence { .. })
        ));
        assert!(gaussian_page_max(0.0, 1.0, 4, 1.0).is_err());
    }

    #[test]
    fn gaussian_selector_keeps_single_page() {
        let s = scores(vec![1.0], vec![2.0], vec![0.5]);
        let config = GaussianSelectorConfig::new(Alpha::sparsemax());
        let sel = select_gaussian(&s, &[4], &config).unwrap();
        assert_eq!(sel.pages, vec![0]);
        assert_eq!(sel.tokens, vec![0, 1, 2, 3]);
        assert!(sel.tau_hat.is_some());
    }

    #[test]
    fn gaussian_selector_margin_saturates() {
        let s = scores(
            vec![0.0; 4],
            vec![3.0, -1.0, -5.0, 0.0],
            vec![0.2, 0.2, 0.2, 0.2],
        );
        let config = GaussianSelectorConfig::new(Alpha::sparsemax()).with_delta_margin(1e6);
        let sel = select_gaussian(&s, &[2, 2, 2, 2], &config).unwrap();
        assert_eq!(sel.pages, vec![0, 1, 2, 3]);
    }

    #[test]
    fn gaussian_selector_page_set_grows_with_margin_and_confidence() {
        let s = scores(vec![0.0; 5], vec![2.0, 1.0, 0.0, -1.0, -2.0], vec![0.3; 5]);
        let counts = [8usize; 5];
        let alpha = Alpha::sparsemax();
        let mut prev = 0usize;
        for delta in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let config = GaussianSelectorConfig::new(alpha).with_delta_margin(delta);
            let sel = select_gaussian(&s, &counts, &config).unwrap();
            assert!(sel.pages.len() >= prev, "pages shrank at delta={delta}");
            prev = sel.pages.len();
        }
        let mut prev = 0usize;
        for q in [0.1, 0.5, 0.9, 0.99] {
            let config = GaussianSelectorConfig::new(alpha).with_q_page(q);
            let sel = select_gaussian(&s, &counts, &config).unwrap();
            assert!(sel.pages.len() >= prev, "pages shrank at q={q}");
            prev = sel.pages.len();
        }
    }

    #[test]
    fn conservative_select_keeps_everything_at_minus_infinity() {
        let s = scores(vec![0.3, -2.0, 1.1], vec![0.0; 3], vec![0.0; 3]);
        let sel =
            conservative_box_select(&s, &[2, 2, 2], f64::NEG_INFINITY, Alpha::sparsemax()).unwrap();
        assert_eq!(sel.pages, vec![0, 1, 2]);
        assert!(!sel.diagnostics.fallback_used);
    }

    #[test]
    fn conservative_single_page_selected_when_support_nonempty() {
        // One page, tau_lower at the true threshold: the support is always
        // nonempty, so the page's box bound clears the test.
        let alpha = Alpha::sparsemax();
        // Single token with score 1.2: tau = 0.2, box >= score.
        let s = scores(vec![1.2], vec![1.2], vec![0.0]);
        let sel = conservative_box_select(&s, &[1], 0.2, alpha).unwrap();
        assert_eq!(sel.pages, vec![0]);
        assert!(!sel.diagnostics.fallback_used);
    }

    #[test]
    fn tokens_are_sorted_union_without_duplicates() {
        let s = scores(vec![5.0, 1.0, 4.0], vec![0.0; 3], vec![0.0; 3]);
        let sel = select_topk(&s, &[3, 3, 2], 2).unwrap();
        assert_eq!(sel.pages, vec![0, 2]);
        assert_eq!(sel.tokens, vec![0, 1, 2, 6, 7]);
    }
}
