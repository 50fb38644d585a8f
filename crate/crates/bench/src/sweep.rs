//! Method/budget sweep: one decode step per query against the matching
//! full-cache oracle, aggregated per trial, with a warm-up/timed-iteration
//! protocol around the selection + attention path.

use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, Context};
use paged_entmax::{
    full_attention, score_pages, select_gaussian, select_topk, sparse_attention, Alpha,
    ApproxReport, AttentionOutput, GaussianSelectorConfig, PagedKvCache, SelectionResult,
    Transform,
};

use crate::config::{BenchConfig, Method};
use crate::record::{mean, median, percentile, BenchRecord};
use crate::workload::generate_workload;

/// Selection plus sparse attention for one query. This is the path the
/// timing protocol measures; full-cache methods are their own "sparse"
/// path.
pub fn decode_step(
    method: Method,
    cache: &PagedKvCache,
    counts: &[usize],
    query: &[f64],
    k_pages: Option<usize>,
    alpha: Option<Alpha>,
    gauss: Option<&GaussianSelectorConfig>,
) -> anyhow::Result<(SelectionResult, AttentionOutput)> {
    let entmax = || -> anyhow::Result<Transform> {
        Ok(Transform::Entmax(
            alpha.context("entmax method requires alpha > 1")?,
        ))
    };
    match method {
        Method::FullSoftmax => {
            let selection = SelectionResult::full(counts);
            let out = full_attention(query, cache, Transform::Softmax)?;
            Ok((selection, out))
        }
        Method::FullEntmax => {
            let transform = entmax()?;
            let selection = SelectionResult::full(counts);
            let out = full_attention(query, cache, transform)?;
            Ok((selection, out))
        }
        Method::TopkSoftmax | Method::TopkEntmax => {
            let k = k_pages.context("top-k method requires a budget")?;
            let scores = score_pages(query, cache)?;
            let selection = select_topk(&scores, counts, k)?;
            let transform = if method == Method::TopkSoftmax {
                Transform::Softmax
            } else {
                entmax()?
            };
            let out = sparse_attention(query, cache, &selection, transform)?;
            Ok((selection, out))
        }
        Method::GaussianEntmax => {
            let transform = entmax()?;
            let config = gauss.context("gaussian method requires selector config")?;
            let scores = score_pages(query, cache)?;
            let selection = select_gaussian(&scores, counts, config)?;
            let out = sparse_attention(query, cache, &selection, transform)?;
            Ok((selection, out))
        }
    }
}

/// Score one decode step against its full-cache oracle. Softmax methods
/// are additionally scored for support retention against the entmax
/// support of the same scores when an alpha is available.
pub fn evaluate_decode(
    method: Method,
    cache: &PagedKvCache,
    query: &[f64],
    selection: &SelectionResult,
    sparse: &AttentionOutput,
    alpha: Option<Alpha>,
) -> anyhow::Result<ApproxReport> {
    if method.is_entmax() {
        let transform = Transform::Entmax(alpha.context("entmax method requires alpha")?);
        let full = full_attention(query, cache, transform)?;
        Ok(paged_entmax::evaluate_step(
            &full, sparse, selection, cache,
        )?)
    } else {
        let full = full_attention(query, cache, Transform::Softmax)?;
        match alpha {
            Some(alpha) => {
                let reference = full_attention(query, cache, Transform::Entmax(alpha))?;
                Ok(paged_entmax::evaluate_step_with_support(
                    &full,
                    sparse,
                    selection,
                    cache,
                    reference.dist.support(),
                )?)
            }
            None => Ok(paged_entmax::evaluate_step(
                &full, sparse, selection, cache,
            )?),
        }
    }
}

fn gaussian_config(config: &BenchConfig, alpha: Alpha) -> GaussianSelectorConfig {
    GaussianSelectorConfig::new(alpha)
        .with_q_page(config.q_page)
        .with_delta_margin(config.delta_margin)
}

/// Run the full sweep: for each (n, method, budget, trial), build the
/// workload, score every query's decode step, time the decode path, and
/// emit one record. Records appear in deterministic loop order.
pub fn run_sweep(config: &BenchConfig) -> anyhow::Result<Vec<BenchRecord>> {
    config.validate().map_err(anyhow::Error::msg)?;
    let alpha = Alpha::new(config.alpha).ok();
    let mut records = Vec::new();

    for &n in &config.n {
        for &method in &config.methods {
            if method.is_entmax() && alpha.is_none() {
                bail!("method {} requires alpha > 1", method.name());
            }
            let budgets: Vec<Option<f64>> = if method.takes_budget() {
                config.budgets.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for budget in budgets {
                for trial in 0..config.trials {
                    let record =
                        run_trial(config, method, n, budget, trial, alpha).with_context(|| {
                            format!(
                                "method {} n {n} budget {budget:?} trial {trial}",
                                method.name()
                            )
                        })?;
                    records.push(record);
                }
            }
        }
    }
    Ok(records)
}

fn run_trial(
    config: &BenchConfig,
    method: Method,
    n: usize,
    budget: Option<f64>,
    trial: usize,
    alpha: Option<Alpha>,
) -> anyhow::Result<BenchRecord> {
    let (cache, stream) = generate_workload(config, n, trial)?;
    let counts = cache.page_counts();
    let k_pages = budget.map(|b| config.pages_for_budget(b, n));
    let gauss = alpha.map(|a| gaussian_config(config, a));

    let mut deltas = Vec::with_capacity(config.heads);
    let mut rhos = Vec::with_capacity(config.heads);
    let mut rel_errs = Vec::with_capacity(config.heads);
    let mut coverages = Vec::with_capacity(config.heads);
    let mut bound_slack_min = f64::INFINITY;
    let mut kv_bytes_sparse = 0u64;
    let mut kv_bytes_full = 0u64;

    for query in &stream.queries {
        let (selection, sparse) = decode_step(
            method,
            &cache,
            &counts,
            query,
            k_pages,
            alpha,
            gauss.as_ref(),
        )?;
        let report = evaluate_decode(method, &cache, query, &selection, &sparse, alpha)?;
        deltas.push(report.delta);
        rhos.push(report.rho);
        rel_errs.push(report.rel_error);
        coverages.push(report.coverage);
        bound_slack_min = bound_slack_min.min(report.bound_slack);
        kv_bytes_sparse += report.kv_bytes_sparse;
        kv_bytes_full += report.kv_bytes_full;
    }

    // Timing: warm-up iterations, then the median over timed iterations of
    // the selection + attention path only. Workload generation and metric
    // evaluation stay outside the measured region.
    for _ in 0..config.warmup_iters {
        for query in &stream.queries {
            let out = decode_step(
                method,
                &cache,
                &counts,
                query,
                k_pages,
                alpha,
                gauss.as_ref(),
            )?;
            black_box(out);
        }
    }
    let mut step_times_us = Vec::with_capacity(config.timed_iters);
    for _ in 0..config.timed_iters {
        let start = Instant::now();
        for query in &stream.queries {
            let out = decode_step(
                method,
                &cache,
                &counts,
                query,
                k_pages,
                alpha,
                gauss.as_ref(),
            )?;
            black_box(out);
        }
        let elapsed = start.elapsed().as_secs_f64() * 1e6;
        step_times_us.push(elapsed / config.heads as f64);
    }

    let budget_tokens = match method {
        Method::FullSoftmax | Method::FullEntmax => n,
        Method::GaussianEntmax => 0,
        Method::TopkSoftmax | Method::TopkEntmax => {
            (k_pages.unwrap_or(0) * config.page_size).min(n)
        }
    };

    Ok(BenchRecord {
        method,
        alpha: config.alpha,
        n,
        d: config.d,
        dv: config.dv,
        page_size: config.page_size,
        budget_tokens,
        coverage: mean(&coverages),
        seed: config.seed,
        trial,
        delta_mean: mean(&deltas),
        delta_p95: percentile(&deltas, 0.95),
        rho_mean: mean(&rhos),
        rel_err_mean: mean(&rel_errs),
        rel_err_p95: percentile(&rel_errs, 0.95),
        bound_slack_min,
        kv_bytes_sparse,
        kv_bytes_full,
        time_us_median: median(&step_times_us),
    })
}
