//! Planted-key retrieval task.
//!
//! A desk-scale retrieval proxy: one key per query is planted in the cache
//! aligned with that query. A decode step counts as retrieved when the
//! attention output's nearest value vector by cosine similarity is the
//! planted one. This stands in for token-level passkey generation with a
//! trained model; it measures the same selection failure mode without one.

use std::io::Write;

use anyhow::Context;
use paged_entmax::{Alpha, PagedKvCache};
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, Method, Workload};
use crate::sweep::decode_step;
use crate::workload::generate_workload_at_depth;

pub const PLANTED_CSV_HEADER: &str =
    "method,alpha,n,d,dv,page_size,budget_tokens,depth,seed,trials,queries,retrieved,rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub method: Method,
    pub alpha: f64,
    pub n: usize,
    pub d: usize,
    pub dv: usize,
    pub page_size: usize,
    pub budget_tokens: usize,
    pub depth: f64,
    pub seed: u64,
    pub trials: usize,
    pub queries: usize,
    pub retrieved: usize,
    pub rate: f64,
}

impl PlantedRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.alpha,
            self.n,
            self.d,
            self.dv,
            self.page_size,
            self.budget_tokens,
            self.depth,
            self.seed,
            self.trials,
            self.queries,
            self.retrieved,
            self.rate,
        )
    }
}

pub fn write_planted_csv<W: Write>(records: &[PlantedRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{PLANTED_CSV_HEADER}")?;
    for record in records {
        writeln!(w, "{}", record.csv_row())?;
    }
    Ok(())
}

pub fn write_planted_json<W: Write>(records: &[PlantedRecord], w: &mut W) -> std::io::Result<()> {
    let body = serde_json::to_string_pretty(records)?;
    writeln!(w, "{body}")
}

/// Index of the value vector nearest to `output` by cosine similarity;
/// None when the output is numerically zero. Ties break to the lower index.
pub fn nearest_value_by_cosine(output: &[f64], cache: &PagedKvCache) -> Option<usize> {
    let out_norm = output.iter().map(|x| x * x).sum::<f64>().sqrt();
    if out_norm < 1e-12 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for j in 0..cache.len() {
        let value = cache.value(j);
        let norm = value.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let cos = output.iter().zip(value).map(|(a, b)| a * b).sum::<f64>() / (out_norm * norm);
        let better = match best {
            None => true,
            Some((_, b)) => cos > b,
        };
        if better {
            best = Some((j, cos));
        }
    }
    best.map(|(j, _)| j)
}

/// Retrieval rate by (n, budget, depth): fraction of decode steps whose
/// output's nearest value is the planted one.
pub fn planted_retrieval(config: &BenchConfig) -> anyhow::Result<Vec<PlantedRecord>> {
    let mut planted_config = config.clone();
    planted_config.workload = Workload::PlantedKey;
    planted_config.validate().map_err(anyhow::Error::msg)?;
    let config = &planted_config;
    let alpha = Alpha::new(config.alpha).ok();
    let mut records = Vec::new();

    for &n in &config.n {
        for &method in &config.methods {
            if method.is_entmax() && alpha.is_none() {
                anyhow::bail!("method {} requires alpha > 1", method.name());
            }
            let budgets: Vec<Option<f64>> = if method.takes_budget() {
                config.budgets.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for budget in &budgets {
                let k_pages = budget.map(|b| config.pages_for_budget(b, n));
                for &depth in &config.depths {
                    let mut retrieved = 0usize;
                    let mut queries = 0usize;
                    for trial in 0..config.trials {
                        let (cache, stream) = generate_workload_at_depth(config, n, trial, depth)?;
                        let counts = cache.page_counts();
                        let gauss = alpha.map(|a| {
                            paged_entmax::GaussianSelectorConfig::new(a)
                                .with_q_page(config.q_page)
                                .with_delta_margin(config.delta_margin)
                        });
                        for (query, planted) in stream.queries.iter().zip(&stream.planted) {
                            let target =
                                planted.context("planted workload must record positions")?;
                            let (_, sparse) = decode_step(
                                method,
                                &cache,
                                &counts,
                                query,
                                k_pages,
                                alpha,
                                gauss.as_ref(),
                            )?;
                            queries += 1;
                            if nearest_value_by_cosine(&sparse.output, &cache) == Some(target) {
                                retrieved += 1;
                            }
                        }
                    }
                    let budget_tokens = match method {
                        Method::FullSoftmax | Method::FullEntmax => n,
                        Method::GaussianEntmax => 0,
                        Method::TopkSoftmax | Method::TopkEntmax => {
                            (k_pages.unwrap_or(0) * config.page_size).min(n)
                        }
                    };
                    records.push(PlantedRecord {
                        method,
                        alpha: config.alpha,
                        n,
                        d: config.d,
                        dv: config.dv,
                        page_size: config.page_size,
                        budget_tokens,
                        depth,
                        seed: config.seed,
                        trials: config.trials,
                        queries,
                        retrieved,
                        rate: retrieved as f64 / queries as f64,
                    });
                }
            }
        }
    }
    Ok(records)
}
