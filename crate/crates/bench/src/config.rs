//! Sweep configuration: methods, workloads, budgets, and knobs.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

/// Decoding method under test. Full-cache variants are their own oracle;
/// sparse variants are compared against the matching full-cache transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Method {
    FullSoftmax,
    FullEntmax,
    TopkSoftmax,
    TopkEntmax,
    GaussianEntmax,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FullSoftmax => "full_softmax",
            Method::FullEntmax => "full_entmax",
            Method::TopkSoftmax => "topk_softmax",
            Method::TopkEntmax => "topk_entmax",
            Method::GaussianEntmax => "gaussian_entmax",
        }
    }

    pub fn is_entmax(self) -> bool {
        matches!(
            self,
            Method::FullEntmax | Method::TopkEntmax | Method::GaussianEntmax
        )
    }

    /// Sparse methods take budgets; full methods and the adaptive Gaussian
    /// selector do not.
    pub fn takes_budget(self) -> bool {
        matches!(self, Method::TopkSoftmax | Method::TopkEntmax)
    }

    pub fn is_sparse(self) -> bool {
        !matches!(self, Method::FullSoftmax | Method::FullEntmax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Workload {
    /// I.i.d. standard normal keys, values, and queries.
    Gaussian,
    /// Standard normal background plus one key per query aligned to it.
    PlantedKey,
    /// Keys with per-coordinate scales drawn log-uniform in [0.1, 10],
    /// stressing the diagonal Gaussian approximation.
    Anisotropic,
}

impl Workload {
    pub fn name(self) -> &'static str {
        match self {
            Workload::Gaussian => "gaussian",
            Workload::PlantedKey => "planted_key",
            Workload::Anisotropic => "anisotropic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One sweep definition. Budgets are coverage ratios when <= 1 and token
/// budgets when > 1; either way they round up to whole pages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub d: usize,
    pub dv: usize,
    pub page_size: usize,
    /// Cache sizes to sweep.
    pub n: Vec<usize>,
    /// Queries per trial; one decode step each, results averaged.
    pub heads: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub budgets: Vec<f64>,
    pub workload: Workload,
    /// Gaussian selector: page-maximum confidence in (0, 1).
    pub q_page: f64,
    /// Gaussian selector: safety margin delta >= 0.
    pub delta_margin: f64,
    pub trials: usize,
    /// Planted-key alignment strength c.
    pub planted_align: f64,
    /// Planted depth ratio used when the sweep workload is planted_key.
    pub planted_depth: f64,
    /// Depth grid for the planted-retrieval table.
    pub depths: Vec<f64>,
    pub warmup_iters: usize,
    pub timed_iters: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            d: 64,
            dv: 64,
            page_size: 16,
            n: vec![1024],
            heads: 8,
            methods: vec![Method::TopkEntmax],
            alpha: 1.5,
            budgets: vec![0.25],
            workload: Workload::Gaussian,
            q_page: 0.99,
            delta_margin: 0.0,
            trials: 10,
            planted_align: 20.0,
            planted_depth: 0.5,
            depths: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            warmup_iters: 2,
            timed_iters: 5,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n.is_empty() || self.n.contains(&0) {
            return Err("n must be a nonempty list of positive sizes".into());
        }
        if self.methods.is_empty() {
            return Err("at least one method is required".into());
        }
        if self.d == 0 || self.dv == 0 || self.page_size == 0 {
            return Err("d, dv, and page_size must be positive".into());
        }
        if self.heads == 0 || self.trials == 0 {
            return Err("heads and trials must be positive".into());
        }
        if self.methods.iter().any(|m| m.takes_budget()) {
            if self.budgets.is_empty() {
                return Err("budgets must be nonempty for top-k methods".into());
            }
            if self.budgets.iter().any(|&b| !b.is_finite() || b <= 0.0) {
                return Err("budgets must be positive and finite".into());
            }
        }
        if self.methods.iter().any(|m| m.is_entmax()) && self.alpha <= 1.0 {
            return Err(format!(
                "alpha must be > 1 for entmax methods, got {}",
                self.alpha
            ));
        }
        if !(self.q_page > 0.0 && self.q_page < 1.0) {
            return Err(format!("q_page must lie in (0, 1), got {}", self.q_page));
        }
        if self.delta_margin < 0.0 || !self.delta_margin.is_finite() {
            return Err(format!(
                "delta_margin must be >= 0, got {}",
                self.delta_margin
            ));
        }
        if self.workload == Workload::PlantedKey
            && !(self.planted_depth > 0.0 && self.planted_depth < 1.0)
        {
            return Err(format!(
                "planted_depth must lie in (0, 1), got {}",
                self.planted_depth
            ));
        }
        if self.depths.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err("depth ratios must lie in (0, 1)".into());
        }
        if self.timed_iters == 0 {
            return Err("timed_iters must be positive".into());
        }
        Ok(())
    }

    /// Page budget k for one budget entry at cache size n: coverage ratio
    /// when <= 1, token budget when > 1, rounded up to whole pages.
    pub fn pages_for_budget(&self, budget: f64, n: usize) -> usize {
        let tokens = if budget <= 1.0 {
            (budget * n as f64).ceil() as usize
        } else {
            budget.ceil() as usize
        };
        tokens.max(1).div_ceil(self.page_size)
    }
}
