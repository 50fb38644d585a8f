//! Sparse entmax attention decoding over a paged key-value cache.
//!
//! The crate provides the building blocks of an entmax-native sparse
//! decoding pipeline:
//!
//! * [`entmax`] — probability transforms (softmax, alpha-entmax) with exact
//!   threshold solving and exact-zero semantics,
//! * [`cache`] — a paged KV store with per-page key statistics maintained
//!   incrementally on append,
//! * [`scoring`] — query-aware page scores computed from metadata only
//!   (deterministic box bound and Gaussian moment pair),
//! * [`selection`] — candidate-page policies: fixed-budget top-k and a
//!   Gaussian-aware selector that estimates the entmax threshold from page
//!   moments,
//! * [`attention`] — full-cache and sparse attention outputs, plus
//!   truncate-and-renormalize evaluation of arbitrary kept sets,
//! * [`metrics`] — per-step approximation reports (dropped mass, support
//!   retention, output error, bound slack, traffic counters).
//!
//! All operations are pure functions over immutable inputs; values are safe
//! to share across concurrent readers.

pub mod attention;
pub mod cache;
pub mod entmax;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod normal;
pub mod scoring;
pub mod selection;

pub use attention::{
    full_attention, sparse_attention, truncate_renormalize, AttentionOutput, Transform,
};
pub use cache::{CacheConfig, PageMetadata, PagedKvCache};
pub use entmax::{
    entmax, softmax, solve_entmax_threshold, support_of, Alpha, AttentionDist, ScoreVector,
};
pub use error::{Error, Result};
pub use matrix::RowMatrix;
pub use metrics::{
    advantage_decomposition, evaluate_step, evaluate_step_with_support, ApproxReport, SupportDef,
};
pub use scoring::{box_bound, gaussian_moments, score_pages, PageScores};
pub use selection::{
    conservative_box_select, expected_entmax_mass, gaussian_page_max, select_gaussian, select_topk,
    solve_distributional_tau, GaussianSelectorConfig, PageMoment, SelectionResult,
};
