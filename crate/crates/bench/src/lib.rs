//! Benchmark harness for sparse entmax decoding over a paged KV cache.
//!
//! Seeded synthetic workloads, method/budget sweeps against full-cache
//! oracles, a planted-key retrieval task, and CSV/JSON emission. The
//! `bench` binary wraps these modules; see the crate README for usage.

pub mod config;
pub mod oracles;
pub mod planted;
pub mod record;
pub mod selftest;
pub mod sweep;
pub mod workload;

pub use config::{BenchConfig, Method, OutputFormat, Workload};
pub use planted::{planted_retrieval, PlantedRecord};
pub use record::{write_csv, write_json, BenchRecord, CSV_HEADER};
pub use sweep::run_sweep;
pub use workload::{generate_workload, QueryStream};
