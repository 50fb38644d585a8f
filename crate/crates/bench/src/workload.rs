//! Seeded synthetic workload generation.
//!
//! Deterministic by contract: the generator is ChaCha8
//! (`rand_chacha::ChaCha8Rng`), a named, portable stream cipher RNG, seeded
//! per (base seed, cache size, trial) through splitmix64. The derived seed
//! deliberately ignores method and budget so that matched-budget
//! comparisons observe bit-identical caches and queries.

use paged_entmax::{CacheConfig, PagedKvCache};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{BenchConfig, Workload};

/// Queries for one trial, plus each query's planted token (planted-key
/// workloads only).
#[derive(Debug, Clone)]
pub struct QueryStream {
    pub queries: Vec<Vec<f64>>,
    pub planted: Vec<Option<usize>>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with trial-identifying salt into one RNG seed.
pub fn derive_seed(base: u64, salt: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &s in salt {
        state = splitmix64(state ^ s);
    }
    state
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Build the cache and query stream for one trial.
pub fn generate_workload(
    config: &BenchConfig,
    n: usize,
    trial: usize,
) -> anyhow::Result<(PagedKvCache, QueryStream)> {
    generate_workload_at_depth(config, n, trial, config.planted_depth)
}

/// As [`generate_workload`] with an explicit planted depth ratio (the
/// retrieval table sweeps depths; other workloads ignore it).
pub fn generate_workload_at_depth(
    config: &BenchConfig,
    n: usize,
    trial: usize,
    depth: f64,
) -> anyhow::Result<(PagedKvCache, QueryStream)> {
    let seed = derive_seed(config.seed, &[n as u64, trial as u64, depth.to_bits()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cache_config = CacheConfig::new(config.d, config.dv, config.page_size);

    // Per-coordinate key scales: all ones except the anisotropic workload,
    // which draws them log-uniform in [0.1, 10].
    let scales: Vec<f64> = match config.workload {
        Workload::Anisotropic => {
            let (lo, hi) = (0.1f64.ln(), 10.0f64.ln());
            (0..config.d).map(|_| rng.gen_range(lo..hi).exp()).collect()
        }
        _ => vec![1.0; config.d],
    };

    let mut keys: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let key: Vec<f64> = (0..config.d)
            .map(|i| rng.sample::<f64, _>(StandardNormal) * scales[i])
            .collect();
        keys.push(key);
        values.push(normal_vec(&mut rng, config.dv));
    }

    let queries: Vec<Vec<f64>> = (0..config.heads)
        .map(|_| normal_vec(&mut rng, config.d))
        .collect();

    let mut planted: Vec<Option<usize>> = vec![None; config.heads];
    if config.workload == Workload::PlantedKey {
        // One planted token per query at adjacent positions around the
        // requested depth; each key is c * q / ||q|| for its own query.
        let heads = config.heads.min(n);
        let base = ((depth * (n - heads.min(n)) as f64) as usize).min(n - heads);
        for (h, query) in queries.iter().enumerate().take(heads) {
            let pos = base + h;
            let norm = query.iter().map(|q| q * q).sum::<f64>().sqrt();
            keys[pos] = query
                .iter()
                .map(|&q| config.planted_align * q / norm)
                .collect();
            planted[h] = Some(pos);
        }
    }

    let mut cache = PagedKvCache::new(cache_config);
    for (key, value) in keys.iter().zip(&values) {
        cache.append(key, value)?;
    }
    Ok((cache, QueryStream { queries, planted }))
}
