//! Shared helpers for the integration test suites.
// Each test binary uses its own subset of these.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use paged_entmax::{CacheConfig, PagedKvCache};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Cache filled with i.i.d. standard normal keys and values.
pub fn gaussian_cache(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    dv: usize,
    page_size: usize,
) -> PagedKvCache {
    let mut cache = PagedKvCache::new(CacheConfig::new(d, dv, page_size));
    for _ in 0..n {
        let key = normal_vec(rng, d);
        let value = normal_vec(rng, dv);
        cache.append(&key, &value).unwrap();
    }
    cache
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
