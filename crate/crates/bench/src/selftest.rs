//! Quick oracle and property suite behind `bench selftest`.
//!
//! A trimmed version of the acceptance checks that runs in seconds and
//! prints one pass/fail line per check. Exit code 3 when anything fails.

use paged_entmax::{
    entmax, full_attention, softmax, sparse_attention, truncate_renormalize, Alpha, AttentionDist,
    PagedKvCache, RowMatrix, ScoreVector, SelectionResult, Transform,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::BenchConfig;
use crate::oracles::{entmax_by_enumeration, mc_truncated_mass};
use crate::workload::generate_workload;

struct Tally {
    failures: usize,
}

impl Tally {
    fn check(&mut self, name: &str, pass: bool) {
        println!("selftest {name}: {}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn gaussian_cache(rng: &mut ChaCha8Rng, n: usize, d: usize, dv: usize, p: usize) -> PagedKvCache {
    let mut cache = PagedKvCache::new(paged_entmax::CacheConfig::new(d, dv, p));
    for _ in 0..n {
        let key = normal_vec(rng, d);
        let value = normal_vec(rng, dv);
        cache.append(&key, &value).unwrap();
    }
    cache
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Run every check; true when all pass.
pub fn run() -> bool {
    let mut tally = Tally { failures: 0 };

    // Softmax against 50-digit reference values.
    {
        let dist = softmax(&ScoreVector::new(vec![5.0, 1.0, -3.0]).unwrap()).unwrap();
        let expected = [
            0.9816903928255045,
            0.017980286735531547,
            0.00032932043896389293,
        ];
        let ok = dist
            .probs()
            .iter()
            .zip(expected)
            .all(|(p, e)| (p - e).abs() < 1e-15);
        tally.check("softmax high-precision reference", ok);
    }

    // Entmax vs the enumeration oracle, 100 random vectors.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ok = true;
        for _ in 0..100 {
            let n = rng.gen_range(1..=16);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for alpha in [4.0 / 3.0, 1.5, 2.0] {
                let dist = entmax(
                    &ScoreVector::new(scores.clone()).unwrap(),
                    Alpha::new(alpha).unwrap(),
                )
                .unwrap();
                let oracle = entmax_by_enumeration(&scores, alpha);
                if dist
                    .probs()
                    .iter()
                    .zip(&oracle)
                    .any(|(p, o)| (p - o).abs() > 1e-10)
                {
                    ok = false;
                }
            }
        }
        tally.check("entmax enumeration oracle", ok);
    }

    // Truncation bound and its tight two-token instance.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ok = true;
        for _ in 0..1000 {
            let n = rng.gen_range(2..16);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let dist = AttentionDist::from_probs(raw.iter().map(|x| x / total).collect()).unwrap();
            let mut values = RowMatrix::new(3);
            let mut bound = 0.0f64;
            for _ in 0..n {
                let v = normal_vec(&mut rng, 3);
                bound = bound.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
                values.push_row(&v).unwrap();
            }
            let keep: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
            let keep = if keep.is_empty() { vec![0] } else { keep };
            if let Ok((out, delta)) = truncate_renormalize(&dist, &keep, &values) {
                let full: Vec<f64> = (0..3)
                    .map(|c| (0..n).map(|j| dist.probs()[j] * values.row(j)[c]).sum())
                    .collect();
                if l2(&full, &out.output) > 2.0 * bound * delta + 1e-9 {
                    ok = false;
                }
            }
        }
        let b = 2.5;
        let delta = 0.125;
        let dist = AttentionDist::from_probs(vec![1.0 - delta, delta]).unwrap();
        let values = RowMatrix::from_flat(vec![b, -b], 1).unwrap();
        let (out, _) = truncate_renormalize(&dist, &[0], &values).unwrap();
        let full = b * (1.0 - delta) - b * delta;
        let tight = ((out.output[0] - full).abs() - 2.0 * b * delta).abs() < 1e-12;
        tally.check("truncation bound and tightness", ok && tight);
    }

    // Exact sparse recovery when the kept set covers the support.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alpha = Alpha::new(1.5).unwrap();
        let mut ok = true;
        for _ in 0..200 {
            let cache = gaussian_cache(&mut rng, 64, 8, 4, 8);
            let query = normal_vec(&mut rng, 8);
            let transform = Transform::Entmax(alpha);
            let full = full_attention(&query, &cache, transform).unwrap();
            let mut keep: Vec<usize> = full.dist.support().to_vec();
            keep.extend((0..cache.len()).filter(|_| rng.gen_bool(0.1)));
            keep.sort_unstable();
            keep.dedup();
            let selection = SelectionResult {
                tokens: keep.clone(),
                ..SelectionResult::full(&cache.page_counts())
            };
            let sparse = sparse_attention(&query, &cache, &selection, transform).unwrap();
            if full.dist.mass_outside(&keep) != 0.0 || l2(&full.output, &sparse.output) > 1e-10 {
                ok = false;
            }
        }
        tally.check("exact sparse recovery over covered support", ok);
    }

    // Box bound soundness.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ok = true;
        for _ in 0..1000 {
            let cache = gaussian_cache(&mut rng, 16, 8, 1, 16);
            let query = normal_vec(&mut rng, 8);
            let bound = paged_entmax::box_bound(&query, cache.page(0).unwrap()).unwrap();
            let max_score = (0..cache.len())
                .map(|j| {
                    query
                        .iter()
                        .zip(cache.key(j))
                        .map(|(q, k)| q * k)
                        .sum::<f64>()
                        / (8f64).sqrt()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if bound < max_score {
                ok = false;
            }
        }
        tally.check("box bound soundness", ok);
    }

    // Closed-form truncated moments vs quick Monte-Carlo.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ok = true;
        for alpha in [2.0, 1.5, 4.0 / 3.0] {
            for _ in 0..3 {
                let mu = rng.gen_range(-1.0..1.0);
                let sigma = rng.gen_range(0.2..1.2);
                let a = alpha - 1.0;
                let tau = a * mu + a * sigma * rng.gen_range(-1.5..1.5);
                let closed =
                    paged_entmax::expected_entmax_mass(mu, sigma, tau, Alpha::new(alpha).unwrap())
                        .unwrap();
                let (mc, se) = mc_truncated_mass(&mut rng, mu, sigma, tau, alpha, 200_000);
                if (closed - mc).abs() > 5.0 * se + 1e-9 {
                    ok = false;
                }
            }
        }
        tally.check("closed-form truncated moments vs monte carlo", ok);
    }

    // Workload determinism.
    {
        let config = BenchConfig {
            n: vec![96],
            heads: 2,
            ..Default::default()
        };
        let (a, qa) = generate_workload(&config, 96, 0).unwrap();
        let (b, qb) = generate_workload(&config, 96, 0).unwrap();
        tally.check(
            "workload determinism",
            a.keys() == b.keys() && a.values() == b.values() && qa.queries == qb.queries,
        );
    }

    // Inverse normal cdf against round trips at moderate quantiles.
    {
        let mut ok = true;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let x = paged_entmax::normal::inverse_norm_cdf(p);
            let back = paged_entmax::normal::norm_cdf(x);
            if (back - p).abs() > 1e-13 {
                ok = false;
            }
        }
        tally.check("inverse normal cdf round trip", ok);
    }

    println!(
        "selftest: {}",
        if tally.failures == 0 {
            "all checks passed".to_string()
        } else {
            format!("{} check(s) FAILED", tally.failures)
        }
    );
    tally.failures == 0
}
