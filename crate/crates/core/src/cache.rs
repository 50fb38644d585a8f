//! Paged key-value store with per-page key statistics.
//!
//! Keys and values are partitioned into fixed-size pages. Each page carries
//! coordinate-wise min/max key vectors plus first and second moments (and
//! the derived standard deviation), maintained incrementally as tokens are
//! appended. The statistics are everything the page-scoring and selection
//! stages read, so candidate pages can be chosen without touching the keys
//! themselves.
//!
//! Correctness math runs in f64; the traffic counter charges a configurable
//! number of bytes per real (default 2, emulating 16-bit inference storage)
//! so byte ratios match deployment intuition.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Metadata vector fields read by the selector per page at decode time:
/// k_min, k_max, k_avg, k_std.
pub const META_FIELDS_PER_PAGE: u64 = 4;

const MAGIC: &[u8; 4] = b"EKV1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    /// Key dimension d.
    pub head_dim: usize,
    /// Value dimension d_v.
    pub value_dim: usize,
    /// Tokens per page P.
    pub page_size: usize,
    /// Bytes charged per stored real by the traffic counter.
    pub bytes_per_real: u64,
}

impl CacheConfig {
    pub fn new(head_dim: usize, value_dim: usize, page_size: usize) -> Self {
        assert!(head_dim >= 1 && value_dim >= 1 && page_size >= 1);
        Self {
            head_dim,
            value_dim,
            page_size,
            bytes_per_real: 2,
        }
    }

    pub fn with_bytes_per_real(mut self, bytes: u64) -> Self {
        assert!(bytes >= 1);
        self.bytes_per_real = bytes;
        self
    }
}

/// Per-page key statistics. `k_std[i] = sqrt(max(0, m2[i] - k_avg[i]^2))`;
/// the variance is clamped at zero because rounding can push it slightly
/// negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PageMetadata {
    pub k_min: Vec<f64>,
    pub k_max: Vec<f64>,
    pub k_avg: Vec<f64>,
    pub m2: Vec<f64>,
    pub k_std: Vec<f64>,
    pub token_count: usize,
}

impl PageMetadata {
    fn from_single_key(key: &[f64]) -> Self {
        let m2 = key.iter().map(|&k| k * k).collect();
        Self {
            k_min: key.to_vec(),
            k_max: key.to_vec(),
            k_avg: key.to_vec(),
            m2,
            k_std: vec![0.0; key.len()],
            token_count: 1,
        }
    }

    /// Fold one more key into the running statistics.
    #[allow(clippy::needless_range_loop)] // five parallel arrays share the index
    fn absorb(&mut self, key: &[f64]) {
        let c = self.token_count as f64;
        let c1 = c + 1.0;
        for i in 0..key.len() {
            let k = key[i];
            if k < self.k_min[i] {
                self.k_min[i] = k;
            }
            if k > self.k_max[i] {
                self.k_max[i] = k;
            }
            self.k_avg[i] = (self.k_avg[i] * c + k) / c1;
            self.m2[i] = (self.m2[i] * c + k * k) / c1;
            self.k_std[i] = variance_clamped(self.m2[i], self.k_avg[i]).sqrt();
        }
        self.token_count += 1;
    }

    /// Batch recomputation from raw keys. Used on load and as the oracle
    /// for the incremental path.
    pub fn from_keys<'a, I>(keys: I, dim: usize) -> Option<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut it = keys.into_iter();
        let first = it.next()?;
        debug_assert_eq!(first.len(), dim);
        let mut k_min = first.to_vec();
        let mut k_max = first.to_vec();
        let mut sum = first.to_vec();
        let mut sum_sq: Vec<f64> = first.iter().map(|&k| k * k).collect();
        let mut count = 1usize;
        for key in it {
            for i in 0..dim {
                let k = key[i];
                if k < k_min[i] {
                    k_min[i] = k;
                }
                if k > k_max[i] {
                    k_max[i] = k;
                }
                sum[i] += k;
                sum_sq[i] += k * k;
            }
            count += 1;
        }
        let c = count as f64;
        let k_avg: Vec<f64> = sum.iter().map(|&s| s / c).collect();
        let m2: Vec<f64> = sum_sq.iter().map(|&s| s / c).collect();
        let k_std: Vec<f64> = m2
            .iter()
            .zip(&k_avg)
            .map(|(&m, &a)| variance_clamped(m, a).sqrt())
            .collect();
        Some(Self {
            k_min,
            k_max,
            k_avg,
            m2,
            k_std,
            token_count: count,
        })
    }
}

fn variance_clamped(m2: f64, avg: f64) -> f64 {
    (m2 - avg * avg).max(0.0)
}

/// Fixed-page-size KV store. Page p owns the contiguous token range
/// [pP, min((p+1)P, n)). Single writer; snapshots are safe for concurrent
/// reads between appends.
#[derive(Debug, Clone)]
pub struct PagedKvCache {
    config: CacheConfig,
    keys: RowMatrix,
    values: RowMatrix,
    pages: Vec<PageMetadata>,
}

impl PagedKvCache {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            keys: RowMatrix::new(config.head_dim),
            values: RowMatrix::new(config.value_dim),
            pages: Vec::new(),
            config,
        }
    }

    /// Build from prefilled key/value matrices; metadata is computed in one
    /// pass per page.
    pub fn from_matrices(config: CacheConfig, keys: RowMatrix, values: RowMatrix) -> Result<Self> {
        if keys.cols() != config.head_dim {
            return Err(Error::DimensionMismatch {
                expected: config.head_dim,
                got: keys.cols(),
            });
        }
        if values.cols() != config.value_dim {
            return Err(Error::DimensionMismatch {
                expected: config.value_dim,
                got: values.cols(),
            });
        }
        if keys.rows() != values.rows() {
            return Err(Error::LengthMismatch {
                left: keys.rows(),
                right: values.rows(),
            });
        }
        let mut cache = Self {
            config,
            keys,
            values,
            pages: Vec::new(),
        };
        cache.rebuild_metadata();
        Ok(cache)
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    /// Number of cached tokens n.
    pub fn len(&self) -> usize {
        self.keys.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Number of pages M = ceil(n / P).
    pub fn num_pages(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> &[PageMetadata] {
        &self.pages
    }

    pub fn page(&self, p: usize) -> Result<&PageMetadata> {
        self.pages.get(p).ok_or(Error::PageOutOfRange {
            page: p,
            pages: self.pages.len(),
        })
    }

    pub fn key(&self, token: usize) -> &[f64] {
        self.keys.row(token)
    }

    pub fn value(&self, token: usize) -> &[f64] {
        self.values.row(token)
    }

    pub fn keys(&self) -> &RowMatrix {
        &self.keys
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }

    /// Token counts per page, in page order.
    pub fn page_counts(&self) -> Vec<usize> {
        self.pages.iter().map(|p| p.token_count).collect()
    }

    /// Append one token. The last page absorbs it, or a new page opens when
    /// the last one is full. O(d) per call.
    pub fn append(&mut self, key: &[f64], value: &[f64]) -> Result<()> {
        if key.len() != self.config.head_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.head_dim,
                got: key.len(),
            });
        }
        if value.len() != self.config.value_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.value_dim,
                got: value.len(),
            });
        }
        let n = self.keys.rows();
        self.keys.push_row(key)?;
        self.values.push_row(value)?;
        if n.is_multiple_of(self.config.page_size) {
            self.pages.push(PageMetadata::from_single_key(key));
        } else {
            self.pages
                .last_mut()
                .expect("non-empty cache has a last page")
                .absorb(key);
        }
        Ok(())
    }

    /// Contiguous token range owned by page p; the last page may be partial.
    pub fn page_tokens(&self, p: usize) -> Result<std::ops::Range<usize>> {
        if p >= self.pages.len() {
            return Err(Error::PageOutOfRange {
                page: p,
                pages: self.pages.len(),
            });
        }
        let start = p * self.config.page_size;
        let end = ((p + 1) * self.config.page_size).min(self.len());
        Ok(start..end)
    }

    /// Fresh statistics for page p computed from its raw keys.
    pub fn recompute_page(&self, p: usize) -> Result<PageMetadata> {
        let range = self.page_tokens(p)?;
        Ok(
            PageMetadata::from_keys(range.map(|j| self.keys.row(j)), self.config.head_dim)
                .expect("pages are never empty"),
        )
    }

    /// Recompute every page's statistics from the raw keys.
    pub fn rebuild_metadata(&mut self) {
        let n = self.len();
        let p_size = self.config.page_size;
        let num_pages = n.div_ceil(p_size);
        let mut pages = Vec::with_capacity(num_pages);
        for p in 0..num_pages {
            let start = p * p_size;
            let end = ((p + 1) * p_size).min(n);
            pages.push(
                PageMetadata::from_keys(
                    (start..end).map(|j| self.keys.row(j)),
                    self.config.head_dim,
                )
                .expect("pages are never empty"),
            );
        }
        self.pages = pages;
    }

    /// Bytes moved to read `tokens` key/value pairs.
    pub fn kv_traffic_bytes(&self, tokens: usize) -> u64 {
        tokens as u64
            * (self.config.head_dim + self.config.value_dim) as u64
            * self.config.bytes_per_real
    }

    /// Bytes moved to read every page's selector metadata.
    pub fn metadata_traffic_bytes(&self) -> u64 {
        self.pages.len() as u64
            * META_FIELDS_PER_PAGE
            * self.config.head_dim as u64
            * self.config.bytes_per_real
    }

    /// Traffic charged for one decode step that reads `token_set` KV pairs,
    /// plus the metadata scan when a selector was involved.
    pub fn traffic_bytes(&self, token_set: &[usize], charge_metadata: bool) -> u64 {
        let kv = self.kv_traffic_bytes(token_set.len());
        if charge_metadata {
            kv + self.metadata_traffic_bytes()
        } else {
            kv
        }
    }

    /// Serialize: magic "EKV1"; d, d_v, P, n as u64 little-endian; keys
    /// row-major f64 little-endian; values likewise. Metadata is rebuilt on
    /// load, never stored.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            self.config.head_dim as u64,
            self.config.value_dim as u64,
            self.config.page_size as u64,
            self.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &x in self.keys.as_flat() {
            w.write_all(&x.to_le_bytes())?;
        }
        for &x in self.values.as_flat() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidCacheFile {
                reason: format!("bad magic {magic:?}"),
            });
        }
        let mut header = [0u64; 4];
        for h in &mut header {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *h = u64::from_le_bytes(buf);
        }
        let [d, dv, p_size, n] = header;
        if d == 0 || dv == 0 || p_size == 0 {
            return Err(Error::InvalidCacheFile {
                reason: format!("zero dimension in header: d={d} dv={dv} P={p_size}"),
            });
        }
        let read_matrix = |r: &mut R, rows: usize, cols: usize| -> Result<RowMatrix> {
            let mut data = vec![0.0f64; rows * cols];
            let mut buf = [0u8; 8];
            for x in &mut data {
                r.read_exact(&mut buf)?;
                *x = f64::from_le_bytes(buf);
            }
            RowMatrix::from_flat(data, cols)
        };
        let keys = read_matrix(r, n as usize, d as usize)?;
        let values = read_matrix(r, n as usize, dv as usize)?;
        let config = CacheConfig::new(d as usize, dv as usize, p_size as usize);
        Self::from_matrices(config, keys, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, dv: usize, p: usize) -> CacheConfig {
        CacheConfig::new(d, dv, p)
    }

    #[test]
    fn single_append_creates_degenerate_page() {
        let mut cache = PagedKvCache::new(cfg(3, 2, 4));
        cache.append(&[1.0, -2.0, 0.5], &[9.0, 9.0]).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.num_pages(), 1);
        let page = cache.page(0).unwrap();
        assert_eq!(page.k_min, vec![1.0, -2.0, 0.5]);
        assert_eq!(page.k_max, vec![1.0, -2.0, 0.5]);
        assert_eq!(page.k_avg, vec![1.0, -2.0, 0.5]);
        assert_eq!(page.k_std, vec![0.0, 0.0, 0.0]);
        assert_eq!(page.token_count, 1);
    }

    #[test]
    fn identical_keys_have_zero_std() {
        let mut cache = PagedKvCache::new(cfg(2, 1, 2));
        cache.append(&[0.3, -0.7], &[0.0]).unwrap();
        cache.append(&[0.3, -0.7], &[0.0]).unwrap();
        let page = cache.page(0).unwrap();
        assert_eq!(page.token_count, 2);
        for &s in &page.k_std {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn append_rejects_dimension_mismatch() {
        let mut cache = PagedKvCache::new(cfg(2, 2, 2));
        assert!(matches!(
            cache.append(&[1.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(cache.append(&[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn page_tokens_ranges() {
        let mut cache = PagedKvCache::new(cfg(1, 1, 4));
        for i in 0..10 {
            cache.append(&[i as f64], &[0.0]).unwrap();
        }
        assert_eq!(cache.page_tokens(0).unwrap(), 0..4);
        assert_eq!(cache.page_tokens(2).unwrap(), 8..10);
        assert!(matches!(
            cache.page_tokens(3),
            Err(Error::PageOutOfRange { page: 3, pages: 3 })
        ));

        let mut one = PagedKvCache::new(cfg(1, 1, 16));
        one.append(&[0.0], &[0.0]).unwrap();
        assert_eq!(one.page_tokens(0).unwrap(), 0..1);
    }

    #[test]
    fn traffic_counter_arithmetic() {
        let mut cache = PagedKvCache::new(cfg(64, 64, 16).with_bytes_per_real(4));
        for i in 0..1000 {
            let key = vec![i as f64; 64];
            let value = vec![0.0; 64];
            cache.append(&key, &value).unwrap();
        }
        let all: Vec<usize> = (0..1000).collect();
        assert_eq!(cache.traffic_bytes(&all, false), 512_000);
        assert_eq!(
            cache.traffic_bytes(&[], true),
            cache.metadata_traffic_bytes()
        );
        // 10% coverage has exactly 10% of the KV bytes.
        let tenth: Vec<usize> = (0..100).collect();
        assert_eq!(
            cache.traffic_bytes(&tenth, false) * 10,
            cache.traffic_bytes(&all, false)
        );
    }

    #[test]
    fn incremental_matches_batch_recomputation() {
        let mut cache = PagedKvCache::new(cfg(5, 2, 16));
        let mut state = 0x243f_6a88u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..100 {
            let key: Vec<f64> = (0..5).map(|_| next()).collect();
            cache.append(&key, &[0.0, 0.0]).unwrap();
        }
        for p in 0..cache.num_pages() {
            let fresh = cache.recompute_page(p).unwrap();
            let live = cache.page(p).unwrap();
            assert_eq!(live.token_count, fresh.token_count);
            for i in 0..5 {
                assert_eq!(live.k_min[i], fresh.k_min[i]);
                assert_eq!(live.k_max[i], fresh.k_max[i]);
                assert!((live.k_avg[i] - fresh.k_avg[i]).abs() < 1e-12);
                assert!((live.m2[i] - fresh.m2[i]).abs() < 1e-12);
                assert!((live.k_std[i] - fresh.k_std[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn serialization_round_trip_rebuilds_metadata() {
        let mut cache = PagedKvCache::new(cfg(3, 2, 4));
        for i in 0..9 {
            let x = i as f64 * 0.37 - 1.0;
            cache.append(&[x, -x, x * x], &[x, 2.0 * x]).unwrap();
        }
        let mut buf = Vec::new();
        cache.write_to(&mut buf).unwrap();
        let loaded = PagedKvCache::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.len(), cache.len());
        assert_eq!(loaded.num_pages(), cache.num_pages());
        assert_eq!(loaded.keys(), cache.keys());
        assert_eq!(loaded.values(), cache.values());
        for p in 0..cache.num_pages() {
            let a = loaded.page(p).unwrap();
            let b = cache.page(p).unwrap();
            assert_eq!(a.k_min, b.k_min);
            assert_eq!(a.k_max, b.k_max);
            for i in 0..3 {
                assert!((a.k_avg[i] - b.k_avg[i]).abs() < 1e-12);
                assert!((a.k_std[i] - b.k_std[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn load_rejects_bad_magic() {
        let buf = b"NOPE".to_vec();
        assert!(matches!(
            PagedKvCache::read_from(&mut buf.as_slice()),
            Err(Error::InvalidCacheFile { .. })
        ));
    }
}
