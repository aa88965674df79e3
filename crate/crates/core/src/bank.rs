//! Ground-truth pattern bank with exact minimum-Hamming queries, and the
//! per-frame bit-count summary behind the closed-form inter-frame distance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patterns::{words_for, BinaryPattern};

/// Bank rows scanned together; one word of each lands in a single 512-bit
/// register.
const LANES: usize = 16;

/// Words accumulated between early-exit checks during a bank scan.
const EXIT_BLOCK: usize = 4;

/// Queries sharing one pass over the bank.
const QUERY_TILE: usize = 8;

/// Immutable set of source ground-truth patterns.
///
/// Rows are stored in groups of [`LANES`], word-major within a group
/// (`[group][word][lane]`), so that one query word is compared against
/// `LANES` bank rows at once. The last group is zero-padded; padded lanes
/// are never reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternBank {
    dim: usize,
    stride: usize,
    count: usize,
    data: Vec<u64>,
}

impl PatternBank {
    /// Builds a bank from a non-empty set of equal-dimension patterns.
    /// Duplicates are kept; they never change a minimum.
    pub fn build<'a, I>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a BinaryPattern>,
    {
        let mut iter = patterns.into_iter().peekable();
        let first = iter.peek().ok_or(Error::Empty("pattern bank"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("pattern dimension must be positive".into()));
        }
        let stride = words_for(dim);
        let group = stride * LANES;
        let mut data = Vec::new();
        let mut count = 0;
        for p in iter {
            check_dim(dim, p)?;
            let lane = count % LANES;
            if lane == 0 {
                data.resize(data.len() + group, 0);
            }
            let base = data.len() - group;
            for (w, &word) in p.words().iter().enumerate() {
                data[base + w * LANES + lane] = word;
            }
            count += 1;
        }
        Ok(PatternBank {
            dim,
            stride,
            count,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// The bank patterns in insertion order.
    pub fn patterns(&self) -> impl Iterator<Item = BinaryPattern> + '_ {
        (0..self.count).map(|r| {
            let base = (r / LANES) * self.stride * LANES + r % LANES;
            let words = (0..self.stride).map(|w| self.data[base + w * LANES]).collect();
            BinaryPattern::from_words(self.dim, words).expect("bank rows are valid")
        })
    }

    /// Exact minimum Hamming distance from `p` to any bank pattern.
    pub fn nearest_distance(&self, p: &BinaryPattern) -> Result<u32> {
        check_dim(self.dim, p)?;
        Ok(self.scan(p.words()))
    }

    /// `nearest_distance` for every query, in query order. Queries are
    /// processed in tiles spread over the current rayon pool; each tile
    /// walks the bank once.
    pub fn batch_nearest(&self, queries: &[BinaryPattern]) -> Result<Vec<u32>> {
        for q in queries {
            check_dim(self.dim, q)?;
        }
        let kernel = select_kernel();
        let mut out = vec![0u32; queries.len()];
        out.par_chunks_mut(QUERY_TILE)
            .zip(queries.par_chunks(QUERY_TILE))
            .for_each(|(dst, tile)| {
                let words: Vec<&[u64]> = tile.iter().map(BinaryPattern::words).collect();
                kernel(&self.data, self.stride, self.count, &words, dst);
            });
        Ok(out)
    }

    fn scan(&self, query: &[u64]) -> u32 {
        let mut best = [0u32];
        select_kernel()(&self.data, self.stride, self.count, &[query], &mut best);
        best[0]
    }
}

pub fn build_bank(patterns: &[BinaryPattern]) -> Result<PatternBank> {
    PatternBank::build(patterns)
}

fn check_dim(dim: usize, p: &BinaryPattern) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.dim(),
        });
    }
    Ok(())
}

/// Writes the minimum distance of each query into `best`.
type ScanKernel = fn(&[u64], usize, usize, &[&[u64]], &mut [u32]);

fn select_kernel() -> ScanKernel {
    #[cfg(target_arch = "x86_64")]
    {
        use std::sync::OnceLock;
        static KERNEL: OnceLock<ScanKernel> = OnceLock::new();
        *KERNEL.get_or_init(|| {
            if std::arch::is_x86_feature_detected!("avx512vpopcntdq")
                && std::arch::is_x86_feature_detected!("avx512f")
            {
                // SAFETY: features detected above.
                |d, s, c, q, b| unsafe { x86::scan_avx512(d, s, c, q, b) }
            } else if std::arch::is_x86_feature_detected!("avx2")
                && std::arch::is_x86_feature_detected!("popcnt")
            {
                |d, s, c, q, b| unsafe { x86::scan_avx2(d, s, c, q, b) }
            } else if std::arch::is_x86_feature_detected!("popcnt") {
                |d, s, c, q, b| unsafe { x86::scan_popcnt(d, s, c, q, b) }
            } else {
                scan_groups
            }
        })
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        scan_groups
    }
}

/// Minimum distance over all valid rows of a lane-grouped bank, for a tile
/// of queries sharing each group while it is hot in cache. Plain Rust; the
/// target-feature wrappers let the compiler vectorize the lane loop.
#[inline(always)]
fn scan_groups(data: &[u64], stride: usize, count: usize, queries: &[&[u64]], best: &mut [u32]) {
    let mut mins = [u64::MAX; QUERY_TILE];
    for tile in queries.chunks(QUERY_TILE).zip(best.chunks_mut(QUERY_TILE)) {
        let (qs, out) = tile;
        mins[..qs.len()].fill(u64::MAX);
        for (g, group) in data.chunks_exact(stride * LANES).enumerate() {
            let valid = (count - g * LANES).min(LANES);
            for (query, min) in qs.iter().zip(mins.iter_mut()) {
                if *min == 0 {
                    continue;
                }
                let mut acc = [0u64; LANES];
                for (w0, words) in group.chunks(EXIT_BLOCK * LANES).enumerate() {
                    for (k, lanes) in words.chunks_exact(LANES).enumerate() {
                        let q = query[w0 * EXIT_BLOCK + k];
                        // Bounded by the dimension; wrapping keeps the loop vectorizable.
                        for (a, &x) in acc.iter_mut().zip(lanes) {
                            *a = a.wrapping_add(u64::from((x ^ q).count_ones()));
                        }
                    }
                    if acc.iter().all(|&a| a >= *min) {
                        break;
                    }
                }
                for &a in &acc[..valid] {
                    *min = (*min).min(a);
                }
            }
        }
        for (o, m) in out.iter_mut().zip(&mins) {
            *o = *m as u32;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use super::scan_groups;

    #[target_feature(enable = "avx512f,avx512vpopcntdq")]
    pub(super) unsafe fn scan_avx512(d: &[u64], s: usize, c: usize, q: &[&[u64]], b: &mut [u32]) {
        scan_groups(d, s, c, q, b)
    }

    #[target_feature(enable = "avx2,popcnt")]
    pub(super) unsafe fn scan_avx2(d: &[u64], s: usize, c: usize, q: &[&[u64]], b: &mut [u32]) {
        scan_groups(d, s, c, q, b)
    }

    #[target_feature(enable = "popcnt")]
    pub(super) unsafe fn scan_popcnt(d: &[u64], s: usize, c: usize, q: &[&[u64]], b: &mut [u32]) {
        scan_groups(d, s, c, q, b)
    }
}

/// Number of a frame's patterns with each bit set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBitCounts {
    dim: usize,
    counts: Vec<u32>,
    n_boxes: usize,
}

impl FrameBitCounts {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_boxes(&self) -> usize {
        self.n_boxes
    }
}

pub fn frame_bit_counts(patterns: &[BinaryPattern]) -> Result<FrameBitCounts> {
    let first = patterns.first().ok_or(Error::Empty("frame patterns"))?;
    let dim = first.dim();
    let mut counts = vec![0u32; dim];
    for p in patterns {
        check_dim(dim, p)?;
        for (w, &word) in p.words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let j = w * 64 + bits.trailing_zeros() as usize;
                counts[j] += 1;
                bits &= bits - 1;
            }
        }
    }
    Ok(FrameBitCounts {
        dim,
        counts,
        n_boxes: patterns.len(),
    })
}

/// Sum of Hamming distances over all cross-frame pattern pairs, from the
/// per-bit counts alone: a pair differs at bit `j` when exactly one side
/// has it set.
pub fn pairwise_hamming_sum(a: &FrameBitCounts, b: &FrameBitCounts) -> Result<u64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    if a.n_boxes == 0 || b.n_boxes == 0 {
        return Err(Error::Empty("frame with zero boxes"));
    }
    let (n, m) = (a.n_boxes as u64, b.n_boxes as u64);
    Ok(a.counts
        .iter()
        .zip(&b.counts)
        .map(|(&ca, &cb)| {
            let (ca, cb) = (u64::from(ca), u64::from(cb));
            ca * (m - cb) + (n - ca) * cb
        })
        .sum())
}

/// Mean Hamming distance over all `n * m` cross-frame pattern pairs.
pub fn mean_pairwise_hamming(a: &FrameBitCounts, b: &FrameBitCounts) -> Result<f64> {
    let sum = pairwise_hamming_sum(a, b)?;
    Ok(sum as f64 / (a.n_boxes as f64 * b.n_boxes as f64))
}
