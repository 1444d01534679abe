//! Exact k-th nearest neighbour distance against a safe bank.
//!
//! Bank rows are packed in blocks of `LANES` rows stored channel-major, so
//! the inner loop accumulates `LANES` independent squared distances at once.
//! Every lane still sums its channels in order, which keeps each distance
//! bit-identical to a naive per-row loop while letting the compiler
//! vectorize across rows.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{cmp_f, Scalar};
use crate::scorer::pooling::unit_normalize;
use crate::scorer::SafeBank;

pub(crate) const LANES: usize = 16;

pub(crate) fn pack_blocks<T: Scalar>(rows: &Matrix<T>) -> Vec<T> {
    let (m, dim) = (rows.rows(), rows.cols());
    let blocks = m.div_ceil(LANES);
    let mut out = vec![T::zero(); blocks * dim * LANES];
    for i in 0..m {
        let (b, lane) = (i / LANES, i % LANES);
        let base = b * dim * LANES;
        for (c, &v) in rows.row(i).iter().enumerate() {
            out[base + c * LANES + lane] = v;
        }
    }
    out
}

#[inline(always)]
fn squared_distances_impl<T: Scalar>(query: &[T], blocks: &[T], m: usize, out: &mut [T]) {
    let dim = query.len();
    for (b, block) in blocks.chunks_exact(dim * LANES).enumerate() {
        let mut acc = [T::zero(); LANES];
        for (&qc, lane) in query.iter().zip(block.chunks_exact(LANES)) {
            let lane: &[T; LANES] = lane.try_into().expect("lane width");
            for l in 0..LANES {
                let d = qc - lane[l];
                acc[l] += d * d;
            }
        }
        let start = b * LANES;
        let end = (start + LANES).min(m);
        out[start..end].copy_from_slice(&acc[..end - start]);
    }
}

/// Queries processed together per pass over a bank block.
pub(crate) const QUERY_BLOCK: usize = 4;

/// `QUERY_BLOCK` queries at once; each query's lane sums follow the same
/// channel order as the single-query kernel.
#[inline(always)]
fn squared_distances_multi_impl<T: Scalar>(queries: [&[T]; QUERY_BLOCK], blocks: &[T], m: usize, out: &mut [Vec<T>]) {
    let dim = queries[0].len();
    for (b, block) in blocks.chunks_exact(dim * LANES).enumerate() {
        let mut acc = [[T::zero(); LANES]; QUERY_BLOCK];
        for (c, lane) in block.chunks_exact(LANES).enumerate() {
            let lane: &[T; LANES] = lane.try_into().expect("lane width");
            for (a, q) in acc.iter_mut().zip(&queries) {
                let qc = q[c];
                for l in 0..LANES {
                    let d = qc - lane[l];
                    a[l] += d * d;
                }
            }
        }
        let start = b * LANES;
        let end = (start + LANES).min(m);
        for (o, a) in out.iter_mut().zip(&acc) {
            o[start..end].copy_from_slice(&a[..end - start]);
        }
    }
}

/// Instantiates the kernels with wider target features; selection happens at
/// run time. Codegen differs only in vector width, never in operation order.
#[cfg(target_arch = "x86_64")]
mod wide {
    use super::*;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn single_avx2<T: Scalar>(query: &[T], blocks: &[T], m: usize, out: &mut [T]) {
        squared_distances_impl(query, blocks, m, out)
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn single_avx512<T: Scalar>(query: &[T], blocks: &[T], m: usize, out: &mut [T]) {
        squared_distances_impl(query, blocks, m, out)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn multi_avx2<T: Scalar>(q: [&[T]; QUERY_BLOCK], blocks: &[T], m: usize, out: &mut [Vec<T>]) {
        squared_distances_multi_impl(q, blocks, m, out)
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn multi_avx512<T: Scalar>(q: [&[T]; QUERY_BLOCK], blocks: &[T], m: usize, out: &mut [Vec<T>]) {
        squared_distances_multi_impl(q, blocks, m, out)
    }
}

fn single_kernel<T: Scalar>(query: &[T], blocks: &[T], m: usize, out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    {
        // SAFETY: each wide kernel runs only after its feature is detected.
        if std::arch::is_x86_feature_detected!("avx512f") {
            return unsafe { wide::single_avx512(query, blocks, m, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            return unsafe { wide::single_avx2(query, blocks, m, out) };
        }
    }
    squared_distances_impl(query, blocks, m, out)
}

fn multi_kernel<T: Scalar>(q: [&[T]; QUERY_BLOCK], blocks: &[T], m: usize, out: &mut [Vec<T>]) {
    #[cfg(target_arch = "x86_64")]
    {
        // SAFETY: each wide kernel runs only after its feature is detected.
        if std::arch::is_x86_feature_detected!("avx512f") {
            return unsafe { wide::multi_avx512(q, blocks, m, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            return unsafe { wide::multi_avx2(q, blocks, m, out) };
        }
    }
    squared_distances_multi_impl(q, blocks, m, out)
}

/// Squared distances from up to `QUERY_BLOCK` unit queries to every bank
/// row; `out[i]` receives query `i`. Results equal [`squared_distances`]
/// bit-for-bit.
pub fn squared_distances_block<T: Scalar>(unit_queries: &[&[T]], bank: &SafeBank<T>, out: &mut [Vec<T>]) {
    assert!(!unit_queries.is_empty() && unit_queries.len() <= QUERY_BLOCK, "query block size");
    assert!(out.len() >= unit_queries.len(), "output slots");
    for q in unit_queries {
        assert_eq!(q.len(), bank.dim(), "query dimension");
    }
    let queries: [&[T]; QUERY_BLOCK] = std::array::from_fn(|i| unit_queries[i.min(unit_queries.len() - 1)]);
    let mut slots: Vec<Vec<T>> = out.iter_mut().take(unit_queries.len()).map(std::mem::take).collect();
    while slots.len() < QUERY_BLOCK {
        slots.push(Vec::new());
    }
    for s in slots.iter_mut() {
        s.clear();
        s.resize(bank.len(), T::zero());
    }
    multi_kernel(queries, bank.blocks(), bank.len(), &mut slots);
    for (o, s) in out.iter_mut().zip(slots) {
        *o = s;
    }
}

/// k-th smallest value of a scratch buffer of squared distances, as a distance.
pub(crate) fn kth_of_squared<T: Scalar>(squared: &mut [T], k: usize) -> T {
    let (_, kth, _) = squared.select_nth_unstable_by(k - 1, cmp_f);
    kth.sqrt()
}

/// The `kmax` smallest of a buffer of squared distances, ascending, as distances.
pub(crate) fn head_of_squared<T: Scalar>(squared: &mut [T], kmax: usize) -> Vec<T> {
    if kmax < squared.len() {
        squared.select_nth_unstable_by(kmax - 1, cmp_f);
    }
    let mut head = squared[..kmax].to_vec();
    head.sort_unstable_by(cmp_f);
    head.into_iter().map(|v| v.sqrt()).collect()
}

/// The `kmax` nearest distances of many unit queries, processed in query
/// blocks in parallel. Output order follows input order.
pub fn nearest_distances_batch<T: Scalar>(unit_queries: &[Vec<T>], bank: &SafeBank<T>, kmax: usize) -> Result<Vec<Vec<T>>> {
    use rayon::prelude::*;
    check_k(kmax, bank.len())?;
    let chunks: Vec<Vec<Vec<T>>> = unit_queries
        .par_chunks(QUERY_BLOCK)
        .map(|chunk| {
            let refs: Vec<&[T]> = chunk.iter().map(|q| q.as_slice()).collect();
            let mut out = vec![Vec::new(); chunk.len()];
            squared_distances_block(&refs, bank, &mut out);
            out.iter_mut().map(|sq| head_of_squared(sq, kmax)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// k-th nearest distances of many unit queries; see [`nearest_distances_batch`].
pub fn kth_distances_batch<T: Scalar>(unit_queries: &[&[T]], bank: &SafeBank<T>, k: usize) -> Result<Vec<T>> {
    use rayon::prelude::*;
    check_k(k, bank.len())?;
    let chunks: Vec<Vec<T>> = unit_queries
        .par_chunks(QUERY_BLOCK)
        .map(|chunk| {
            let mut out = vec![Vec::new(); chunk.len()];
            squared_distances_block(chunk, bank, &mut out);
            out.iter_mut().map(|sq| kth_of_squared(sq, k)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Squared Euclidean distances from a unit query to every bank row.
pub fn squared_distances<T: Scalar>(unit_query: &[T], bank: &SafeBank<T>, out: &mut Vec<T>) {
    assert_eq!(unit_query.len(), bank.dim(), "query dimension");
    out.clear();
    out.resize(bank.len(), T::zero());
    debug_assert_eq!(bank.blocks().len(), bank.block_count() * bank.dim() * LANES);
    single_kernel(unit_query, bank.blocks(), bank.len(), out);
}

/// k-th smallest distance (1-based `k`) from a unit query to the bank.
pub fn kth_distance<T: Scalar>(unit_query: &[T], bank: &SafeBank<T>, k: usize, scratch: &mut Vec<T>) -> Result<T> {
    check_k(k, bank.len())?;
    squared_distances(unit_query, bank, scratch);
    Ok(kth_of_squared(scratch, k))
}

/// The `kmax` smallest distances, ascending.
pub fn nearest_distances<T: Scalar>(
    unit_query: &[T],
    bank: &SafeBank<T>,
    kmax: usize,
    scratch: &mut Vec<T>,
) -> Result<Vec<T>> {
    check_k(kmax, bank.len())?;
    squared_distances(unit_query, bank, scratch);
    Ok(head_of_squared(scratch, kmax))
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(Error::Infeasible(format!("k = {k} outside 1..={m} (bank size)")));
    }
    Ok(())
}

/// Negative k-th nearest neighbour distance between `z / ||z||` and the bank.
pub fn knn_score<T: Scalar>(z: &[T], bank: &SafeBank<T>, k: usize) -> Result<T> {
    if z.len() != bank.dim() {
        return Err(Error::Shape(format!("feature has {} channels, bank {}", z.len(), bank.dim())));
    }
    let (u, _) = unit_normalize(z)?;
    let mut scratch = Vec::with_capacity(bank.len());
    let r = kth_distance(&u, bank, k, &mut scratch)?;
    Ok(T::zero() - r)
}
