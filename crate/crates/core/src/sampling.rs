//! Mini-batch partitioning and landmark selection.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{KkmError, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    /// Interleaved: batch `i` holds `i, i + B, i + 2B, ...`.
    #[default]
    Stride,
    /// Contiguous chunks in arrival order.
    Block,
}

/// `B` disjoint batches covering `[0, N)`; sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub strategy: SamplingStrategy,
    pub batches: Vec<Vec<usize>>,
}

impl BatchPlan {
    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn n_samples(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn max_batch_len(&self) -> usize {
        self.batches.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn check_counts(n: usize, b: usize) -> Result<()> {
    if b == 0 || b > n {
        return Err(KkmError::input(format!(
            "batch count must satisfy 1 <= B <= N (B = {b}, N = {n})"
        )));
    }
    Ok(())
}

pub fn stride_partition(n: usize, b: usize) -> Result<BatchPlan> {
    check_counts(n, b)?;
    let batches = (0..b).map(|i| (i..n).step_by(b).collect()).collect();
    Ok(BatchPlan {
        strategy: SamplingStrategy::Stride,
        batches,
    })
}

/// Contiguous chunks; the first `N mod B` chunks take `⌈N/B⌉` samples, the rest `⌊N/B⌋`.
pub fn block_partition(n: usize, b: usize) -> Result<BatchPlan> {
    check_counts(n, b)?;
    let (base, extra) = (n / b, n % b);
    let mut start = 0;
    let batches = (0..b)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let batch = (start..start + len).collect();
            start += len;
            batch
        })
        .collect();
    Ok(BatchPlan {
        strategy: SamplingStrategy::Block,
        batches,
    })
}

pub fn partition(strategy: SamplingStrategy, n: usize, b: usize) -> Result<BatchPlan> {
    match strategy {
        SamplingStrategy::Stride => stride_partition(n, b),
        SamplingStrategy::Block => block_partition(n, b),
    }
}

/// Per-batch landmark positions (indices into the batch, ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub per_batch: Vec<Vec<usize>>,
    pub s: f64,
}

pub fn validate_sparsity(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(KkmError::input(format!("sparsity must lie in (0, 1], got {s}")));
    }
    Ok(())
}

/// Landmark count for a batch: `max(C, round(s·len))`, capped at the batch size.
pub fn landmark_count(batch_len: usize, s: f64, n_clusters: usize) -> usize {
    let raw = (s * batch_len as f64).round() as usize;
    if raw < n_clusters {
        log::warn!(
            "sparsity {s} gives {raw} landmarks for a batch of {batch_len}; clamping to {n_clusters}"
        );
    }
    raw.max(n_clusters).min(batch_len)
}

/// Uniform landmark draw for one batch. `s = 1` returns every position.
pub fn landmarks_for_batch(
    batch_len: usize,
    s: f64,
    n_clusters: usize,
    seed: u64,
    stream_index: u64,
) -> Result<Vec<usize>> {
    validate_sparsity(s)?;
    let count = landmark_count(batch_len, s, n_clusters);
    if count >= batch_len {
        return Ok((0..batch_len).collect());
    }
    let mut rng = substream(seed, "landmarks", stream_index);
    let mut picked = index::sample(&mut rng, batch_len, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

pub fn sample_landmarks(plan: &BatchPlan, s: f64, n_clusters: usize, seed: u64) -> Result<Landmarks> {
    validate_sparsity(s)?;
    let per_batch = plan
        .batches
        .iter()
        .enumerate()
        .map(|(i, b)| landmarks_for_batch(b.len(), s, n_clusters, seed, i as u64))
        .collect::<Result<_>>()?;
    Ok(Landmarks { per_batch, s })
}
