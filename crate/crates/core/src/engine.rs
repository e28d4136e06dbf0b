//! Inner gradient-descent loop on one mini-batch.
//!
//! A lane owns a contiguous range of batch rows and the kernel slab for those
//! rows against the landmark columns. Every iteration makes one pass over the
//! slab to get per-row cluster sums `S_ij = Σ_{m ∈ L, u_m = j} K_im`. These sums
//! give both the compactness numerators (on landmark rows) and the similarity
//! rows `f_ij = S_ij / |w_j|`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::collectives::{Compensated, Lane};
use crate::error::{KkmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GdConfig {
    pub max_iters: usize,
    /// Stop once at most this many labels change in an iteration.
    pub label_change_tolerance: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            label_change_tolerance: 0,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(KkmError::input("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Kernel rows owned by one lane: `rows × landmarks`, row-major.
#[derive(Debug, Clone)]
pub struct BatchKernel<'a> {
    /// Owned batch positions.
    pub rows: Range<usize>,
    /// Batch positions of the landmark columns, ascending.
    pub landmarks: &'a [usize],
    pub slab: &'a [f64],
}

impl<'a> BatchKernel<'a> {
    pub fn new(rows: Range<usize>, landmarks: &'a [usize], slab: &'a [f64]) -> Result<Self> {
        if slab.len() != rows.len() * landmarks.len() {
            return Err(KkmError::state(format!(
                "kernel slab holds {} values, expected {} x {}",
                slab.len(),
                rows.len(),
                landmarks.len()
            )));
        }
        Ok(Self { rows, landmarks, slab })
    }

    pub fn n_cols(&self) -> usize {
        self.landmarks.len()
    }

    pub fn row(&self, local: usize) -> &'a [f64] {
        let l = self.landmarks.len();
        &self.slab[local * l..(local + 1) * l]
    }

    /// `(local row, landmark column)` for every owned row that is a landmark.
    pub fn owned_landmarks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let first = self.landmarks.partition_point(|&p| p < self.rows.start);
        self.landmarks[first..]
            .iter()
            .enumerate()
            .take_while(|(_, &p)| p < self.rows.end)
            .map(move |(k, &p)| (p - self.rows.start, first + k))
    }
}

/// Labels of the landmark samples, in column order.
pub fn landmark_labels(labels: &[u32], landmarks: &[usize]) -> Vec<u32> {
    landmarks.iter().map(|&p| labels[p]).collect()
}

/// Landmark members per cluster, `|w_j|`.
pub fn cluster_counts(landmark_labels: &[u32], n_clusters: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_clusters];
    for &l in landmark_labels {
        counts[l as usize] += 1;
    }
    counts
}

/// Per owned row, the kernel mass towards each cluster's landmark members.
pub fn cluster_row_sums(k: &BatchKernel<'_>, landmark_labels: &[u32], n_clusters: usize) -> Vec<f64> {
    let n_rows = k.rows.len();
    let mut out = vec![0.0; n_rows * n_clusters];
    for r in 0..n_rows {
        let acc = &mut out[r * n_clusters..(r + 1) * n_clusters];
        for (&kv, &l) in k.row(r).iter().zip(landmark_labels) {
            acc[l as usize] += kv;
        }
    }
    out
}

/// Compactness numerators `Σ_{m,n ∈ w_j} K_mn` restricted to owned landmark rows.
pub fn compactness_partial(
    k: &BatchKernel<'_>,
    landmark_labels: &[u32],
    row_sums: &[f64],
    n_clusters: usize,
) -> Vec<Compensated> {
    let mut part = vec![Compensated::default(); n_clusters];
    for (r, col) in k.owned_landmarks() {
        let j = landmark_labels[col] as usize;
        part[j].add(row_sums[r * n_clusters + j]);
    }
    part
}

/// `g_j = numerator_j / |w_j|²`, `+∞` for empty clusters.
pub fn finalize_compactness(numerators: &[f64], counts: &[u64]) -> Vec<f64> {
    numerators
        .iter()
        .zip(counts)
        .map(|(&num, &c)| {
            if c == 0 {
                f64::INFINITY
            } else {
                let c = c as f64;
                num / (c * c)
            }
        })
        .collect()
}

/// `f_ij = S_ij / |w_j|`, `−∞` for empty clusters. Overwrites `row_sums`.
pub fn similarity_from_sums(mut row_sums: Vec<f64>, counts: &[u64]) -> Vec<f64> {
    let c = counts.len();
    for row in row_sums.chunks_exact_mut(c) {
        for (v, &n) in row.iter_mut().zip(counts) {
            *v = if n == 0 { f64::NEG_INFINITY } else { *v / n as f64 };
        }
    }
    row_sums
}

/// Full compactness vector for a single lane that owns every row.
pub fn compute_compactness(k: &BatchKernel<'_>, labels: &[u32], n_clusters: usize) -> Vec<f64> {
    let ll = landmark_labels(labels, k.landmarks);
    let counts = cluster_counts(&ll, n_clusters);
    let sums = cluster_row_sums(k, &ll, n_clusters);
    let nums: Vec<f64> = compactness_partial(k, &ll, &sums, n_clusters)
        .into_iter()
        .map(Compensated::value)
        .collect();
    finalize_compactness(&nums, &counts)
}

/// Similarity rows for the owned rows.
pub fn compute_similarity(k: &BatchKernel<'_>, labels: &[u32], n_clusters: usize) -> Vec<f64> {
    let ll = landmark_labels(labels, k.landmarks);
    let counts = cluster_counts(&ll, n_clusters);
    similarity_from_sums(cluster_row_sums(k, &ll, n_clusters), &counts)
}

/// `u_i = argmin_j g_j − 2 f_ij`, lowest `j` on ties. Sentinel clusters never win.
pub fn update_labels(g: &[f64], f: &[f64]) -> Result<Vec<u32>> {
    let c = g.len();
    if c == 0 || !f.len().is_multiple_of(c) {
        return Err(KkmError::state("similarity rows do not match cluster count"));
    }
    if g.iter().all(|v| v.is_infinite()) {
        return Err(KkmError::state("every cluster is empty; labels cannot be updated"));
    }
    f.chunks_exact(c)
        .map(|row| {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..c {
                if g[j].is_infinite() || row[j].is_infinite() {
                    continue;
                }
                let score = g[j] - 2.0 * row[j];
                if best.is_none_or(|(b, _)| score < b) {
                    best = Some((score, j));
                }
            }
            best.map(|(_, j)| j as u32)
                .ok_or_else(|| KkmError::state("no admissible cluster for a sample"))
        })
        .collect()
}

/// `Ω = Σ_{counted} K_ii − Σ_j |w_j| g_j`, skipping empty clusters.
pub fn batch_cost(diag_sum: f64, g: &[f64], counts: &[u64]) -> f64 {
    let mut sub = 0.0;
    for (&gj, &n) in g.iter().zip(counts) {
        if n > 0 {
            sub += n as f64 * gj;
        }
    }
    diag_sum - sub
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerOutcome {
    /// Final labels for the whole batch.
    pub labels: Vec<u32>,
    /// Similarity rows for the owned rows, consistent with `labels`.
    #[serde(skip)]
    pub similarity: Vec<f64>,
    pub counts: Vec<u64>,
    pub iterations: usize,
    pub converged: bool,
    /// Batch cost of each labeling whose compactness was reduced.
    pub cost_trace: Vec<f64>,
    pub changes: Vec<usize>,
    /// Gathered labels after each iteration, starting with the initial labels.
    #[serde(skip)]
    pub history: Vec<Vec<u32>>,
    /// Bytes this lane sent in each iteration.
    pub iteration_bytes: Vec<usize>,
}

/// Runs the synchronous label iteration from `initial` (this lane's rows only).
///
/// Per iteration: one pass over the slab, an allreduce of the compactness
/// numerators, the label update, and an allgather of labels.
pub fn inner_gd_loop(
    lane: &mut Lane<'_>,
    k: &BatchKernel<'_>,
    initial: &[u32],
    diag_sum: f64,
    n_clusters: usize,
    cfg: &GdConfig,
    record_history: bool,
) -> Result<InnerOutcome> {
    cfg.validate()?;
    if initial.len() != k.rows.len() {
        return Err(KkmError::state("initial labels do not match owned rows"));
    }
    let mut labels = lane.allgather_labels(initial)?;
    let mut history = Vec::new();
    if record_history {
        history.push(labels.clone());
    }
    let mut cost_trace = Vec::new();
    let mut changes_trace = Vec::new();
    let mut iteration_bytes = Vec::new();
    let mut converged = false;
    let mut last_f: Option<Vec<f64>> = None;
    let mut counts = Vec::new();

    for _ in 0..cfg.max_iters {
        let sent_before = lane.stats().total_bytes();
        let ll = landmark_labels(&labels, k.landmarks);
        counts = cluster_counts(&ll, n_clusters);
        let sums = cluster_row_sums(k, &ll, n_clusters);
        let partial = compactness_partial(k, &ll, &sums, n_clusters);
        let numerators = lane.allreduce_sum(partial)?;
        let g = finalize_compactness(&numerators, &counts);
        cost_trace.push(batch_cost(diag_sum, &g, &counts));

        let f = similarity_from_sums(sums, &counts);
        let own = update_labels(&g, &f)?;
        let next = lane.allgather_labels(&own)?;
        iteration_bytes.push(lane.stats().total_bytes() - sent_before);

        let changed = labels.iter().zip(&next).filter(|(a, b)| a != b).count();
        changes_trace.push(changed);
        if record_history {
            history.push(next.clone());
        }
        let stable = changed == 0;
        labels = next;
        last_f = stable.then_some(f);
        if changed <= cfg.label_change_tolerance {
            converged = true;
            break;
        }
    }

    // Medoid extraction needs f for the final labels; it is only carried over
    // when the last update changed nothing.
    let similarity = match last_f {
        Some(f) => f,
        None => {
            let ll = landmark_labels(&labels, k.landmarks);
            counts = cluster_counts(&ll, n_clusters);
            similarity_from_sums(cluster_row_sums(k, &ll, n_clusters), &counts)
        }
    };

    Ok(InnerOutcome {
        labels,
        similarity,
        counts,
        iterations: cost_trace.len(),
        converged,
        cost_trace,
        changes: changes_trace,
        history,
        iteration_bytes,
    })
}
