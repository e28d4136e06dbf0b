//! Mercer kernels and rectangular kernel blocks.
//!
//! The feature map is never materialized. Every feature-space quantity in the
//! engine is built from values returned here, so [`eval_kernel`] and
//! [`kernel_block`] share one arithmetic path and agree bitwise.

use std::ops::Range;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{KkmError, Result};
use crate::rng::substream;

/// Default number of samples used to estimate the dataset diameter.
pub const DEFAULT_DMAX_SAMPLE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Gaussian width in data units; ignored for the linear kernel.
    pub sigma: f64,
    pub d_max_sample_size: usize,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            sigma: 1.0,
            d_max_sample_size: DEFAULT_DMAX_SAMPLE,
        }
    }

    pub fn rbf(sigma: f64) -> Result<Self> {
        let spec = Self {
            kind: KernelKind::Rbf,
            sigma,
            d_max_sample_size: DEFAULT_DMAX_SAMPLE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Rbf && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(KkmError::input(format!(
                "rbf sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if self.d_max_sample_size < 2 {
            return Err(KkmError::input("d_max sample size must be at least 2"));
        }
        Ok(())
    }

    /// Kernel value without dimension or finiteness checks. Hot-loop entry point.
    #[inline]
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(x, y),
            KernelKind::Rbf => {
                let d2 = squared_distance(x, y);
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }

    /// Squared feature-space distance `k(x,x) - 2k(x,y) + k(y,y)`, clamped at zero.
    #[inline]
    pub fn feature_distance2(&self, kxx: f64, kxy: f64, kyy: f64) -> f64 {
        (kxx - 2.0 * kxy + kyy).max(0.0)
    }
}

/// Checked single kernel evaluation.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(KkmError::input(format!(
            "kernel arguments must share a positive dimension (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(KkmError::input("non-finite component in kernel argument"));
    }
    Ok(spec.apply(x, y))
}

/// Dense row-major slab of kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    values: Vec<f64>,
}

impl KernelBlock {
    pub fn from_values(rows: Range<usize>, cols: Range<usize>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows.len() * cols.len() {
            return Err(KkmError::input("kernel block value count does not match its shape"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Entry at local `(r, c)`.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols.len() + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.cols.len();
        &self.values[r * w..(r + 1) * w]
    }

    /// Contiguous rows `range` (local indices) as one slice.
    pub fn row_slab(&self, range: Range<usize>) -> &[f64] {
        let w = self.cols.len();
        &self.values[range.start * w..range.end * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn size_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }
}

/// `block[r][c] = k(a[r], b[c])`, single-threaded.
pub fn kernel_block(spec: &KernelSpec, a: &[&[f64]], b: &[&[f64]]) -> Result<KernelBlock> {
    kernel_block_parallel(spec, a, b, 1)
}

/// Same as [`kernel_block`], splitting rows over `threads` scoped threads.
pub fn kernel_block_parallel(
    spec: &KernelSpec,
    a: &[&[f64]],
    b: &[&[f64]],
    threads: usize,
) -> Result<KernelBlock> {
    if a.is_empty() || b.is_empty() {
        return Err(KkmError::input("kernel block needs non-empty row and column sets"));
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|x| x.len() != d) {
        return Err(KkmError::input("kernel block samples must share a positive dimension"));
    }
    let cols = b.len();
    let mut values = vec![0.0; a.len() * cols];
    let threads = threads.clamp(1, a.len());
    if threads == 1 {
        fill_rows(spec, a, b, &mut values);
    } else {
        let per = a.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (a_part, out) in a.chunks(per).zip(values.chunks_mut(per * cols)) {
                s.spawn(move || fill_rows(spec, a_part, b, out));
            }
        });
    }
    Ok(KernelBlock {
        rows: 0..a.len(),
        cols: 0..cols,
        values,
    })
}

const ROW_TILE: usize = 8;
const COL_TILE: usize = 64;

fn fill_rows(spec: &KernelSpec, a: &[&[f64]], b: &[&[f64]], out: &mut [f64]) {
    let cols = b.len();
    for (tile_idx, a_tile) in a.chunks(ROW_TILE).enumerate() {
        let base = tile_idx * ROW_TILE;
        for c0 in (0..cols).step_by(COL_TILE) {
            let c1 = (c0 + COL_TILE).min(cols);
            for (dr, x) in a_tile.iter().enumerate() {
                let row = &mut out[(base + dr) * cols..(base + dr + 1) * cols];
                for c in c0..c1 {
                    row[c] = spec.apply(x, b[c]);
                }
            }
        }
    }
}

/// `k(x, x)` for every row.
pub fn self_kernel(spec: &KernelSpec, rows: &[&[f64]]) -> Vec<f64> {
    rows.iter().map(|x| spec.apply(x, x)).collect()
}

/// Largest pairwise Euclidean distance over a seeded uniform subsample
/// (exact when the dataset is no larger than `d_max_sample_size`).
pub fn estimate_d_max(data: &DataSet, spec: &KernelSpec, seed: u64) -> f64 {
    let n = data.len();
    if n < 2 {
        log::warn!("d_max requested for a single-sample dataset; returning 0");
        return 0.0;
    }
    let picked: Vec<usize> = if n <= spec.d_max_sample_size {
        (0..n).collect()
    } else {
        let mut rng = substream(seed, "d_max", 0);
        let mut v = index::sample(&mut rng, n, spec.d_max_sample_size).into_vec();
        v.sort_unstable();
        v
    };
    let mut best = 0.0f64;
    for (k, &i) in picked.iter().enumerate() {
        let x = data.row(i);
        for &j in &picked[k + 1..] {
            best = best.max(squared_distance(x, data.row(j)));
        }
    }
    best.sqrt()
}

const LANES: usize = 8;

#[inline(always)]
fn sq_dist_lanes(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            let t = xs[l] - ys[l];
            acc[l] += t * t;
        }
    }
    for (l, (a, b)) in xr.iter().zip(yr).enumerate() {
        let t = a - b;
        acc[l] += t * t;
    }
    combine(acc)
}

#[inline(always)]
fn dot_lanes(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            acc[l] += xs[l] * ys[l];
        }
    }
    for (l, (a, b)) in xr.iter().zip(yr).enumerate() {
        acc[l] += a * b;
    }
    combine(acc)
}

#[inline(always)]
fn combine(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

// The AVX2 variants run the same per-lane IEEE operations (no FMA), so they
// return exactly what the portable versions return.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn sq_dist_avx2(x: &[f64], y: &[f64]) -> f64 {
    sq_dist_lanes(x, y)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(x: &[f64], y: &[f64]) -> f64 {
    dot_lanes(x, y)
}

/// `‖x − y‖²` with a fixed 8-lane accumulation order.
#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: guarded by runtime feature detection.
            return unsafe { sq_dist_avx2(x, y) };
        }
    }
    sq_dist_lanes(x, y)
}

/// `⟨x, y⟩` with a fixed 8-lane accumulation order.
#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: guarded by runtime feature detection.
            return unsafe { dot_avx2(x, y) };
        }
    }
    dot_lanes(x, y)
}
