//! Input-space competitors: Lloyd's k-means and Sculley's mini-batch SGD k-means.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{KkmError, Result};
use crate::kernels::squared_distance;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub sgd_batch_size: usize,
    /// Mini-batches to draw; `None` means `max(1, N / sgd_batch_size)`.
    pub sgd_iterations: Option<usize>,
}

impl BaselineConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            seed,
            max_iters: 300,
            sgd_batch_size: 1000,
            sgd_iterations: None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.clusters == 0 || self.max_iters == 0 || self.sgd_batch_size == 0 {
            return Err(KkmError::input("baseline parameters must be positive"));
        }
        if self.sgd_iterations == Some(0) {
            return Err(KkmError::input("sgd iterations must be positive"));
        }
        if n < self.clusters {
            return Err(KkmError::input(format!("{n} samples cannot form {} clusters", self.clusters)));
        }
        Ok(())
    }

    pub fn resolved_sgd_iterations(&self, n: usize) -> usize {
        self.sgd_iterations.unwrap_or((n / self.sgd_batch_size).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub labels: Vec<u32>,
    /// `C × d`, row-major.
    pub centers: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub center_counts: Vec<u64>,
}

fn nearest_center(x: &[f64], centers: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(d).enumerate() {
        let dist = squared_distance(x, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign(data: &DataSet, centers: &[f64]) -> (Vec<u32>, f64) {
    let d = data.dim();
    let mut cost = 0.0;
    let labels = data
        .all_rows()
        .iter()
        .map(|x| {
            let (j, dist) = nearest_center(x, centers, d);
            cost += dist;
            j as u32
        })
        .collect();
    (labels, cost)
}

/// Euclidean k-means++ seeding; returns sample indices.
pub fn kmeanspp_seeds<R: Rng>(data: &DataSet, clusters: usize, rng: &mut R) -> Vec<usize> {
    let n = data.len();
    let mut picks = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vec![f64::INFINITY; n];
    while picks.len() < clusters {
        let m = data.row(*picks.last().expect("non-empty"));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), m));
        }
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|i| !picks.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        picks.push(next);
    }
    picks
}

/// Full-batch Lloyd iterations from k-means++ seeds. An empty cluster keeps
/// its previous center.
pub fn lloyd_kmeans(data: &DataSet, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    let n = data.len();
    cfg.validate(n)?;
    let (c, d) = (cfg.clusters, data.dim());
    let mut rng = substream(cfg.seed, "baseline-lloyd", 0);
    let seeds = kmeanspp_seeds(data, c, &mut rng);
    let mut centers: Vec<f64> = seeds.iter().flat_map(|&i| data.row(i).to_vec()).collect();
    let (mut labels, mut cost) = assign(data, &centers);
    let mut trace = vec![cost];
    let mut iterations = 0;
    let mut counts = vec![0u64; c];
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut sums = vec![0.0; c * d];
        counts = vec![0u64; c];
        for (i, &l) in labels.iter().enumerate() {
            let l = l as usize;
            counts[l] += 1;
            for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        for j in 0..c {
            if counts[j] > 0 {
                for k in 0..d {
                    centers[j * d + k] = sums[j * d + k] / counts[j] as f64;
                }
            }
        }
        let (next, next_cost) = assign(data, &centers);
        let changed = next != labels;
        labels = next;
        cost = next_cost;
        trace.push(cost);
        if !changed {
            break;
        }
    }
    Ok(BaselineOutput {
        labels,
        centers,
        cost,
        iterations,
        cost_trace: trace,
        center_counts: counts,
    })
}

/// Mini-batch SGD k-means with per-center step `1 / count`.
pub fn sgd_minibatch_kmeans(data: &DataSet, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    let n = data.len();
    cfg.validate(n)?;
    let (c, d) = (cfg.clusters, data.dim());
    let mut rng = substream(cfg.seed, "baseline-sgd", 0);
    let seeds = index::sample(&mut rng, n, c).into_vec();
    let mut centers: Vec<f64> = seeds.iter().flat_map(|&i| data.row(i).to_vec()).collect();
    let mut counts = vec![0u64; c];
    let iterations = cfg.resolved_sgd_iterations(n);
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let batch: Vec<usize> = if cfg.sgd_batch_size >= n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, cfg.sgd_batch_size).into_vec()
        };
        let owners: Vec<usize> = batch
            .iter()
            .map(|&i| nearest_center(data.row(i), &centers, d).0)
            .collect();
        let mut batch_cost = 0.0;
        for (&i, &j) in batch.iter().zip(&owners) {
            counts[j] += 1;
            let eta = 1.0 / counts[j] as f64;
            let x = data.row(i);
            let center = &mut centers[j * d..(j + 1) * d];
            batch_cost += squared_distance(x, center);
            for (cv, xv) in center.iter_mut().zip(x) {
                *cv = (1.0 - eta) * *cv + eta * xv;
            }
        }
        trace.push(batch_cost);
    }
    let (labels, cost) = assign(data, &centers);
    Ok(BaselineOutput {
        labels,
        centers,
        cost,
        iterations,
        cost_trace: trace,
        center_counts: counts,
    })
}
