//! Synthetic datasets: the four-Gaussian 2D toy and noisy replicas of a base set.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{DataSet, Provenance};
use crate::error::{KkmError, Result};
use crate::rng::substream;

pub const TOY_CENTERS: [[f64; 2]; 4] = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
pub const TOY_SIGMA: f64 = 0.2;

/// `4 × per_cluster` points, emitted cluster by cluster.
pub fn generate_toy2d(per_cluster: usize, seed: u64) -> Result<DataSet> {
    if per_cluster == 0 {
        return Err(KkmError::input("per-cluster count must be at least 1"));
    }
    let normal = Normal::new(0.0, TOY_SIGMA).expect("valid sigma");
    let mut samples = Vec::with_capacity(per_cluster * 8);
    let mut labels = Vec::with_capacity(per_cluster * 4);
    for (j, c) in TOY_CENTERS.iter().enumerate() {
        let mut rng = substream(seed, "toy", j as u64);
        for _ in 0..per_cluster {
            samples.push(c[0] + normal.sample(&mut rng));
            samples.push(c[1] + normal.sample(&mut rng));
            labels.push(j as u32);
        }
    }
    let ds = DataSet::new(per_cluster * 4, 2, samples, Some(labels))?;
    Ok(ds.with_provenance(Provenance {
        source: format!("toy2d(per_cluster={per_cluster}, seed={seed})"),
        format: "generated".into(),
        notes: vec!["sorted by planted cluster".into()],
    }))
}

/// `copies` replicas of every base sample (replicas of one sample are
/// adjacent). Each replica perturbs `⌊fraction·d⌋` distinct features by
/// `u ~ U(−0.5, 0.5)` and clamps to `[0, 1]`; when clamping would undo the
/// perturbation, `x − u` is used instead so every chosen feature changes.
pub fn generate_noisy(base: &DataSet, copies: usize, fraction: f64, seed: u64) -> Result<DataSet> {
    if copies == 0 {
        return Err(KkmError::input("copies must be at least 1"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(KkmError::input(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let (n, d) = (base.len(), base.dim());
    let k = (fraction * d as f64).floor() as usize;
    let mut samples = Vec::with_capacity(n * copies * d);
    for i in 0..n {
        let mut rng = substream(seed, "noise", i as u64);
        let x = base.row(i);
        for _ in 0..copies {
            let start = samples.len();
            samples.extend_from_slice(x);
            if k == 0 {
                continue;
            }
            for f in index::sample(&mut rng, d, k) {
                let u = loop {
                    let u: f64 = rng.random_range(-0.5..0.5);
                    if u != 0.0 {
                        break u;
                    }
                };
                let orig = x[f];
                let mut v = (orig + u).clamp(0.0, 1.0);
                if v == orig {
                    v = (orig - u).clamp(0.0, 1.0);
                }
                samples[start + f] = v;
            }
        }
    }
    let labels = base
        .labels()
        .map(|l| l.iter().flat_map(|&y| std::iter::repeat_n(y, copies)).collect());
    let mut prov = base.provenance.clone();
    prov.notes.push(format!(
        "{copies} noisy copies per sample, {k} features perturbed with U(-0.5,0.5), clamped to [0,1], seed {seed}"
    ));
    Ok(DataSet::new(n * copies, d, samples, labels)?.with_provenance(prov))
}
