//! Clustering quality and diagnostics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{KkmError, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub nmi: f64,
    pub global_cost: Option<f64>,
    pub samples: usize,
    pub clusters: usize,
    pub classes: usize,
}

fn check_pair(truth: &[u32], pred: &[u32]) -> Result<()> {
    if truth.is_empty() {
        return Err(KkmError::input("cannot evaluate an empty labeling"));
    }
    if truth.len() != pred.len() {
        return Err(KkmError::input(format!(
            "label vectors differ in length ({} vs {})",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

fn contingency(truth: &[u32], pred: &[u32]) -> BTreeMap<(u32, u32), u64> {
    let mut table = BTreeMap::new();
    for (&y, &u) in truth.iter().zip(pred) {
        *table.entry((u, y)).or_insert(0) += 1;
    }
    table
}

/// Fraction of samples whose cluster's majority class (smallest class on
/// ties) equals their own class.
pub fn clustering_accuracy(truth: &[u32], pred: &[u32]) -> Result<f64> {
    check_pair(truth, pred)?;
    let mut best: HashMap<u32, (u64, u32)> = HashMap::new();
    // Ascending (cluster, class) order makes the first maximum the smallest class.
    for ((u, y), n) in contingency(truth, pred) {
        let e = best.entry(u).or_insert((0, 0));
        if n > e.0 {
            *e = (n, y);
        }
    }
    let hits: u64 = best.values().map(|(n, _)| n).sum();
    Ok(hits as f64 / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by `√(H(u)·H(y))`, natural log.
pub fn nmi(truth: &[u32], pred: &[u32]) -> Result<f64> {
    check_pair(truth, pred)?;
    let n = truth.len() as f64;
    let mut ny: HashMap<u32, u64> = HashMap::new();
    let mut nu: HashMap<u32, u64> = HashMap::new();
    for (&y, &u) in truth.iter().zip(pred) {
        *ny.entry(y).or_insert(0) += 1;
        *nu.entry(u).or_insert(0) += 1;
    }
    let hy = entropy(ny.values().copied(), n);
    let hu = entropy(nu.values().copied(), n);
    if hy == 0.0 || hu == 0.0 {
        // A constant labeling carries no information; only two constant
        // labelings count as identical.
        return Ok(if hy == 0.0 && hu == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for ((u, y), o) in contingency(truth, pred) {
        let o = o as f64;
        mi += (o / n) * (n * o / (nu[&u] as f64 * ny[&y] as f64)).ln();
    }
    Ok((mi / (hu * hy).sqrt()).clamp(0.0, 1.0))
}

/// `Σ_i K(x_i,x_i) − 2K(x_i,m_{u_i}) + K(m_{u_i},m_{u_i})`.
pub fn global_cost(data: &DataSet, medoids: &[Option<usize>], labels: &[u32], spec: &KernelSpec) -> Result<f64> {
    if labels.len() != data.len() {
        return Err(KkmError::input("label count does not match the dataset"));
    }
    let diag: Vec<Option<f64>> = medoids
        .iter()
        .map(|m| m.map(|g| spec.apply(data.row(g), data.row(g))))
        .collect();
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let j = l as usize;
        let (Some(Some(m)), Some(Some(kmm))) = (medoids.get(j), diag.get(j)) else {
            return Err(KkmError::state(format!("sample {i} refers to missing medoid {j}")));
        };
        let x = data.row(i);
        total += spec.apply(x, x) - 2.0 * spec.apply(x, data.row(*m)) + kmm;
    }
    Ok(total)
}

/// Kernel-space distance between matching medoids; `None` where either side is absent.
pub fn medoid_displacement(
    spec: &KernelSpec,
    data: &DataSet,
    previous: &[Option<usize>],
    next: &[Option<usize>],
) -> Result<Vec<Option<f64>>> {
    if previous.len() != next.len() {
        return Err(KkmError::input("medoid sets differ in cluster count"));
    }
    Ok(previous
        .iter()
        .zip(next)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) if a == b => Some(0.0),
            (Some(a), Some(b)) => {
                let (x, y) = (data.row(*a), data.row(*b));
                Some(spec.feature_distance2(spec.apply(x, x), spec.apply(x, y), spec.apply(y, y)).sqrt())
            }
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowChoice {
    pub selected: usize,
    /// Second difference at each interior C.
    pub second_differences: Vec<(usize, f64)>,
    pub knee_found: bool,
}

/// Picks the C with the largest second difference of the cost curve.
pub fn elbow_select(costs: &BTreeMap<usize, f64>) -> Result<ElbowChoice> {
    if costs.len() < 3 {
        return Err(KkmError::input("elbow selection needs at least three cluster counts"));
    }
    if costs.values().any(|&c| !(c.is_finite() && c > 0.0)) {
        return Err(KkmError::input("elbow costs must be positive and finite"));
    }
    let pts: Vec<(usize, f64)> = costs.iter().map(|(&c, &v)| (c, v)).collect();
    let second: Vec<(usize, f64)> = pts
        .windows(3)
        .map(|w| (w[1].0, w[0].1 - 2.0 * w[1].1 + w[2].1))
        .collect();
    let mut best = second[0];
    for &s in &second[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if best.1 <= 1e-12 * scale {
        log::warn!("cost curve has no knee; returning the smallest cluster count");
        return Ok(ElbowChoice {
            selected: pts[0].0,
            second_differences: second,
            knee_found: false,
        });
    }
    Ok(ElbowChoice {
        selected: best.0,
        second_differences: second,
        knee_found: true,
    })
}

pub fn evaluate(truth: &[u32], pred: &[u32], global_cost: Option<f64>) -> Result<EvaluationReport> {
    let clusters = pred.iter().collect::<std::collections::HashSet<_>>().len();
    let classes = truth.iter().collect::<std::collections::HashSet<_>>().len();
    Ok(EvaluationReport {
        accuracy: clustering_accuracy(truth, pred)?,
        nmi: nmi(truth, pred)?,
        global_cost,
        samples: truth.len(),
        clusters,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 1, 2, 2], &[2, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.75);
        assert!(clustering_accuracy(&[], &[]).is_err());
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
        // More clusters than classes.
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[3, 3], &[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn cost_and_displacement() {
        let spec = KernelSpec::linear();
        let d = DataSet::new(4, 2, vec![0., 0., 1., 0., 3., 4., 3., 5.], None).unwrap();
        assert_eq!(global_cost(&d, &[Some(0), Some(1), Some(2), Some(3)], &[0, 1, 2, 3], &spec).unwrap(), 0.0);
        let cost = global_cost(&d, &[Some(0), Some(2)], &[0, 0, 1, 1], &spec).unwrap();
        assert!((cost - 2.0).abs() < 1e-12);
        assert!(global_cost(&d, &[Some(0), None], &[0, 0, 1, 1], &spec).is_err());

        let disp = medoid_displacement(&spec, &d, &[Some(0), Some(1), None], &[Some(0), Some(2), Some(2)]).unwrap();
        assert_eq!(disp[0], Some(0.0));
        assert!((disp[1].unwrap() - (4.0f64 + 16.0).sqrt()).abs() < 1e-12);
        assert_eq!(disp[2], None);
    }

    #[test]
    fn elbow_examples() {
        let costs: BTreeMap<usize, f64> = [(2, 100.0), (3, 40.0), (4, 35.0), (5, 33.0)].into();
        let e = elbow_select(&costs).unwrap();
        assert_eq!(e.selected, 3);
        assert_eq!(e.second_differences[0], (3, 55.0));

        let linear: BTreeMap<usize, f64> = (2..8).map(|c| (c, 100.0 - 10.0 * c as f64)).collect();
        let e = elbow_select(&linear).unwrap();
        assert_eq!(e.selected, 2);
        assert!(!e.knee_found);

        let short: BTreeMap<usize, f64> = [(2, 1.0), (3, 0.5)].into();
        assert!(elbow_select(&short).is_err());
    }

    proptest! {
        #[test]
        fn bounds_and_majority_floor(labels in proptest::collection::vec((0u32..4, 0u32..5), 1..60)) {
            let (y, u): (Vec<u32>, Vec<u32>) = labels.into_iter().unzip();
            let acc = clustering_accuracy(&y, &u).unwrap();
            let v = nmi(&y, &u).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            let mut counts = [0usize; 4];
            for &c in &y { counts[c as usize] += 1; }
            let floor = *counts.iter().max().unwrap() as f64 / y.len() as f64;
            prop_assert!(acc + 1e-12 >= floor);
        }

        #[test]
        fn relabeling_invariance(labels in proptest::collection::vec((0u32..3, 0u32..4), 1..40), shift in 1u32..4) {
            let (y, u): (Vec<u32>, Vec<u32>) = labels.into_iter().unzip();
            let renamed: Vec<u32> = u.iter().map(|&l| (l + shift) % 4 + 10).collect();
            prop_assert_eq!(clustering_accuracy(&y, &u).unwrap(), clustering_accuracy(&y, &renamed).unwrap());
            prop_assert!((nmi(&y, &u).unwrap() - nmi(&y, &renamed).unwrap()).abs() < 1e-12);
        }
    }
}
