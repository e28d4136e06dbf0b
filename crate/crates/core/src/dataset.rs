//! Dense in-memory sample matrix.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KkmError, Result};

/// Where a dataset came from and what was done to it on load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub format: String,
    pub notes: Vec<String>,
}

/// `n × d` row-major samples with optional per-sample class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n: usize,
    d: usize,
    samples: Vec<f64>,
    labels: Option<Vec<u32>>,
    pub provenance: Provenance,
}

impl DataSet {
    pub fn new(n: usize, d: usize, samples: Vec<f64>, labels: Option<Vec<u32>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(KkmError::input(format!(
                "dataset must have at least one sample and one feature (got {n} x {d})"
            )));
        }
        if samples.len() != n * d {
            return Err(KkmError::input(format!(
                "sample buffer holds {} values, expected {n} x {d}",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(KkmError::input(format!(
                "non-finite value at sample {}, feature {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(KkmError::input(format!(
                    "label count {} does not match sample count {n}",
                    l.len()
                )));
            }
        }
        Ok(Self {
            n,
            d,
            samples,
            labels,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    /// Borrowed rows in the order given by `indices`.
    pub fn rows(&self, indices: &[usize]) -> Vec<&[f64]> {
        indices.iter().map(|&i| self.row(i)).collect()
    }

    pub fn all_rows(&self) -> Vec<&[f64]> {
        self.samples.chunks_exact(self.d).collect()
    }

    /// Copies the selected samples (and labels) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<DataSet> {
        let mut samples = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(KkmError::input(format!("index {i} out of range for {} samples", self.n)));
            }
            samples.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let mut out = DataSet::new(indices.len(), self.d, samples, labels)?;
        out.provenance = self.provenance.clone();
        out.provenance
            .notes
            .push(format!("subset of {} samples", indices.len()));
        Ok(out)
    }

    /// SHA-256 over shape, sample bits and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for v in &self.samples {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            h.update([1u8]);
            for v in l {
                h.update(v.to_le_bytes());
            }
        } else {
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_shape_errors() {
        assert!(DataSet::new(1, 2, vec![0.0, f64::NAN], None).is_err());
        assert!(DataSet::new(2, 2, vec![0.0; 3], None).is_err());
        assert!(DataSet::new(0, 2, vec![], None).is_err());
        assert!(DataSet::new(2, 1, vec![0.0, 1.0], Some(vec![0])).is_err());
    }

    #[test]
    fn subset_and_fingerprint() {
        let ds = DataSet::new(3, 2, vec![0., 1., 2., 3., 4., 5.], Some(vec![0, 1, 2])).unwrap();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.row(0), &[4., 5.]);
        assert_eq!(sub.labels().unwrap(), &[2, 0]);
        assert_ne!(ds.fingerprint(), sub.fingerprint());
        assert_eq!(ds.fingerprint(), ds.clone().fingerprint());
    }
}
