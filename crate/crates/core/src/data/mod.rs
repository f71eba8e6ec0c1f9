//! Labeled datasets, client partitioning, and the non-GAN poisoning transforms.

pub mod idx;
mod partition;
mod poison;
mod synth;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub use idx::{load_idx, save_idx};
pub use partition::{partition, PartitionMode, PartitionPlan};
pub use poison::{
    add_cosine_noise, add_gaussian_noise, add_sap_noise, flip_labels, gaussian_perturbations,
};
pub use synth::{gen_glyphs, gen_synthetic, GLYPH_SIDE};

/// Feature matrix (rows are samples, values in `[0, 1]`) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// `(rows, cols)` when features are a row-major image.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape {
                context: "dataset labels",
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::precondition(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::precondition("features must be finite and within [0, 1]"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            image_shape: None,
        })
    }

    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            features: Array2::zeros((0, feature_dim)),
            labels: Vec::new(),
            num_classes,
            image_shape: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.feature_dim() != other.feature_dim() {
            return Err(Error::Shape {
                context: "dataset concat",
                expected: self.feature_dim(),
                found: other.feature_dim(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("matching columns");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            features,
            labels,
            num_classes: self.num_classes.max(other.num_classes),
            image_shape: self.image_shape,
        })
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Shannon entropy (nats) of the label distribution.
    pub fn label_entropy(&self) -> f64 {
        let n = self.len() as f64;
        self.label_counts()
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }

    /// Split off the first `n` rows.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Same features with every label erased to class 0.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: vec![0; self.len()],
            ..self.clone()
        }
    }

    pub fn one_hot_labels(&self) -> Array2<f64> {
        crate::nn::one_hot(&self.labels, self.num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn validation() {
        assert!(Dataset::new(array![[0.5, 0.2]], vec![0, 1], 2).is_err());
        assert!(Dataset::new(array![[0.5, 1.2]], vec![0], 2).is_err());
        assert!(Dataset::new(array![[0.5, 0.2]], vec![2], 2).is_err());
        assert!(Dataset::new(array![[0.5, 0.2]], vec![1], 2).is_ok());
    }

    #[test]
    fn entropy_of_uniform_labels() {
        let ds = Dataset::new(Array2::zeros((4, 1)), vec![0, 1, 2, 3], 4).unwrap();
        assert!((ds.label_entropy() - 4f64.ln()).abs() < 1e-12);
    }
}
