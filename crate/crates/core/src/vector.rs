//! Dense signals and support sets.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("vector must have at least one entry");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("entry {i} is not finite ({})", values[i]));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn nnz(&self) -> usize {
        nnz(&self.0)
    }

    pub fn support(&self) -> SupportSet {
        SupportSet {
            indices: support_of(&self.0),
            dimension: self.0.len(),
        }
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Strictly increasing index set inside `0..dimension`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    dimension: usize,
}

impl SupportSet {
    /// Builds a support from arbitrary indices; they are sorted, duplicates rejected.
    pub fn new(mut indices: Vec<usize>, dimension: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return invalid(format!("duplicate index {} in support", w[0]));
        }
        if let Some(&last) = indices.last() {
            if last >= dimension {
                return invalid(format!("index {last} out of range for dimension {dimension}"));
            }
        }
        Ok(Self { indices, dimension })
    }

    pub fn full(dimension: usize) -> Self {
        Self {
            indices: (0..dimension).collect(),
            dimension,
        }
    }

    pub fn empty(dimension: usize) -> Self {
        Self {
            indices: Vec::new(),
            dimension,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

pub(crate) fn support_of(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| i)
        .collect()
}
