//! Dense parameter vectors and the small amount of arithmetic the
//! optimization loops need.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Deref, Index};

/// A point θ ∈ R^n (also used for gradients and search directions).
///
/// Entries are finite by construction; operations that could produce
/// NaN/Inf are guarded at the call sites that own the failure mode
/// (the run loops treat a non-finite iterate as divergence).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Build from raw entries, rejecting NaN/Inf.
    pub fn new(values: Vec<f64>) -> Result<Self, NonFiniteEntry> {
        match values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(NonFiniteEntry { index, value: values[index] }),
            None => Ok(ParamVector(values)),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        ParamVector((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        ParamVector(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// self + s·other
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    /// In-place self += other, used by the pairwise accumulators.
    pub fn accumulate(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }
}

/// Error for an attempted construction with NaN/Inf entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonFiniteEntry {
    pub index: usize,
    pub value: f64,
}

impl fmt::Display for NonFiniteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "non-finite entry {} at index {}", self.value, self.index)
    }
}

impl std::error::Error for NonFiniteEntry {}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParamVector({:?})", self.0)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    /// Panics on non-finite entries; use [`ParamVector::new`] for fallible input.
    fn from(values: Vec<f64>) -> Self {
        ParamVector::new(values).expect("finite entries")
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn arithmetic() {
        let a = ParamVector::from(vec![1.0, 2.0]);
        let b = ParamVector::from(vec![3.0, -1.0]);
        assert_eq!(a.dot(&b), 1.0);
        assert_eq!(a.add(&b).as_slice(), &[4.0, 1.0]);
        assert_eq!(a.sub(&b).as_slice(), &[-2.0, 3.0]);
        assert_eq!(a.add_scaled(2.0, &b).as_slice(), &[7.0, 0.0]);
        assert_eq!(b.norm_sq(), 10.0);
    }
}
