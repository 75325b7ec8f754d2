//! Probability proportions over the sub-attributes of one protected attribute.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{argmax, stable_sum};

/// Allowed distance of a proportion vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProportionError {
    #[error("proportion vector is empty")]
    Empty,
    #[error("component {index} is {value}, expected a finite non-negative number")]
    InvalidComponent { index: usize, value: f64 },
    #[error("components sum to {sum}, expected 1 ± {SUM_TOLERANCE}")]
    BadSum { sum: f64 },
    #[error("expected {expected} components, found {found}")]
    Length { expected: usize, found: usize },
}

/// Non-negative values, aligned to a protected attribute's declared
/// sub-attribute order, that sum to 1 within [`SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProportionVector(Vec<f64>);

impl ProportionVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProportionError> {
        if values.is_empty() {
            return Err(ProportionError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ProportionError::InvalidComponent { index, value });
        }
        let sum = stable_sum(values.iter().copied());
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ProportionError::BadSum { sum });
        }
        Ok(Self(values))
    }

    /// Validates and additionally checks the component count.
    pub fn with_len(values: Vec<f64>, expected: usize) -> Result<Self, ProportionError> {
        if values.len() != expected {
            return Err(ProportionError::Length {
                expected,
                found: values.len(),
            });
        }
        Self::new(values)
    }

    /// One-hot vector of length `len` with the mass at `index`.
    pub fn one_hot(len: usize, index: usize) -> Self {
        assert!(index < len, "one-hot index {index} out of range for {len}");
        let mut values = vec![0.0; len];
        values[index] = 1.0;
        Self(values)
    }

    /// Uniform vector of length `len`.
    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    /// Scales non-negative weights to sum 1.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, ProportionError> {
        if weights.is_empty() {
            return Err(ProportionError::Empty);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ProportionError::InvalidComponent { index, value });
        }
        let total = stable_sum(weights.iter().copied());
        if total.is_nan() || total <= 0.0 {
            return Err(ProportionError::BadSum { sum: total });
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        stable_sum(self.0.iter().copied())
    }

    /// Declaration-order argmax.
    pub fn argmax(&self) -> usize {
        argmax(&self.0).expect("proportion vectors are non-empty")
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|&&v| v == 1.0).count() == 1
            && self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProportionVector {
    type Error = ProportionError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<ProportionVector> for Vec<f64> {
    fn from(v: ProportionVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for ProportionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sum_and_negatives() {
        assert!(matches!(
            ProportionVector::new(vec![0.5, 0.3]),
            Err(ProportionError::BadSum { .. })
        ));
        assert!(matches!(
            ProportionVector::new(vec![1.2, -0.2]),
            Err(ProportionError::InvalidComponent { index: 1, .. })
        ));
        assert!(matches!(
            ProportionVector::new(vec![f64::NAN, 1.0]),
            Err(ProportionError::InvalidComponent { index: 0, .. })
        ));
        assert_eq!(ProportionVector::new(vec![]), Err(ProportionError::Empty));
    }

    #[test]
    fn accepts_sum_within_tolerance() {
        assert!(ProportionVector::new(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(ProportionVector::new(vec![0.5, 0.5 + 2e-6]).is_err());
    }

    #[test]
    fn length_check() {
        assert_eq!(
            ProportionVector::with_len(vec![1.0], 2),
            Err(ProportionError::Length {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn serde_is_a_plain_array() {
        let v = ProportionVector::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "[0.25,0.75]");
        let back: ProportionVector = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<ProportionVector>("[0.25,0.5]").is_err());
    }

    #[test]
    fn one_hot_and_normalized() {
        let v = ProportionVector::one_hot(3, 1);
        assert!(v.is_one_hot());
        assert_eq!(v.argmax(), 1);
        let n = ProportionVector::normalized(vec![2.0, 6.0]).unwrap();
        assert_eq!(n.values(), &[0.25, 0.75]);
        assert!(!n.is_one_hot());
    }
}
