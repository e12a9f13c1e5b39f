use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A point in parameter space `R^n`; the unit of communication, sanitization
/// and clustering. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector has non-finite entries"));
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        ParameterVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

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
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ParameterVector) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(squared_distance(&self.0, &other.0).sqrt())
    }

    /// `self − other`.
    pub fn difference(&self, other: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self.len(), other.len())?;
        ParameterVector::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + offset`.
    pub fn offset_by(&self, offset: &[f64]) -> Result<ParameterVector> {
        check_dim(self.len(), offset.len())?;
        ParameterVector::new(self.0.iter().zip(offset).map(|(a, b)| a + b).collect())
    }

    /// Arithmetic mean of equally sized vectors; `None` for an empty input.
    pub fn mean<'a, I>(vectors: I) -> Result<Option<ParameterVector>>
    where
        I: IntoIterator<Item = &'a ParameterVector>,
    {
        let mut sum: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for v in vectors {
            let acc = sum.get_or_insert_with(|| vec![0.0; v.len()]);
            check_dim(acc.len(), v.len())?;
            acc.iter_mut().zip(&v.0).for_each(|(a, b)| *a += b);
            count += 1;
        }
        sum.map(|s| ParameterVector::new(s.into_iter().map(|v| v / count as f64).collect()))
            .transpose()
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParameterVector::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
