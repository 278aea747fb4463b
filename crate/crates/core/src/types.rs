//! Unit directions and sample batches.

use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Norm tolerance accepted by [`UnitVector::new`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A direction on the unit sphere in `R^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `components`, which must already have unit norm.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_nonempty_finite(&components, "unit vector")?;
        let norm = l2(&components);
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::invalid(format!("unit vector has norm {norm}")));
        }
        Ok(Self(components))
    }

    /// Scales `components` to unit norm.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self> {
        check_nonempty_finite(&components, "direction")?;
        let norm = l2(&components);
        if norm < 1e-12 {
            return Err(Error::invalid("direction has (near) zero norm"));
        }
        components.iter_mut().for_each(|c| *c /= norm);
        Ok(Self(components))
    }

    pub fn axis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("axis {index} out of range for dim {dim}")));
        }
        let mut c = vec![0.0; dim];
        c[index] = 1.0;
        Ok(Self(c))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        dot(&self.0, z)
    }
}

/// `count` samples of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    count: usize,
    dim: usize,
}

impl SampleBatch {
    pub fn new(data: Vec<f64>, count: usize, dim: usize) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::invalid("sample batch needs at least one sample and one dimension"));
        }
        ensure_dim(count * dim, data.len())?;
        ensure_finite(&data, "sample batch")?;
        Ok(Self { data, count, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            ensure_dim(dim, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), dim)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= self.count as f64);
        mean
    }

    /// Maximum-likelihood (divide by N) covariance, row-major `dim × dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let mean = self.mean();
        let m = self.dim;
        let mut cov = vec![0.0; m * m];
        for row in self.rows() {
            for i in 0..m {
                let di = row[i] - mean[i];
                for j in 0..=i {
                    cov[i * m + j] += di * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..m {
            for j in 0..=i {
                let v = cov[i * m + j] / self.count as f64;
                cov[i * m + j] = v;
                cov[j * m + i] = v;
            }
        }
        cov
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_nonempty_finite(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what} must have dimension >= 1")));
    }
    ensure_finite(values, what)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vector_rejects_bad_norm() {
        assert!(UnitVector::new(vec![1.0, 1.0]).is_err());
        assert!(UnitVector::new(vec![]).is_err());
        assert!(UnitVector::new(vec![f64::NAN]).is_err());
        assert!(UnitVector::normalized(vec![0.0, 0.0]).is_err());
        let u = UnitVector::normalized(vec![3.0, 4.0]).unwrap();
        assert!((l2(u.as_slice()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batch_validation() {
        assert!(SampleBatch::new(vec![], 0, 2).is_err());
        assert!(SampleBatch::new(vec![1.0, 2.0, 3.0], 2, 2).is_err());
        assert!(SampleBatch::new(vec![1.0, f64::INFINITY], 1, 2).is_err());
        assert!(SampleBatch::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn batch_moments() {
        let b = SampleBatch::from_rows(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(b.mean(), vec![1.0, 2.0]);
        assert_eq!(b.covariance(), vec![1.0, 2.0, 2.0, 4.0]);
    }
}
