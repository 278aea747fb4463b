//! Uniform 1-D grids and the densities discretized on them.

use crate::error::{ensure_finite, Error, Result};

/// `bins` equal cells covering `[lo, hi]`; values live at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::invalid(format!("grid needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if bins < 2 {
            return Err(Error::invalid("grid needs at least 2 bins"));
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let w = self.width();
        (0..self.bins).map(move |i| self.lo + (i as f64 + 0.5) * w)
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self { lo: self.lo + by, hi: self.hi + by, bins: self.bins }
    }
}

/// A nonnegative density sampled at the cell centers of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid1D {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DensityGrid1D {
    /// Wraps raw values without renormalizing.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.bins {
            return Err(Error::DimensionMismatch { expected: grid.bins, found: values.len() });
        }
        ensure_finite(&values, "density grid")?;
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("density grid has negative values"));
        }
        Ok(Self { grid, values })
    }

    /// Wraps raw values and rescales them so `Σ values·Δ = 1`.
    pub fn normalized(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::new(grid, values)?;
        d.renormalize()?;
        Ok(d)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn width(&self) -> f64 {
        self.grid.width()
    }

    /// `Σ values·Δ`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.width()
    }

    pub fn renormalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numerical(format!("density grid has mass {mass}")));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    }
}
