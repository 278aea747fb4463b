//! Random directions, projections, and kernel density estimates of projected
//! samples.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::gmm::Marginal1DGmm;
use crate::grid::{DensityGrid1D, GridSpec};
use crate::types::{SampleBatch, UnitVector};

/// Kernels are evaluated only within this many bandwidths of their center;
/// beyond it a kernel is below `e^-50` of its peak.
pub const KERNEL_CUTOFF: f64 = 10.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Uniform direction on the unit sphere: a normalized standard normal vector.
pub fn sample_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<UnitVector> {
    if dim == 0 {
        return Err(Error::invalid("direction dimension must be >= 1"));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if crate::types::l2(&v) >= 1e-12 {
            return UnitVector::normalized(v);
        }
    }
}

/// `z_n · u` for every sample.
pub fn project(samples: &SampleBatch, u: &UnitVector) -> Result<Vec<f64>> {
    ensure_dim(samples.dim(), u.dim())?;
    Ok(samples.rows().map(|z| u.dot(z)).collect())
}

/// How [`grid_for`] sizes the integration grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRule {
    pub bandwidth: f64,
    /// Padding around the projected samples, in bandwidths.
    pub padding: f64,
    pub bins: usize,
}

/// Integration grid covering the projected samples (padded by
/// `padding · h`) and every marginal component out to four standard
/// deviations. Degenerate spans are widened to `8h`.
pub fn grid_for(
    projections: &[f64],
    marginal: Option<&Marginal1DGmm>,
    rule: &GridRule,
) -> Result<GridSpec> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if !projections.is_empty() {
        ensure_finite(projections, "projections")?;
        let pad = rule.padding * rule.bandwidth;
        for &s in projections {
            lo = lo.min(s - pad);
            hi = hi.max(s + pad);
        }
    }
    if let Some(marginal) = marginal {
        for (&m, &v) in marginal.means().iter().zip(marginal.variances()) {
            let reach = 4.0 * v.sqrt();
            lo = lo.min(m - reach);
            hi = hi.max(m + reach);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("grid_for needs projections or a marginal"));
    }
    let min_span = 8.0 * rule.bandwidth;
    if hi - lo < min_span {
        let mid = 0.5 * (lo + hi);
        lo = mid - 0.5 * min_span;
        hi = mid + 0.5 * min_span;
    }
    GridSpec::new(lo, hi, rule.bins)
}

/// Kernel density estimate at the grid centers, renormalized to unit mass on
/// the grid.
pub fn kde_density(projections: &[f64], bandwidth: f64, grid: &GridSpec) -> Result<DensityGrid1D> {
    DensityGrid1D::normalized(*grid, kde_raw(projections, bandwidth, grid)?)
}

/// `(1/(N h)) Σ_n φ((x_i − s_n)/h)` at every grid center, before
/// renormalization.
pub fn kde_raw(projections: &[f64], bandwidth: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    if projections.is_empty() {
        return Err(Error::invalid("kernel density estimate needs at least one sample"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    ensure_finite(projections, "projections")?;
    let mut values = vec![0.0; grid.bins];
    for &s in projections {
        sweep_kernel(grid, s, bandwidth, |i, _, k| values[i] += k);
    }
    let scale = INV_SQRT_2PI / (projections.len() as f64 * bandwidth);
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(values)
}

/// Rule-of-thumb bandwidth `1.06 · σ̂ · N^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid("Silverman bandwidth needs at least two values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    silverman_from_std(var.sqrt(), values.len())
}

pub(crate) fn silverman_from_std(std: f64, n: usize) -> Result<f64> {
    let h = 1.06 * std * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::invalid("Silverman bandwidth is degenerate (zero spread)"))
    }
}

/// Visits every grid cell within [`KERNEL_CUTOFF`] bandwidths of `center`,
/// passing the cell index, the standardized offset `t = (x_i − center)/h` and
/// the unnormalized kernel `exp(−t²/2)`.
///
/// On a uniform grid consecutive kernel values differ by a factor that itself
/// decays geometrically, so one `exp` per 32 cells suffices.
#[inline]
pub(crate) fn sweep_kernel(
    grid: &GridSpec,
    center: f64,
    bandwidth: f64,
    mut visit: impl FnMut(usize, f64, f64),
) {
    const RESYNC: usize = 32;
    let dx = grid.width();
    let reach = KERNEL_CUTOFF * bandwidth;
    let first = ((center - reach - grid.lo) / dx - 0.5).ceil().max(0.0);
    let last = ((center + reach - grid.lo) / dx - 0.5).floor().min((grid.bins - 1) as f64);
    if first > last {
        return;
    }
    let (first, last) = (first as usize, last as usize);
    let a = dx / bandwidth;
    let decay = (-a * a).exp();
    let inv_h = 1.0 / bandwidth;
    let mut kernel = 0.0;
    let mut ratio = 0.0;
    for (j, i) in (first..=last).enumerate() {
        let t = (grid.lo + (i as f64 + 0.5) * dx - center) * inv_h;
        if j % RESYNC == 0 {
            kernel = (-0.5 * t * t).exp();
            ratio = (-t * a - 0.5 * a * a).exp();
        }
        visit(i, t, kernel);
        kernel *= ratio;
        ratio *= decay;
    }
}
