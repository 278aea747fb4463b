use crate::error::{Error, Result};
use crate::grid::DensityGrid1D;

/// Floor added inside both logarithms of the discretized KL.
pub const KL_EPS: f64 = 1e-12;

/// Discretized forward KL `D(q ‖ p) = Σ_i q_i (ln(q_i+ε) − ln(p_i+ε)) Δ` on a
/// shared grid. Both inputs are renormalized to unit mass first and the result
/// is clamped at zero.
pub fn kl_1d(q: &DensityGrid1D, p: &DensityGrid1D) -> Result<f64> {
    if q.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    let dx = q.width();
    let (zq, zp) = (q.mass(), p.mass());
    if !(zq > 0.0 && zp > 0.0) {
        return Err(Error::Numerical("KL of a zero-mass density grid".into()));
    }
    let kl = kl_terms(q.values().iter().map(|v| v / zq), p.values().iter().map(|v| v / zp), dx);
    Ok(kl.max(0.0))
}

/// Unclamped sum over already-normalized values.
pub(crate) fn kl_terms(
    q: impl Iterator<Item = f64>,
    p: impl Iterator<Item = f64>,
    dx: f64,
) -> f64 {
    q.zip(p)
        .map(|(qi, pi)| qi * ((qi + KL_EPS).ln() - (pi + KL_EPS).ln()))
        .sum::<f64>()
        * dx
}
