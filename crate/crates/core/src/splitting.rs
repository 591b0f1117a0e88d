//! Closed-form proximal maps of the two halves of the transport splitting:
//! the shifted clamp `[Y - rho C]_+` and the Euclidean projection onto the
//! affine set of matrices with prescribed row and column sums.

use crate::error::OtError;
use crate::matrix::Matrix;

/// Defect vectors and the shared correction `gamma` of a coupling projection.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingProjectionScratch {
    /// `X e - p`
    pub row_defect: Vec<f64>,
    /// `X^T f - q`
    pub col_defect: Vec<f64>,
    pub gamma: f64,
}

impl CouplingProjectionScratch {
    pub fn compute(x: &Matrix, p: &[f64], q: &[f64]) -> Result<Self, OtError> {
        x.check_shape(p.len(), q.len())?;
        let (m, n) = x.shape();
        let row_defect: Vec<f64> = x.row_sums().iter().zip(p).map(|(s, p)| s - p).collect();
        let col_defect: Vec<f64> = x.col_sums().iter().zip(q).map(|(s, q)| s - q).collect();
        let gamma = row_defect.iter().sum::<f64>() / (m + n) as f64;
        debug_assert!(
            {
                let other = col_defect.iter().sum::<f64>() / (m + n) as f64;
                (gamma - other).abs() <= 1e-10 * (1.0 + gamma.abs().max(x.max_abs()))
            },
            "row and column expressions for gamma disagree"
        );
        Ok(Self { row_defect, col_defect, gamma })
    }

    /// The column-defect expression for `gamma`; equal to `gamma` up to rounding.
    pub fn gamma_from_cols(&self) -> f64 {
        let (m, n) = (self.row_defect.len(), self.col_defect.len());
        self.col_defect.iter().sum::<f64>() / (m + n) as f64
    }
}

/// Projects `x` onto `{Z : Z e = p, Z^T f = q}`.
///
/// Two matrix-vector products followed by the rank-one corrections
/// `Z_ij = X_ij - (a_i - gamma)/n - (b_j - gamma)/m`.
pub fn project_coupling(x: &Matrix, p: &[f64], q: &[f64]) -> Result<Matrix, OtError> {
    let mut out = x.clone();
    project_coupling_in_place(&mut out, p, q)?;
    Ok(out)
}

pub fn project_coupling_in_place(x: &mut Matrix, p: &[f64], q: &[f64]) -> Result<(), OtError> {
    let scratch = CouplingProjectionScratch::compute(x, p, q)?;
    let (m, n) = x.shape();
    let (mf, nf) = (m as f64, n as f64);
    let row_shift: Vec<f64> = scratch.row_defect.iter().map(|a| (a - scratch.gamma) / nf).collect();
    for j in 0..n {
        let col_shift = (scratch.col_defect[j] - scratch.gamma) / mf;
        for (v, r) in x.col_mut(j).iter_mut().zip(&row_shift) {
            *v = *v - r - col_shift;
        }
    }
    Ok(())
}

/// `max(y - rho C, 0)` entrywise: the proximal map of `<C, .>` plus the
/// nonnegativity indicator.
pub fn prox_nonneg_linear(y: &Matrix, cost: &Matrix, rho: f64) -> Result<Matrix, OtError> {
    if !(rho > 0.0) {
        return Err(OtError::NonPositiveRho(rho));
    }
    y.check_shape(cost.rows(), cost.cols())?;
    let data = y
        .as_slice()
        .iter()
        .zip(cost.as_slice())
        .map(|(&v, &c)| (v - rho * c).max(0.0))
        .collect();
    Matrix::from_col_major(y.rows(), y.cols(), data)
}

/// Projects `(y, x)` onto the range of `X -> (X e, X^T f)`, i.e. onto pairs
/// with equal total mass: `(y - alpha f, x + alpha e)`.
pub fn project_range(y: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (y.len(), x.len());
    if m + n == 0 {
        return (Vec::new(), Vec::new());
    }
    let alpha = (y.iter().sum::<f64>() - x.iter().sum::<f64>()) / (m + n) as f64;
    (
        y.iter().map(|v| v - alpha).collect(),
        x.iter().map(|v| v + alpha).collect(),
    )
}
