//! Dense linear-algebra kernels: thin SVD, thin QR, least squares and
//! truncated pseudo-inverse. Everything downstream builds on these.
//!
//! All operations are pure functions on immutable inputs and safe to call
//! concurrently.

mod matrix;
mod qr;
mod svd;

pub use matrix::{dot, gemm, norm2, DenseMatrix};
pub use qr::{QrFactor, QrResult};
pub use svd::{thin_svd, SvdResult};

use crate::error::{Error, Result};

/// Diagonal entries of R below this (absolute) threshold are reported as
/// near-zero in the thin-QR rank report.
const QR_DIAG_TOL: f64 = 1e-12;

/// Default relative truncation threshold for the pseudo-inverse.
pub const PINV_DEFAULT_TOL: f64 = 1e-12;

/// Thin QR decomposition of `m` (rows >= cols). Rank-deficient inputs
/// succeed; offending diagonals are flagged in the result's rank report.
pub fn thin_qr(m: &DenseMatrix) -> QrResult {
    let f = QrFactor::new(m);
    let r = f.r();
    let small_diagonals = f
        .r_diagonal()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() < QR_DIAG_TOL)
        .map(|(i, _)| i)
        .collect();
    QrResult {
        q: f.thin_q(),
        r,
        small_diagonals,
    }
}

/// Solution of a linear least-squares problem together with the
/// rank-deficiency flag callers use to judge trustworthiness.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// True when the QR route detected rank deficiency and the minimum-norm
    /// SVD fallback produced the solution.
    pub rank_deficient: bool,
}

/// Solves `min ||a x - b||_2` via Householder QR. Rank-deficient systems
/// fall back to the minimum-norm SVD solution, flagged in the result.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<LstsqSolution> {
    if a.rows() < a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "least_squares needs rows >= cols, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs {} rows",
            b.len(),
            a.rows()
        )));
    }
    let f = QrFactor::new(a);
    let diag = f.r_diagonal();
    let dmax = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let deficient = dmax == 0.0 || diag.iter().any(|d| d.abs() < 1e-13 * dmax);
    if deficient {
        let pinv = pseudo_inverse(a, PINV_DEFAULT_TOL)?;
        return Ok(LstsqSolution {
            x: pinv.matvec(b),
            rank_deficient: true,
        });
    }
    let mut y = b.to_vec();
    f.apply_qt(&mut y);
    let x = f
        .solve_upper(&y)
        .expect("full-rank R has nonzero diagonal");
    Ok(LstsqSolution {
        x,
        rank_deficient: false,
    })
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rel_tol * sigma_max` truncated to zero.
pub fn pseudo_inverse(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidMatrix(format!(
            "pseudo_inverse rel_tol must be in (0,1), got {rel_tol}"
        )));
    }
    let svd = thin_svd(m)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let cut = rel_tol * smax;
    // V diag(1/sigma) Uᵀ, truncated.
    let k = svd.singular_values.len();
    let mut vs = svd.v.clone();
    for c in 0..k {
        let s = svd.singular_values[c];
        let inv = if s > cut && s > 0.0 { 1.0 / s } else { 0.0 };
        for r in 0..vs.rows() {
            vs.set(r, c, vs.get(r, c) * inv);
        }
    }
    Ok(vs.matmul(&svd.u.transpose()))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::DenseMatrix;

    /// Deterministic pseudo-random matrix (splitmix64 stream).
    pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
        let mut next = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z = z ^ (z >> 31);
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let data = (0..rows * cols).map(|_| next()).collect();
        DenseMatrix::from_row_major(rows, cols, data).unwrap()
    }

    pub fn assert_close(a: &f64, b: &f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {b} within {tol}, got {a} (diff {})",
            (a - b).abs()
        );
    }
}
