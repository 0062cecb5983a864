use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(sigma) Vᵀ` with
/// `min(rows, cols)` triplets, singular values sorted descending.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

const MAX_SWEEPS_PER_VALUE: usize = 80;

/// Thin SVD via Golub-Kahan bidiagonalization and implicit-shift QR
/// iteration on the bidiagonal. Deterministic; no external dependency.
pub fn thin_svd(m: &DenseMatrix) -> Result<SvdResult> {
    if m.is_empty() {
        return Err(Error::InvalidMatrix("thin_svd of empty matrix".into()));
    }
    if m.rows() < m.cols() {
        let t = thin_svd(&m.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let (mut d, mut e, mut u, mut v) = bidiagonalize(m);
    bidiagonal_qr(&mut d, &mut e, &mut u, &mut v).map_err(|sweeps| Error::SvdNoConvergence {
        rows: m.rows(),
        cols: m.cols(),
        sweeps,
    })?;
    Ok(SvdResult {
        u,
        singular_values: d,
        v,
    })
}

/// Householder bidiagonalization of `m` (rows >= cols). Returns the
/// diagonal, superdiagonal, thin U (rows x cols) and V (cols x cols).
fn bidiagonalize(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>, DenseMatrix, DenseMatrix) {
    let rows = m.rows();
    let n = m.cols();
    // Work in a column-major copy: every reflector sweep walks columns.
    let mut a = vec![0.0; rows * n];
    for r in 0..rows {
        for c in 0..n {
            a[c * rows + r] = m.get(r, c);
        }
    }
    let at = |a: &[f64], r: usize, c: usize| a[c * rows + r];

    let mut left_tau = vec![0.0; n];
    let mut right_tau = vec![0.0; n];

    for k in 0..n {
        // Left reflector: zero a[k+1.., k].
        let tau = {
            let col = &mut a[k * rows + k..(k + 1) * rows];
            make_reflector(col)
        };
        left_tau[k] = tau;
        if tau != 0.0 {
            for c in k + 1..n {
                let (lo, hi) = a.split_at_mut(c * rows);
                let vcol = &lo[k * rows + k..(k + 1) * rows];
                let target = &mut hi[k..rows];
                let mut w = target[0];
                for r in 1..rows - k {
                    w += vcol[r] * target[r];
                }
                w *= tau;
                target[0] -= w;
                for r in 1..rows - k {
                    target[r] -= w * vcol[r];
                }
            }
        }
        // Right reflector: zero a[k, k+2..].
        if k + 2 < n {
            let mut rowv: Vec<f64> = (k + 1..n).map(|c| at(&a, k, c)).collect();
            let tau = make_reflector(&mut rowv);
            right_tau[k] = tau;
            for (i, val) in rowv.iter().enumerate() {
                a[(k + 1 + i) * rows + k] = *val;
            }
            if tau != 0.0 {
                // Apply (I - tau v vᵀ) from the right to rows k+1..rows.
                let nv = n - (k + 1);
                let mut w = vec![0.0; rows - (k + 1)];
                for (j, rv) in rowv.iter().enumerate().take(nv) {
                    let col = &a[(k + 1 + j) * rows..];
                    let scale = if j == 0 { 1.0 } else { *rv };
                    for (wi, r) in w.iter_mut().zip(k + 1..rows) {
                        *wi += scale * col[r];
                    }
                }
                for wi in w.iter_mut() {
                    *wi *= tau;
                }
                for (j, rv) in rowv.iter().enumerate().take(nv) {
                    let col = &mut a[(k + 1 + j) * rows..(k + 2 + j) * rows];
                    let scale = if j == 0 { 1.0 } else { *rv };
                    for (wi, r) in w.iter().zip(k + 1..rows) {
                        col[r] -= scale * wi;
                    }
                }
            }
        } else if k + 2 == n {
            right_tau[k] = 0.0;
        }
    }

    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    for k in 0..n {
        d[k] = at(&a, k, k);
        if k + 1 < n {
            e[k] = at(&a, k, k + 1);
        }
    }

    // Backward accumulation of thin U (rows x n).
    let mut u = DenseMatrix::zeros(rows, n);
    {
        // Column-major scratch for U as well.
        let mut uc = vec![0.0; rows * n];
        for j in 0..n {
            uc[j * rows + j] = 1.0;
        }
        for k in (0..n).rev() {
            let tau = left_tau[k];
            if tau == 0.0 {
                continue;
            }
            let vcol = a[k * rows + k..(k + 1) * rows].to_vec();
            for c in k..n {
                let target = &mut uc[c * rows + k..c * rows + rows];
                let mut w = target[0];
                for r in 1..rows - k {
                    w += vcol[r] * target[r];
                }
                w *= tau;
                target[0] -= w;
                for r in 1..rows - k {
                    target[r] -= w * vcol[r];
                }
            }
        }
        for r in 0..rows {
            for c in 0..n {
                u.set(r, c, uc[c * rows + r]);
            }
        }
    }

    // Backward accumulation of V (n x n) from right reflectors.
    let mut v = DenseMatrix::identity(n);
    if n > 2 {
        for k in (0..n - 2).rev() {
            let tau = right_tau[k];
            if tau == 0.0 {
                continue;
            }
            // Reflector vector lives in a[k, k+1..n] stored transposed.
            let nv = n - (k + 1);
            let mut vk = vec![0.0; nv];
            vk[0] = 1.0;
            for j in 1..nv {
                vk[j] = a[(k + 1 + j) * rows + k];
            }
            for c in k + 1..n {
                let mut w = 0.0;
                for (j, vj) in vk.iter().enumerate() {
                    w += vj * v.get(k + 1 + j, c);
                }
                w *= tau;
                for (j, vj) in vk.iter().enumerate() {
                    let cur = v.get(k + 1 + j, c);
                    v.set(k + 1 + j, c, cur - w * vj);
                }
            }
        }
    }

    (d, e, u, v)
}

fn make_reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let tail_norm_sq: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail_norm_sq == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail_norm_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    tau
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if b.abs() > a.abs() {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    } else {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    }
}

fn rotate_cols(m: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.rows() {
        let xi = m.get(r, i);
        let xj = m.get(r, j);
        m.set(r, i, c * xi + s * xj);
        m.set(r, j, c * xj - s * xi);
    }
}

/// Implicit-shift QR iteration on the bidiagonal (d, e); U and V columns
/// are co-rotated. Errors with the sweep count on non-convergence.
fn bidiagonal_qr(
    d: &mut [f64],
    e: &mut [f64],
    u: &mut DenseMatrix,
    v: &mut DenseMatrix,
) -> std::result::Result<(), usize> {
    let n = d.len();
    let eps = f64::EPSILON;
    let norm = d
        .iter()
        .chain(e.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()));

    if n > 1 && norm > 0.0 {
        let mut hi = n - 1;
        let mut sweeps = 0usize;
        let max_sweeps = MAX_SWEEPS_PER_VALUE * n;
        while hi > 0 {
            // Deflate converged trailing entries.
            if e[hi - 1].abs() <= eps * (d[hi - 1].abs() + d[hi].abs()) {
                e[hi - 1] = 0.0;
                hi -= 1;
                continue;
            }
            // Locate the start of the unreduced block.
            let mut lo = hi - 1;
            while lo > 0 {
                if e[lo - 1].abs() <= eps * (d[lo - 1].abs() + d[lo].abs()) {
                    e[lo - 1] = 0.0;
                    break;
                }
                lo -= 1;
            }
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(sweeps);
            }
            // A negligible diagonal entry makes the Wilkinson shift unstable;
            // chase the off-diagonal out with left rotations instead.
            if let Some(idx) = (lo..hi).find(|&i| d[i].abs() <= eps * norm) {
                d[idx] = 0.0;
                let mut z = e[idx];
                e[idx] = 0.0;
                for j in idx + 1..=hi {
                    let (c, s) = givens(d[j], z);
                    d[j] = c * d[j] + s * z;
                    if j < hi {
                        z = -s * e[j];
                        e[j] *= c;
                    }
                    // Left rotation mixes U columns j and idx.
                    for r in 0..u.rows() {
                        let uj = u.get(r, j);
                        let ui = u.get(r, idx);
                        u.set(r, j, c * uj + s * ui);
                        u.set(r, idx, c * ui - s * uj);
                    }
                }
                continue;
            }
            // Wilkinson shift from the trailing 2x2 of BᵀB.
            let e_hi2 = if hi >= 2 && hi - 2 >= lo { e[hi - 2] } else { 0.0 };
            let t11 = d[hi - 1] * d[hi - 1] + e_hi2 * e_hi2;
            let t12 = d[hi - 1] * e[hi - 1];
            let t22 = d[hi] * d[hi] + e[hi - 1] * e[hi - 1];
            let delta = (t11 - t22) / 2.0;
            let sgn = if delta >= 0.0 { 1.0 } else { -1.0 };
            let mu = t22 - t12 * t12 / (delta + sgn * (delta * delta + t12 * t12).sqrt());

            let mut x = d[lo] * d[lo] - mu;
            let mut z = d[lo] * e[lo];
            for k in lo..hi {
                let (c, s) = givens(x, z);
                if k > lo {
                    e[k - 1] = c * x + s * z;
                }
                let dk = d[k];
                let ek = e[k];
                let dk1 = d[k + 1];
                d[k] = c * dk + s * ek;
                e[k] = c * ek - s * dk;
                let bulge = s * dk1;
                d[k + 1] = c * dk1;
                rotate_cols(v, k, k + 1, c, s);

                let (c2, s2) = givens(d[k], bulge);
                d[k] = c2 * d[k] + s2 * bulge;
                let old_ek = e[k];
                let old_dk1 = d[k + 1];
                e[k] = c2 * old_ek + s2 * old_dk1;
                d[k + 1] = c2 * old_dk1 - s2 * old_ek;
                if k + 1 < hi {
                    let old_ek1 = e[k + 1];
                    x = e[k];
                    z = s2 * old_ek1;
                    e[k + 1] = c2 * old_ek1;
                }
                rotate_cols(u, k, k + 1, c2, s2);
            }
        }
    }

    // Non-negative singular values.
    for i in 0..n {
        if d[i] < 0.0 {
            d[i] = -d[i];
            for r in 0..v.rows() {
                let x = v.get(r, i);
                v.set(r, i, -x);
            }
        }
    }
    // Sort descending; permute U and V columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
    let already_sorted = order.iter().enumerate().all(|(i, &o)| i == o);
    if !already_sorted {
        let ds: Vec<f64> = order.iter().map(|&o| d[o]).collect();
        d.copy_from_slice(&ds);
        let permute = |m: &mut DenseMatrix| {
            let src = m.clone();
            for (new, &old) in order.iter().enumerate() {
                for r in 0..m.rows() {
                    m.set(r, new, src.get(r, old));
                }
            }
        };
        permute(u);
        permute(v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densekit::test_support::{assert_close, random_matrix};

    fn check_svd(m: &DenseMatrix) {
        let svd = thin_svd(m).unwrap();
        let k = m.rows().min(m.cols());
        assert_eq!(svd.u.cols(), k);
        assert_eq!(svd.v.cols(), k);
        assert_eq!(svd.singular_values.len(), k);
        for w in svd.singular_values.windows(2) {
            assert!(w[0] >= w[1] - 1e-14, "not sorted: {:?}", svd.singular_values);
        }
        assert!(svd.singular_values.iter().all(|&s| s >= 0.0));
        // Orthonormality.
        let utu = svd.u.transpose_matmul(&svd.u);
        assert!(utu.sub(&DenseMatrix::identity(k)).frobenius_norm() < 1e-12);
        let vtv = svd.v.transpose_matmul(&svd.v);
        assert!(vtv.sub(&DenseMatrix::identity(k)).frobenius_norm() < 1e-12);
        // Reconstruction.
        let mut us = svd.u.clone();
        for c in 0..k {
            for r in 0..us.rows() {
                us.set(r, c, us.get(r, c) * svd.singular_values[c]);
            }
        }
        let rec = us.matmul(&svd.v.transpose());
        let scale = m.frobenius_norm().max(1e-300);
        assert!(
            rec.sub(m).frobenius_norm() / scale <= 1e-10,
            "reconstruction error {}",
            rec.sub(m).frobenius_norm() / scale
        );
    }

    #[test]
    fn svd_identity() {
        let svd = thin_svd(&DenseMatrix::identity(2)).unwrap();
        assert_close(&svd.singular_values[0], &1.0, 1e-14);
        assert_close(&svd.singular_values[1], &1.0, 1e-14);
    }

    #[test]
    fn svd_diagonal_with_zero() {
        let m = DenseMatrix::from_row_major(2, 2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let svd = thin_svd(&m).unwrap();
        assert_close(&svd.singular_values[0], &2.0, 1e-14);
        assert_close(&svd.singular_values[1], &0.0, 1e-14);
    }

    #[test]
    fn svd_random_shapes() {
        for &(r, c, seed) in &[
            (5usize, 3usize, 1u64),
            (3, 5, 2),
            (1, 7, 3),
            (7, 1, 4),
            (20, 20, 5),
            (64, 40, 6),
            (33, 90, 7),
        ] {
            check_svd(&random_matrix(r, c, seed));
        }
    }

    #[test]
    fn svd_rank_deficient() {
        // Outer product: rank one.
        let mut m = DenseMatrix::zeros(6, 4);
        for r in 0..6 {
            for c in 0..4 {
                m.set(r, c, (r as f64 + 1.0) * (c as f64 - 1.5));
            }
        }
        let svd = thin_svd(&m).unwrap();
        assert!(svd.singular_values[0] > 1.0);
        for s in &svd.singular_values[1..] {
            assert!(s.abs() < 1e-12 * svd.singular_values[0]);
        }
        check_svd(&m);
    }

    #[test]
    fn svd_repeated_singular_values() {
        // Orthogonal matrix scaled: all singular values equal.
        let m = DenseMatrix::from_row_major(
            2,
            2,
            vec![3.0 * 0.6, 3.0 * -0.8, 3.0 * 0.8, 3.0 * 0.6],
        )
        .unwrap();
        let svd = thin_svd(&m).unwrap();
        assert_close(&svd.singular_values[0], &3.0, 1e-12);
        assert_close(&svd.singular_values[1], &3.0, 1e-12);
        check_svd(&m);
    }

    #[test]
    fn svd_known_2x2() {
        // [[2,0],[0,0]] handled above; try a non-symmetric one with known
        // singular values sqrt(eigs of AᵀA).
        let m = DenseMatrix::from_row_major(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let svd = thin_svd(&m).unwrap();
        // AᵀA = [[1,1],[1,2]], eigs (3±sqrt(5))/2.
        let l1 = (3.0 + 5.0_f64.sqrt()) / 2.0;
        let l2 = (3.0 - 5.0_f64.sqrt()) / 2.0;
        assert_close(&svd.singular_values[0], &l1.sqrt(), 1e-12);
        assert_close(&svd.singular_values[1], &l2.sqrt(), 1e-12);
    }
}
