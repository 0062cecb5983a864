use super::matrix::DenseMatrix;

/// Panel width for the blocked factorization. Trailing updates go through
/// gemm, so tall problems stay compute-bound instead of streaming the
/// matrix once per column.
const PANEL: usize = 48;

/// Householder QR factorization in compact form: R in the upper triangle,
/// reflector vectors below the diagonal (unit leading entry implicit).
pub struct QrFactor {
    a: DenseMatrix,
    tau: Vec<f64>,
}

/// Thin QR with an explicit Q, plus the rank report required of callers
/// that hand over nearly singular systems.
pub struct QrResult {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// Indices j with |R_jj| < 1e-12 (near-zero diagonal entries).
    pub small_diagonals: Vec<usize>,
}

/// Generates a Householder reflector for `x`, returning tau.
/// On exit `x[0] = beta` and `x[1..]` holds the reflector tail.
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

/// Raw strided gemm: C <- alpha*A*B + beta*C.
#[allow(clippy::too_many_arguments)]
unsafe fn dgemm_raw(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: *mut f64,
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        return;
    }
    matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}

impl QrFactor {
    /// Factors `m` (rows >= cols) into Q·R.
    pub fn new(m: &DenseMatrix) -> Self {
        assert!(
            m.rows() >= m.cols(),
            "qr requires rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        );
        let mut a = m.clone();
        let n = a.cols();
        let rows = a.rows();
        let lda = a.cols();
        let mut tau = vec![0.0; n];

        // Column-major panel scratch keeps the BLAS-2 panel work local.
        let mut panel = vec![0.0; rows * PANEL];

        let mut j0 = 0;
        while j0 < n {
            let jb = PANEL.min(n - j0);
            let prows = rows - j0;
            // Copy panel columns j0..j0+jb into column-major scratch.
            for j in 0..jb {
                for r in 0..prows {
                    panel[j * prows + r] = a.get(j0 + r, j0 + j);
                }
            }
            // Unblocked factorization of the panel in scratch.
            for j in 0..jb {
                let (head, rest) = panel.split_at_mut((j + 1) * prows);
                let col = &mut head[j * prows + j..];
                let t = make_reflector(col);
                tau[j0 + j] = t;
                if t != 0.0 {
                    for c in 0..jb - j - 1 {
                        let target = &mut rest[c * prows + j..c * prows + prows];
                        let mut w = target[0];
                        for r in 1..prows - j {
                            w += col[r] * target[r];
                        }
                        w *= t;
                        target[0] -= w;
                        for r in 1..prows - j {
                            target[r] -= w * col[r];
                        }
                    }
                }
            }
            // Copy factored panel back.
            for j in 0..jb {
                for r in 0..prows {
                    a.set(j0 + r, j0 + j, panel[j * prows + r]);
                }
            }
            // Blocked trailing update: C <- C - V Tᵀ (Vᵀ C).
            if j0 + jb < n {
                let t = build_t(&panel, &tau[j0..j0 + jb], prows, jb);
                // V in scratch is column-major (prows x jb) with implicit
                // unit diagonal; materialize explicitly.
                let mut v = panel[..prows * jb].to_vec();
                for j in 0..jb {
                    for r in 0..j {
                        v[j * prows + r] = 0.0;
                    }
                    v[j * prows + j] = 1.0;
                }
                let nc = n - (j0 + jb);
                let c_off = j0 * lda + (j0 + jb);
                let mut w = vec![0.0; jb * nc];
                unsafe {
                    let c_ptr = a.data_mut().as_mut_ptr().add(c_off);
                    // W = Vᵀ C  (jb x nc); V is column-major prows x jb, so
                    // Vᵀ strides are (prows, 1).
                    dgemm_raw(
                        jb,
                        prows,
                        nc,
                        1.0,
                        v.as_ptr(),
                        prows as isize,
                        1,
                        c_ptr,
                        lda as isize,
                        1,
                        0.0,
                        w.as_mut_ptr(),
                        nc as isize,
                        1,
                    );
                }
                // W2 = Tᵀ W  (jb x nc), T is jb x jb upper triangular.
                let mut w2 = vec![0.0; jb * nc];
                for i in 0..jb {
                    for l in 0..=i {
                        let tv = t[l * jb + i];
                        if tv == 0.0 {
                            continue;
                        }
                        let src = &w[l * nc..(l + 1) * nc];
                        let dst = &mut w2[i * nc..(i + 1) * nc];
                        for (d, s) in dst.iter_mut().zip(src.iter()) {
                            *d += tv * s;
                        }
                    }
                }
                unsafe {
                    let c_ptr = a.data_mut().as_mut_ptr().add(c_off);
                    // C -= V W2
                    dgemm_raw(
                        prows,
                        jb,
                        nc,
                        -1.0,
                        v.as_ptr(),
                        1,
                        prows as isize,
                        w2.as_ptr(),
                        nc as isize,
                        1,
                        1.0,
                        c_ptr,
                        lda as isize,
                        1,
                    );
                }
            }
            j0 += jb;
        }
        QrFactor { a, tau }
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// Upper-triangular factor (cols x cols).
    pub fn r(&self) -> DenseMatrix {
        let n = self.a.cols();
        let mut r = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                r.set(i, j, self.a.get(i, j));
            }
        }
        r
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.a.cols()).map(|j| self.a.get(j, j)).collect()
    }

    /// Applies Qᵀ to a vector in place.
    pub fn apply_qt(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.a.rows());
        let rows = self.a.rows();
        for j in 0..self.a.cols() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            let mut w = b[j];
            for r in j + 1..rows {
                w += self.a.get(r, j) * b[r];
            }
            w *= t;
            b[j] -= w;
            for r in j + 1..rows {
                b[r] -= w * self.a.get(r, j);
            }
        }
    }

    /// Solves R x = y[0..n] by back substitution. Returns None when a
    /// diagonal entry is exactly zero.
    pub fn solve_upper(&self, y: &[f64]) -> Option<Vec<f64>> {
        let n = self.a.cols();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.a.get(i, j) * x[j];
            }
            let d = self.a.get(i, i);
            if d == 0.0 {
                return None;
            }
            x[i] = s / d;
        }
        Some(x)
    }

    /// Forms the thin Q (rows x cols) by backward accumulation.
    pub fn thin_q(&self) -> DenseMatrix {
        let rows = self.a.rows();
        let n = self.a.cols();
        let mut q = DenseMatrix::zeros(rows, n);
        for j in 0..n {
            q.set(j, j, 1.0);
        }
        for j in (0..n).rev() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            // Columns < j are still untouched unit vectors with zero rows >= j.
            for c in j..n {
                let mut w = q.get(j, c);
                for r in j + 1..rows {
                    w += self.a.get(r, j) * q.get(r, c);
                }
                w *= t;
                q.set(j, c, q.get(j, c) - w);
                for r in j + 1..rows {
                    q.set(r, c, q.get(r, c) - w * self.a.get(r, j));
                }
            }
        }
        q
    }
}

/// Builds the T factor of the compact WY representation
/// (Q_panel = I - V T Vᵀ) from the column-major factored panel.
/// Returned row-major, jb x jb, upper triangular.
fn build_t(panel: &[f64], tau: &[f64], prows: usize, jb: usize) -> Vec<f64> {
    let v = |r: usize, c: usize| -> f64 {
        if r < c {
            0.0
        } else if r == c {
            1.0
        } else {
            panel[c * prows + r]
        }
    };
    let mut t = vec![0.0; jb * jb];
    for j in 0..jb {
        let tj = tau[j];
        t[j * jb + j] = tj;
        if j > 0 && tj != 0.0 {
            // t[0..j, j] = -tau_j * T[0..j, 0..j] * (V[:, 0..j]ᵀ v_j)
            let mut w = vec![0.0; j];
            for (c, wc) in w.iter_mut().enumerate() {
                for r in j..prows {
                    *wc += v(r, c) * v(r, j);
                }
            }
            for i in 0..j {
                let mut s = 0.0;
                for (c, wc) in w.iter().enumerate().skip(i) {
                    s += t[i * jb + c] * wc;
                }
                t[i * jb + j] = -tj * s;
            }
        }
    }
    t
}
