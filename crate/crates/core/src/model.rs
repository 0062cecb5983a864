//! Velocity-model abstraction: the right-hand side f(u; mu) of the
//! semi-discrete system du/dt = f(u; mu) and its state Jacobian. The
//! window residual assembler, the online solver and the bound evaluator
//! are generic over this trait so that toy systems can stand in for the
//! finite-volume model in tests.

use crate::densekit::DenseMatrix;

/// State Jacobian of a velocity model. Banded systems keep their bands so
/// downstream products never touch the zero fill.
#[derive(Clone, Debug)]
pub enum VelocityJacobian {
    Dense(DenseMatrix),
    /// Tridiagonal bands: `sub[i]` couples row i+1 to column i, `diag[i]`
    /// row i to column i, `sup[i]` row i to column i+1.
    Tridiagonal {
        sub: Vec<f64>,
        diag: Vec<f64>,
        sup: Vec<f64>,
    },
}

impl VelocityJacobian {
    pub fn dim(&self) -> usize {
        match self {
            VelocityJacobian::Dense(m) => m.rows(),
            VelocityJacobian::Tridiagonal { diag, .. } => diag.len(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            VelocityJacobian::Dense(m) => m.clone(),
            VelocityJacobian::Tridiagonal { sub, diag, sup } => {
                let n = diag.len();
                let mut m = DenseMatrix::zeros(n, n);
                for i in 0..n {
                    m.set(i, i, diag[i]);
                    if i + 1 < n {
                        m.set(i + 1, i, sub[i]);
                        m.set(i, i + 1, sup[i]);
                    }
                }
                m
            }
        }
    }

    /// `out = self * m` exploiting the band structure.
    pub fn mul_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            VelocityJacobian::Dense(j) => j.matmul(m),
            VelocityJacobian::Tridiagonal { sub, diag, sup } => {
                let n = diag.len();
                assert_eq!(m.rows(), n);
                let mut out = DenseMatrix::zeros(n, m.cols());
                for i in 0..n {
                    let d = diag[i];
                    {
                        let src = m.row(i);
                        let dst = out.row_mut(i);
                        for (o, s) in dst.iter_mut().zip(src.iter()) {
                            *o += d * s;
                        }
                    }
                    if i + 1 < n {
                        let s_lo = sub[i];
                        if s_lo != 0.0 {
                            let src: Vec<f64> = m.row(i).to_vec();
                            let dst = out.row_mut(i + 1);
                            for (o, s) in dst.iter_mut().zip(src.iter()) {
                                *o += s_lo * s;
                            }
                        }
                        let s_hi = sup[i];
                        if s_hi != 0.0 {
                            let src: Vec<f64> = m.row(i + 1).to_vec();
                            let dst = out.row_mut(i);
                            for (o, s) in dst.iter_mut().zip(src.iter()) {
                                *o += s_hi * s;
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// `out = self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            VelocityJacobian::Dense(j) => j.matvec(v),
            VelocityJacobian::Tridiagonal { sub, diag, sup } => {
                let n = diag.len();
                let mut out = vec![0.0; n];
                for i in 0..n {
                    let mut acc = diag[i] * v[i];
                    if i > 0 {
                        acc += sub[i - 1] * v[i - 1];
                    }
                    if i + 1 < n {
                        acc += sup[i] * v[i + 1];
                    }
                    out[i] = acc;
                }
                out
            }
        }
    }
}

/// Autonomous velocity model with an analytic Jacobian.
pub trait Model: Sync {
    /// Number of spatial degrees of freedom.
    fn dim(&self) -> usize;

    /// Evaluates f(u) into `out`.
    fn velocity(&self, u: &[f64], out: &mut [f64]);

    /// State Jacobian df/du at `u`.
    fn jacobian(&self, u: &[f64]) -> VelocityJacobian;

    fn velocity_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.velocity(u, &mut out);
        out
    }
}

/// Linear model f(u) = M u + c, used by tests and oracle checks.
pub struct LinearModel {
    pub matrix: DenseMatrix,
    pub offset: Vec<f64>,
}

impl LinearModel {
    pub fn new(matrix: DenseMatrix, offset: Vec<f64>) -> Self {
        assert_eq!(matrix.rows(), matrix.cols());
        assert_eq!(matrix.rows(), offset.len());
        Self { matrix, offset }
    }
}

impl Model for LinearModel {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn velocity(&self, u: &[f64], out: &mut [f64]) {
        let mu = self.matrix.matvec(u);
        for ((o, m), c) in out.iter_mut().zip(mu.iter()).zip(self.offset.iter()) {
            *o = m + c;
        }
    }

    fn jacobian(&self, _u: &[f64]) -> VelocityJacobian {
        VelocityJacobian::Dense(self.matrix.clone())
    }
}

/// The zero velocity: states stay constant under time marching.
pub struct ZeroModel(pub usize);

impl Model for ZeroModel {
    fn dim(&self) -> usize {
        self.0
    }

    fn velocity(&self, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn jacobian(&self, _u: &[f64]) -> VelocityJacobian {
        VelocityJacobian::Dense(DenseMatrix::zeros(self.0, self.0))
    }
}
