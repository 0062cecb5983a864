//! Offline training: shifted snapshot tensors, spatial POD with energy
//! truncation, tailored temporal bases (one temporal SVD per spatial mode),
//! tensor-product sub-window bases, block-lower-triangular window basis
//! assembly, and the initial-guess regression model.

use crate::burgers::{Parameters, Trajectory};
use crate::densekit::{least_squares, thin_svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::windows::WindowPlan;

/// Three-way tensor of shifted training states over one sub-window:
/// entry (a, b, c) = u^{zeta(k,m)+b}_a(mu_c) - u^{zeta(k,m)-1}_a(mu_c).
#[derive(Clone, Debug)]
pub struct SnapshotTensor3 {
    pub n_space: usize,
    pub n_time_sub: usize,
    pub n_train: usize,
    /// Layout: a + b*n_space + c*n_space*n_time_sub. For fixed c this is the
    /// time-major space-time vectorization of the shifted block.
    data: Vec<f64>,
}

impl SnapshotTensor3 {
    pub fn new(n_space: usize, n_time_sub: usize, n_train: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_space * n_time_sub * n_train);
        Self {
            n_space,
            n_time_sub,
            n_train,
            data,
        }
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[a + b * self.n_space + c * self.n_space * self.n_time_sub]
    }

    /// Space-time vector (time-major) of one training parameter's block.
    pub fn slice_vec(&self, c: usize) -> &[f64] {
        let stride = self.n_space * self.n_time_sub;
        &self.data[c * stride..(c + 1) * stride]
    }

    /// Mode-1 unfolding: n_space rows, one column per (parameter, step)
    /// pair, parameter-major.
    pub fn mode1_unfolding(&self) -> DenseMatrix {
        let cols = self.n_time_sub * self.n_train;
        let mut m = DenseMatrix::zeros(self.n_space, cols);
        for c in 0..self.n_train {
            for b in 0..self.n_time_sub {
                let col = c * self.n_time_sub + b;
                for a in 0..self.n_space {
                    m.set(a, col, self.entry(a, b, c));
                }
            }
        }
        m
    }

    /// Temporal matrix of the mode-1 product with one spatial vector:
    /// entry (b, c) = sum_a phi_a X[a, b, c].
    pub fn projected_temporal(&self, phi_col: &[f64]) -> DenseMatrix {
        assert_eq!(phi_col.len(), self.n_space);
        let mut m = DenseMatrix::zeros(self.n_time_sub, self.n_train);
        for c in 0..self.n_train {
            for b in 0..self.n_time_sub {
                let base = b * self.n_space + c * self.n_space * self.n_time_sub;
                let mut acc = 0.0;
                for (a, p) in phi_col.iter().enumerate() {
                    acc += p * self.data[base + a];
                }
                m.set(b, c, acc);
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Shifted snapshot tensor for sub-window (k, m) built from full-resolution
/// training trajectories.
pub fn build_snapshot_tensor(
    trajectories: &[Trajectory],
    plan: &WindowPlan,
    k: usize,
    m: usize,
) -> Result<SnapshotTensor3> {
    let zeta = plan.zeta(k, m)?;
    let steps = plan.sub_steps(k, m);
    let n_train = trajectories.len();
    if n_train == 0 {
        return Err(Error::DegenerateData("no training trajectories".into()));
    }
    let n_space = trajectories[0].n_space;
    let mut data = vec![0.0; n_space * steps * n_train];
    for (c, traj) in trajectories.iter().enumerate() {
        if traj.n_time + 1 < zeta + steps {
            return Err(Error::DimensionMismatch(format!(
                "trajectory {c} has {} steps, sub-window ({k},{m}) needs {}",
                traj.n_time,
                zeta + steps - 1
            )));
        }
        let reference = traj.state(zeta - 1);
        for b in 0..steps {
            let u = traj.state(zeta + b);
            let dst =
                &mut data[c * n_space * steps + b * n_space..c * n_space * steps + (b + 1) * n_space];
            for ((d, &ui), &ri) in dst.iter_mut().zip(u.iter()).zip(reference.iter()) {
                *d = ui - ri;
            }
        }
    }
    Ok(SnapshotTensor3::new(n_space, steps, n_train, data))
}

/// Number of leading singular triplets keeping at least fraction `e` of
/// the statistical energy (squared singular values). `e >= 1` keeps every
/// direction above the numerical noise floor. Always at least one.
fn energy_truncation_count(sigma: &[f64], e: f64) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let s0 = sigma[0];
    if e >= 1.0 {
        let kept = sigma.iter().filter(|&&s| s > 1e-12 * s0).count();
        return kept.max(1);
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= e * total {
            return i + 1;
        }
    }
    sigma.len()
}

/// Flips each column so its largest-magnitude entry is positive. SVD signs
/// are otherwise arbitrary, which would break reproducibility of files.
fn sign_normalize_columns(m: &mut DenseMatrix) {
    for c in 0..m.cols() {
        let mut best = 0.0_f64;
        let mut best_val = 0.0_f64;
        for r in 0..m.rows() {
            let v = m.get(r, c);
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
        if best_val < 0.0 {
            for r in 0..m.rows() {
                m.set(r, c, -m.get(r, c));
            }
        }
    }
}

/// Spatial POD basis of the mode-1 unfolding, truncated by energy.
pub fn pod_spatial(tensor: &SnapshotTensor3, e_s: f64) -> Result<DenseMatrix> {
    if !(e_s > 0.0 && e_s <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spatial energy fraction must be in (0, 1], got {e_s}"
        )));
    }
    if tensor.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateData(
            "all-zero snapshot tensor: no spatial basis derivable".into(),
        ));
    }
    let unfolded = tensor.mode1_unfolding();
    let svd = thin_svd(&unfolded)?;
    let n_keep = energy_truncation_count(&svd.singular_values, e_s);
    let mut phi = svd.u.truncate_cols(n_keep);
    sign_normalize_columns(&mut phi);
    Ok(phi)
}

/// Tailored temporal factors: one energy-truncated SVD per spatial mode.
#[derive(Clone, Debug)]
pub struct TemporalFactors {
    pub factors: Vec<DenseMatrix>,
    /// Spatial modes whose projected data was numerically zero; these carry
    /// a canonical single-vector basis instead.
    pub degenerate_modes: Vec<usize>,
}

pub fn tailored_temporal(
    tensor: &SnapshotTensor3,
    phi: &DenseMatrix,
    e_t: f64,
) -> Result<TemporalFactors> {
    if !(e_t > 0.0 && e_t <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "temporal energy fraction must be in (0, 1], got {e_t}"
        )));
    }
    let mut factors = Vec::with_capacity(phi.cols());
    let mut degenerate_modes = Vec::new();
    for i in 0..phi.cols() {
        let projected = tensor.projected_temporal(&phi.col(i));
        if projected.frobenius_norm() == 0.0 {
            let mut canonical = DenseMatrix::zeros(tensor.n_time_sub, 1);
            canonical.set(0, 0, 1.0);
            factors.push(canonical);
            degenerate_modes.push(i);
            continue;
        }
        let svd = thin_svd(&projected)?;
        let n_keep = energy_truncation_count(&svd.singular_values, e_t);
        let mut psi = svd.u.truncate_cols(n_keep);
        sign_normalize_columns(&mut psi);
        factors.push(psi);
    }
    Ok(TemporalFactors {
        factors,
        degenerate_modes,
    })
}

/// Tensor-product space-time basis over one sub-window.
#[derive(Clone, Debug)]
pub struct SubwindowBasis {
    /// N_s x n_s, orthonormal columns.
    pub spatial: DenseMatrix,
    /// Per spatial mode i: N_t^{k,m} x n_t^i, orthonormal columns.
    pub temporal: Vec<DenseMatrix>,
    /// N_s N_t^{k,m} x n_st^{k,m}; column (i, j) is the time-major
    /// vectorization of phi_i (psi^i_j)ᵀ, ordered i-outer, j-inner.
    pub assembled: DenseMatrix,
}

impl SubwindowBasis {
    pub fn n_space(&self) -> usize {
        self.spatial.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.temporal.first().map(|t| t.rows()).unwrap_or(0)
    }

    pub fn n_columns(&self) -> usize {
        self.assembled.cols()
    }

    /// Last N_s rows of the assembled basis: the state expansion at the
    /// sub-window's final step.
    pub fn trailing_block(&self) -> DenseMatrix {
        let n_space = self.n_space();
        self.assembled
            .block((self.n_steps() - 1) * n_space, 0, n_space, self.n_columns())
    }
}

/// Builds the tensor-product basis from spatial and temporal factors.
pub fn assemble_subwindow_basis(phi: &DenseMatrix, psis: &[DenseMatrix]) -> SubwindowBasis {
    assert_eq!(phi.cols(), psis.len(), "one temporal factor per spatial mode");
    let n_space = phi.rows();
    let n_steps = psis.first().map(|p| p.rows()).unwrap_or(0);
    let n_cols: usize = psis.iter().map(|p| p.cols()).sum();
    let mut assembled = DenseMatrix::zeros(n_space * n_steps, n_cols);
    let mut col = 0;
    for (i, psi) in psis.iter().enumerate() {
        assert_eq!(psi.rows(), n_steps);
        for j in 0..psi.cols() {
            for b in 0..n_steps {
                let w = psi.get(b, j);
                if w == 0.0 {
                    continue;
                }
                for a in 0..n_space {
                    assembled.set(b * n_space + a, col, phi.get(a, i) * w);
                }
            }
            col += 1;
        }
    }
    SubwindowBasis {
        spatial: phi.clone(),
        temporal: psis.to_vec(),
        assembled,
    }
}

/// Block-lower-triangular space-time basis over one window: sub-window
/// bases on the diagonal, each sub-window's final-step expansion tiled
/// below it. The structure encodes that later sub-windows ride on the
/// running end state of earlier ones.
#[derive(Clone, Debug)]
pub struct WindowBasis {
    n_space: usize,
    n_steps: usize,
    sub_bases: Vec<SubwindowBasis>,
    trailing: Vec<DenseMatrix>,
    /// Local first step of each sub-window.
    step_offsets: Vec<usize>,
    /// First column of each sub-window's block.
    col_offsets: Vec<usize>,
    n_cols: usize,
}

impl WindowBasis {
    pub fn from_sub_bases(sub_bases: Vec<SubwindowBasis>) -> Self {
        assert!(!sub_bases.is_empty());
        let n_space = sub_bases[0].n_space();
        let mut step_offsets = Vec::with_capacity(sub_bases.len());
        let mut col_offsets = Vec::with_capacity(sub_bases.len());
        let mut steps = 0;
        let mut cols = 0;
        for sb in &sub_bases {
            assert_eq!(sb.n_space(), n_space);
            step_offsets.push(steps);
            col_offsets.push(cols);
            steps += sb.n_steps();
            cols += sb.n_columns();
        }
        let trailing = sub_bases.iter().map(|sb| sb.trailing_block()).collect();
        Self {
            n_space,
            n_steps: steps,
            sub_bases,
            trailing,
            step_offsets,
            col_offsets,
            n_cols: cols,
        }
    }

    /// Full-space basis: canonical spatial and temporal vectors, one
    /// sub-window. Spans every window state exactly.
    pub fn identity(n_space: usize, n_steps: usize) -> Self {
        let phi = DenseMatrix::identity(n_space);
        let psis = vec![DenseMatrix::identity(n_steps); n_space];
        Self::from_sub_bases(vec![assemble_subwindow_basis(&phi, &psis)])
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_columns(&self) -> usize {
        self.n_cols
    }

    pub fn n_sub(&self) -> usize {
        self.sub_bases.len()
    }

    pub fn sub_bases(&self) -> &[SubwindowBasis] {
        &self.sub_bases
    }

    pub fn trailing_blocks(&self) -> &[DenseMatrix] {
        &self.trailing
    }

    pub fn sub_column_range(&self, m: usize) -> std::ops::Range<usize> {
        let start = self.col_offsets[m];
        start..start + self.sub_bases[m].n_columns()
    }

    /// Sub-window containing local step `s`.
    fn sub_of_step(&self, s: usize) -> usize {
        debug_assert!(s < self.n_steps);
        match self.step_offsets.binary_search(&s) {
            Ok(m) => m,
            Err(ins) => ins - 1,
        }
    }

    /// Row block of the assembled basis for local step `s`
    /// (n_space x n_columns), materialized on demand.
    pub fn row_block(&self, s: usize) -> DenseMatrix {
        let m = self.sub_of_step(s);
        let mut out = DenseMatrix::zeros(self.n_space, self.n_cols);
        for mp in 0..m {
            out.set_block(0, self.col_offsets[mp], &self.trailing[mp]);
        }
        let local = s - self.step_offsets[m];
        let sb = &self.sub_bases[m];
        let diag = sb
            .assembled
            .block(local * self.n_space, 0, self.n_space, sb.n_columns());
        out.set_block(0, self.col_offsets[m], &diag);
        out
    }

    /// Reconstructs the space-time increment `basis * y` (time-major).
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_cols);
        let mut out = vec![0.0; self.n_space * self.n_steps];
        // Running contribution of completed sub-windows' final states.
        let mut tail_acc = vec![0.0; self.n_space];
        for (m, sb) in self.sub_bases.iter().enumerate() {
            let yx = &y[self.col_offsets[m]..self.col_offsets[m] + sb.n_columns()];
            let local_steps = sb.n_steps();
            let base_step = self.step_offsets[m];
            let diag_part = sb.assembled.matvec(yx);
            for b in 0..local_steps {
                let dst =
                    &mut out[(base_step + b) * self.n_space..(base_step + b + 1) * self.n_space];
                for (d, (&t, &v)) in dst
                    .iter_mut()
                    .zip(tail_acc.iter().zip(&diag_part[b * self.n_space..(b + 1) * self.n_space]))
                {
                    *d = t + v;
                }
            }
            let tail_inc = self.trailing[m].matvec(yx);
            for (t, v) in tail_acc.iter_mut().zip(tail_inc.iter()) {
                *t += v;
            }
        }
        out
    }

    /// `basisᵀ * v` for a time-major space-time vector.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_space * self.n_steps);
        let mut out = vec![0.0; self.n_cols];
        // Suffix sums of the step blocks let each trailing block act once.
        let mut suffix = vec![0.0; self.n_space];
        // Process sub-windows in reverse: columns of sub-window m see their
        // own block rows plus every later step through the trailing block.
        for m in (0..self.sub_bases.len()).rev() {
            let sb = &self.sub_bases[m];
            let base_step = self.step_offsets[m];
            let local_steps = sb.n_steps();
            let seg = &v[base_step * self.n_space..(base_step + local_steps) * self.n_space];
            let own = sb.assembled.transpose_matvec(seg);
            let tail = self.trailing[m].transpose_matvec(&suffix);
            let dst = &mut out[self.col_offsets[m]..self.col_offsets[m] + sb.n_columns()];
            for (d, (a, b)) in dst.iter_mut().zip(own.iter().zip(tail.iter())) {
                *d = a + b;
            }
            for b in 0..local_steps {
                let blk = &v[(base_step + b) * self.n_space..(base_step + b + 1) * self.n_space];
                for (s, x) in suffix.iter_mut().zip(blk.iter()) {
                    *s += x;
                }
            }
        }
        out
    }

    /// Materializes the full block-lower-triangular basis.
    pub fn assemble_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_space * self.n_steps, self.n_cols);
        for s in 0..self.n_steps {
            let rb = self.row_block(s);
            out.set_block(s * self.n_space, 0, &rb);
        }
        out
    }

    /// Block-diagonal-only variant (no trailing blocks), used for the
    /// offline projection of training data.
    pub fn block_diagonal_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_space * self.n_steps, self.n_cols);
        for (m, sb) in self.sub_bases.iter().enumerate() {
            out.set_block(
                self.step_offsets[m] * self.n_space,
                self.col_offsets[m],
                &sb.assembled,
            );
        }
        out
    }
}

/// Builds the window basis for (plan, k) from per-sub-window factors.
pub fn assemble_window_basis(sub_bases: Vec<SubwindowBasis>, plan: &WindowPlan, k: usize) -> Result<WindowBasis> {
    if sub_bases.len() != plan.n_sub(k) {
        return Err(Error::DimensionMismatch(format!(
            "window {k}: {} sub-bases for {} sub-windows",
            sub_bases.len(),
            plan.n_sub(k)
        )));
    }
    for (m, sb) in sub_bases.iter().enumerate() {
        if sb.n_steps() != plan.sub_steps(k, m) {
            return Err(Error::DimensionMismatch(format!(
                "window {k} sub-window {m}: basis covers {} steps, plan says {}",
                sb.n_steps(),
                plan.sub_steps(k, m)
            )));
        }
    }
    Ok(WindowBasis::from_sub_bases(sub_bases))
}

/// Affine regression (or nearest-neighbor fallback) from parameters to
/// reduced window coordinates, fitted offline against projected training
/// data.
#[derive(Clone, Debug)]
pub enum InitialGuessModel {
    /// Per window: n_st x 3 coefficients applied to (1, mu1, mu2).
    Affine { coefficients: Vec<DenseMatrix> },
    /// Too few training points for a plane fit: predict the projected
    /// coordinates of the nearest training parameter.
    Nearest {
        params: Vec<Parameters>,
        /// targets[k][c]: reduced coordinates of parameter c in window k.
        targets: Vec<Vec<Vec<f64>>>,
    },
}

impl InitialGuessModel {
    pub fn predict(&self, k: usize, p: Parameters) -> Vec<f64> {
        match self {
            InitialGuessModel::Affine { coefficients } => {
                coefficients[k].matvec(&[1.0, p.mu1, p.mu2])
            }
            InitialGuessModel::Nearest { params, targets } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, q) in params.iter().enumerate() {
                    let d = (q.mu1 - p.mu1).powi(2) + (q.mu2 - p.mu2).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                targets[k][best].clone()
            }
        }
    }

    pub fn is_nearest_fallback(&self) -> bool {
        matches!(self, InitialGuessModel::Nearest { .. })
    }
}

/// Projects each training trajectory onto the block-diagonal window bases
/// and fits the affine initial-guess regression.
///
/// The per-sub-window reference is the training trajectory's own state just
/// before the sub-window; the diagonal blocks have orthonormal columns, so
/// their pseudo-inverse is the transpose.
pub fn fit_initial_guess(
    bases: &[WindowBasis],
    trajectories: &[Trajectory],
    params: &[Parameters],
    plan: &WindowPlan,
) -> Result<InitialGuessModel> {
    assert_eq!(trajectories.len(), params.len());
    let n_train = trajectories.len();
    if n_train == 0 {
        return Err(Error::DegenerateData("no training data".into()));
    }
    let n_win = plan.n_windows();
    // targets[k][c] = ytilde of parameter c in window k.
    let mut targets: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n_train); n_win];
    for traj in trajectories.iter() {
        for k in 0..n_win {
            let basis = &bases[k];
            let mut y = Vec::with_capacity(basis.n_columns());
            for (m, sb) in basis.sub_bases().iter().enumerate() {
                let tensor_block = shifted_block(traj, plan, k, m)?;
                y.extend(sb.assembled.transpose_matvec(&tensor_block));
            }
            targets[k].push(y);
        }
    }

    if n_train < 3 {
        return Ok(InitialGuessModel::Nearest {
            params: params.to_vec(),
            targets,
        });
    }

    // Design matrix rows (1, mu1, mu2).
    let mut design = DenseMatrix::zeros(n_train, 3);
    for (r, p) in params.iter().enumerate() {
        design.set(r, 0, 1.0);
        design.set(r, 1, p.mu1);
        design.set(r, 2, p.mu2);
    }
    let mut coefficients = Vec::with_capacity(n_win);
    for target_k in targets.iter() {
        let n_st = target_k[0].len();
        let mut coeff = DenseMatrix::zeros(n_st, 3);
        for j in 0..n_st {
            let rhs: Vec<f64> = target_k.iter().map(|y| y[j]).collect();
            let sol = least_squares(&design, &rhs)?;
            for (col, v) in sol.x.iter().enumerate() {
                coeff.set(j, col, *v);
            }
        }
        coefficients.push(coeff);
    }
    Ok(InitialGuessModel::Affine { coefficients })
}

/// Time-major vectorization of one trajectory's sub-window block shifted by
/// its own pre-sub-window state.
fn shifted_block(traj: &Trajectory, plan: &WindowPlan, k: usize, m: usize) -> Result<Vec<f64>> {
    let zeta = plan.zeta(k, m)?;
    let steps = plan.sub_steps(k, m);
    let n_space = traj.n_space;
    if traj.n_time + 1 < zeta + steps {
        return Err(Error::DimensionMismatch(format!(
            "trajectory too short for sub-window ({k},{m})"
        )));
    }
    let reference = traj.state(zeta - 1);
    let mut out = Vec::with_capacity(n_space * steps);
    for b in 0..steps {
        let u = traj.state(zeta + b);
        out.extend(u.iter().zip(reference.iter()).map(|(a, r)| a - r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windows::LmmScheme;

    fn toy_trajectory(n_space: usize, n_time: usize, f: impl Fn(usize, usize) -> f64) -> Trajectory {
        let initial: Vec<f64> = (0..n_space).map(|a| f(a, 0)).collect();
        let mut states = DenseMatrix::zeros(n_space, n_time);
        for n in 1..=n_time {
            let col: Vec<f64> = (0..n_space).map(|a| f(a, n)).collect();
            states.set_col(n - 1, &col);
        }
        Trajectory {
            n_space,
            n_time,
            dt: 1.0,
            initial,
            states,
        }
    }

    #[test]
    fn snapshot_tensor_constant_trajectory_is_zero() {
        let traj = toy_trajectory(3, 4, |a, _| a as f64 + 1.0);
        let plan = WindowPlan::uniform(4, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let t = build_snapshot_tensor(&[traj], &plan, 1, 0).unwrap();
        assert_eq!(t.frobenius_norm(), 0.0);
    }

    #[test]
    fn snapshot_tensor_hand_case() {
        // N_s = 2, one sub-window of 2 steps, states columns [1,3] and
        // [2,4], incoming state [0,0]: tensor slices equal the raw states.
        let mut states = DenseMatrix::zeros(2, 2);
        states.set_col(0, &[1.0, 3.0]);
        states.set_col(1, &[2.0, 4.0]);
        let traj = Trajectory {
            n_space: 2,
            n_time: 2,
            dt: 1.0,
            initial: vec![0.0, 0.0],
            states,
        };
        let plan = WindowPlan::uniform(2, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let t = build_snapshot_tensor(&[traj], &plan, 0, 0).unwrap();
        assert_eq!(t.entry(0, 0, 0), 1.0);
        assert_eq!(t.entry(1, 0, 0), 3.0);
        assert_eq!(t.entry(0, 1, 0), 2.0);
        assert_eq!(t.entry(1, 1, 0), 4.0);
    }

    #[test]
    fn snapshot_tensor_first_column_is_adjacent_difference() {
        let traj = toy_trajectory(2, 6, |a, n| (a as f64 + 1.0) * n as f64 * n as f64);
        let plan = WindowPlan::uniform(6, 1.0, 3, 3, LmmScheme::Bdf1).unwrap();
        let t = build_snapshot_tensor(&[traj.clone()], &plan, 1, 0).unwrap();
        // zeta(1,0) = 4; first local column = u^4 - u^3.
        for a in 0..2 {
            let expected = traj.state(4)[a] - traj.state(3)[a];
            assert_eq!(t.entry(a, 0, 0), expected);
        }
    }

    #[test]
    fn pod_energy_rule() {
        // Diagonal tensor with singular values 2, 1, 1: e = 0.5 keeps one
        // vector (4/6 >= 0.5).
        let mut data = vec![0.0; 3 * 3];
        data[0] = 2.0;
        data[1 + 3] = 1.0;
        data[2 + 6] = 1.0;
        let t = SnapshotTensor3::new(3, 3, 1, data);
        let phi = pod_spatial(&t, 0.5).unwrap();
        assert_eq!(phi.cols(), 1);
        let all = pod_spatial(&t, 1.0).unwrap();
        assert_eq!(all.cols(), 3);
    }

    #[test]
    fn pod_rank_one_keeps_single_vector() {
        let mut data = vec![0.0; 4 * 5];
        for b in 0..5 {
            for a in 0..4 {
                data[a + b * 4] = (a as f64 + 1.0) * (b as f64 - 2.0);
            }
        }
        let t = SnapshotTensor3::new(4, 5, 1, data);
        for e in [0.1, 0.9, 1.0] {
            let phi = pod_spatial(&t, e).unwrap();
            assert_eq!(phi.cols(), 1, "e = {e}");
        }
    }

    #[test]
    fn pod_zero_tensor_errors() {
        let t = SnapshotTensor3::new(2, 2, 1, vec![0.0; 4]);
        assert!(pod_spatial(&t, 0.99).is_err());
    }

    #[test]
    fn tailored_rank_one_recovers_temporal_vector() {
        // X(mu_c) = phi sigma psiᵀ for all c: a rank-1 construction whose
        // tailored factor equals psi up to sign.
        let n_space = 4;
        let n_time = 3;
        let n_train = 2;
        let phi: Vec<f64> = vec![0.5, 0.5, 0.5, 0.5];
        let psi: Vec<f64> = {
            let raw: [f64; 3] = [1.0, 2.0, -1.0];
            let n = (raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
            raw.iter().map(|v| v / n).collect()
        };
        let sigma = 3.0;
        let mut data = vec![0.0; n_space * n_time * n_train];
        for c in 0..n_train {
            for b in 0..n_time {
                for a in 0..n_space {
                    data[a + b * n_space + c * n_space * n_time] = phi[a] * sigma * psi[b];
                }
            }
        }
        let t = SnapshotTensor3::new(n_space, n_time, n_train, data);
        let phim = pod_spatial(&t, 1.0).unwrap();
        assert_eq!(phim.cols(), 1);
        let tf = tailored_temporal(&t, &phim, 1.0).unwrap();
        assert_eq!(tf.factors.len(), 1);
        let got = &tf.factors[0];
        assert_eq!(got.cols(), 1);
        let dot: f64 = (0..n_time).map(|b| got.get(b, 0) * psi[b]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tailored_full_energy_mode_counts() {
        let t = random_tensor(5, 4, 3, 11);
        let phi = pod_spatial(&t, 1.0).unwrap();
        let tf = tailored_temporal(&t, &phi, 1.0).unwrap();
        for psi in &tf.factors {
            assert!(psi.cols() <= 3.min(4));
            // Orthonormal columns.
            let g = psi.transpose_matmul(psi);
            assert!(g.sub(&DenseMatrix::identity(psi.cols())).frobenius_norm() < 1e-10);
        }
    }

    fn random_tensor(ns: usize, nt: usize, ntr: usize, seed: u64) -> SnapshotTensor3 {
        let mut state = seed;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
        };
        let data = (0..ns * nt * ntr).map(|_| rnd()).collect();
        SnapshotTensor3::new(ns, nt, ntr, data)
    }

    #[test]
    fn subwindow_basis_dimensions_and_orthonormality() {
        // N_s = 3, N_t = 4, n_s = 2, n_t = {2, 1}: assembled is 12 x 3.
        let t = random_tensor(3, 4, 6, 5);
        let phi = pod_spatial(&t, 1.0).unwrap().truncate_cols(2);
        let psi0 = {
            let p = tailored_temporal(&t, &phi, 1.0).unwrap().factors[0].truncate_cols(2);
            p
        };
        let psi1 = tailored_temporal(&t, &phi, 1.0).unwrap().factors[1].truncate_cols(1);
        let sb = assemble_subwindow_basis(&phi, &[psi0, psi1]);
        assert_eq!(sb.assembled.rows(), 12);
        assert_eq!(sb.assembled.cols(), 3);
        let g = sb.assembled.transpose_matmul(&sb.assembled);
        assert!(g.sub(&DenseMatrix::identity(3)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn subwindow_basis_canonical_indexing() {
        // phi = e1, psi = e2 (canonical): the assembled column has its 1 at
        // (space 0, time step 2).
        let mut phi = DenseMatrix::zeros(3, 1);
        phi.set(0, 0, 1.0);
        let mut psi = DenseMatrix::zeros(4, 1);
        psi.set(2, 0, 1.0);
        let sb = assemble_subwindow_basis(&phi, &[psi]);
        for r in 0..12 {
            let expected = if r == 2 * 3 { 1.0 } else { 0.0 };
            assert_eq!(sb.assembled.get(r, 0), expected);
        }
    }

    #[test]
    fn window_basis_single_sub_is_plain() {
        let t = random_tensor(3, 4, 5, 17);
        let phi = pod_spatial(&t, 0.99).unwrap();
        let tf = tailored_temporal(&t, &phi, 0.99).unwrap();
        let sb = assemble_subwindow_basis(&phi, &tf.factors);
        let assembled = sb.assembled.clone();
        let wb = WindowBasis::from_sub_bases(vec![sb]);
        assert!(wb.assemble_dense().sub(&assembled).frobenius_norm() < 1e-15);
        assert!(wb.block_diagonal_dense().sub(&assembled).frobenius_norm() < 1e-15);
    }

    #[test]
    fn window_basis_two_subs_structure() {
        // Two sub-windows, each 12 x 3 (N_s = 3, 4 steps): the window basis
        // is 24 x 6 with the lower-left block equal to the first
        // sub-basis's last 3 rows tiled 4 times.
        let t = random_tensor(3, 4, 6, 23);
        let phi = pod_spatial(&t, 1.0).unwrap().truncate_cols(3);
        let tf = tailored_temporal(&t, &phi, 1.0).unwrap();
        let psis: Vec<DenseMatrix> = tf.factors.iter().map(|p| p.truncate_cols(1)).collect();
        let sb0 = assemble_subwindow_basis(&phi, &psis);
        let sb1 = sb0.clone();
        let tail0 = sb0.trailing_block();
        let wb = WindowBasis::from_sub_bases(vec![sb0, sb1]);
        assert_eq!(wb.n_columns(), 6);
        let dense = wb.assemble_dense();
        assert_eq!(dense.rows(), 24);
        for step in 4..8 {
            let block = dense.block(step * 3, 0, 3, 3);
            assert!(block.sub(&tail0).frobenius_norm() < 1e-15, "step {step}");
        }
        // Upper-right block is zero.
        assert_eq!(dense.block(0, 3, 12, 3).max_abs(), 0.0);
    }

    #[test]
    fn window_basis_multi_sub_not_orthogonal() {
        let t = random_tensor(3, 2, 5, 31);
        let phi = pod_spatial(&t, 0.999).unwrap();
        let tf = tailored_temporal(&t, &phi, 0.999).unwrap();
        let sb0 = assemble_subwindow_basis(&phi, &tf.factors);
        let sb1 = sb0.clone();
        let wb = WindowBasis::from_sub_bases(vec![sb0, sb1]);
        let dense = wb.assemble_dense();
        let g = dense.transpose_matmul(&dense);
        let dev = g
            .sub(&DenseMatrix::identity(wb.n_columns()))
            .frobenius_norm();
        assert!(dev > 1e-6, "expected off-diagonal coupling, got {dev}");
    }

    #[test]
    fn window_basis_apply_matches_dense() {
        let t = random_tensor(4, 3, 6, 41);
        let phi = pod_spatial(&t, 1.0).unwrap().truncate_cols(2);
        let tf = tailored_temporal(&t, &phi, 1.0).unwrap();
        let psis: Vec<DenseMatrix> = tf.factors.iter().map(|p| p.truncate_cols(2)).collect();
        let sb0 = assemble_subwindow_basis(&phi, &psis);
        let sb1 = sb0.clone();
        let sb2 = sb0.clone();
        let wb = WindowBasis::from_sub_bases(vec![sb0, sb1, sb2]);
        let dense = wb.assemble_dense();
        let y: Vec<f64> = (0..wb.n_columns()).map(|i| (i as f64 * 0.7).sin()).collect();
        let fast = wb.apply(&y);
        let slow = dense.matvec(&y);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let v: Vec<f64> = (0..dense.rows()).map(|i| (i as f64 * 0.3).cos()).collect();
        let fast_t = wb.transpose_apply(&v);
        let slow_t = dense.transpose_matvec(&v);
        for (a, b) in fast_t.iter().zip(slow_t.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Row blocks agree with dense rows.
        for s in 0..wb.n_steps() {
            let rb = wb.row_block(s);
            let expected = dense.block(s * 4, 0, 4, wb.n_columns());
            assert!(rb.sub(&expected).frobenius_norm() < 1e-15);
        }
    }

    #[test]
    fn nesting_energy_prefix_property() {
        let t = random_tensor(6, 5, 4, 57);
        let lo = pod_spatial(&t, 0.9).unwrap();
        let hi = pod_spatial(&t, 0.99).unwrap();
        assert!(hi.cols() >= lo.cols());
        for c in 0..lo.cols() {
            for r in 0..lo.rows() {
                assert_eq!(lo.get(r, c), hi.get(r, c), "prefix property violated");
            }
        }
    }

    #[test]
    fn exact_representation_at_full_energy() {
        // With e_s = e_t = 1 every training (shifted) block lies in the
        // span of the assembled basis.
        let plan = WindowPlan::uniform(4, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let trajs: Vec<Trajectory> = (0..3)
            .map(|c| {
                toy_trajectory(4, 4, move |a, n| {
                    ((a + 1) as f64 * 0.3 + c as f64).sin() * n as f64
                        + (a as f64 - c as f64 * 0.2).cos()
                })
            })
            .collect();
        for k in 0..2 {
            let tensor = build_snapshot_tensor(&trajs, &plan, k, 0).unwrap();
            let phi = pod_spatial(&tensor, 1.0).unwrap();
            let tf = tailored_temporal(&tensor, &phi, 1.0).unwrap();
            let sb = assemble_subwindow_basis(&phi, &tf.factors);
            for c in 0..3 {
                let x = tensor.slice_vec(c);
                let y = sb.assembled.transpose_matvec(x);
                let back = sb.assembled.matvec(&y);
                let err: f64 = x
                    .iter()
                    .zip(back.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                assert!(err / scale < 1e-8, "window {k} param {c}: {}", err / scale);
            }
        }
    }

    #[test]
    fn initial_guess_affine_recovery() {
        // Targets exactly affine in mu: regression is exact.
        let plan = WindowPlan::uniform(2, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let params: Vec<Parameters> = vec![
            Parameters::new(2.0, 0.013),
            Parameters::new(3.0, 0.02),
            Parameters::new(4.0, 0.016),
            Parameters::new(2.5, 0.018),
        ];
        // Trajectories linear in (mu1, mu2) entry-wise make projections
        // affine too.
        let trajs: Vec<Trajectory> = params
            .iter()
            .map(|p| {
                let p = *p;
                toy_trajectory(3, 2, move |a, n| {
                    n as f64 * (p.mu1 * (a as f64 + 1.0) + 100.0 * p.mu2)
                })
            })
            .collect();
        let tensor = build_snapshot_tensor(&trajs, &plan, 0, 0).unwrap();
        let phi = pod_spatial(&tensor, 1.0).unwrap();
        let tf = tailored_temporal(&tensor, &phi, 1.0).unwrap();
        let sb = assemble_subwindow_basis(&phi, &tf.factors);
        let wb = assemble_window_basis(vec![sb], &plan, 0).unwrap();
        let model = fit_initial_guess(&[wb.clone()], &trajs, &params, &plan).unwrap();
        assert!(!model.is_nearest_fallback());
        for (c, p) in params.iter().enumerate() {
            let predicted = model.predict(0, *p);
            let block = shifted_block(&trajs[c], &plan, 0, 0).unwrap();
            let target = wb.sub_bases()[0].assembled.transpose_matvec(&block);
            for (a, b) in predicted.iter().zip(target.iter()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn initial_guess_single_param_nearest() {
        let plan = WindowPlan::uniform(2, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let params = vec![Parameters::new(3.0, 0.015)];
        let trajs = vec![toy_trajectory(3, 2, |a, n| (a + n) as f64)];
        let tensor = build_snapshot_tensor(&trajs, &plan, 0, 0).unwrap();
        let phi = pod_spatial(&tensor, 1.0).unwrap();
        let tf = tailored_temporal(&tensor, &phi, 1.0).unwrap();
        let sb = assemble_subwindow_basis(&phi, &tf.factors);
        let wb = assemble_window_basis(vec![sb], &plan, 0).unwrap();
        let model = fit_initial_guess(&[wb.clone()], &trajs, &params, &plan).unwrap();
        assert!(model.is_nearest_fallback());
        let at_train = model.predict(0, params[0]);
        let far_away = model.predict(0, Parameters::new(9.9, 0.5));
        assert_eq!(at_train, far_away);
    }
}
