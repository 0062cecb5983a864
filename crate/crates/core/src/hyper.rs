//! GNAT hyper-reduction: residual snapshot collection, tailored space-time
//! residual bases with QR orthonormalization, the greedy space-time sample
//! mesh (temporal indices first, then spatial), gappy-POD weighting, and
//! the weighted solve entry point.

use crate::burgers::Parameters;
use crate::densekit::{norm2, thin_qr, thin_svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::par_map;
use crate::solver::{
    solve_wst_lspg, GaussNewtonConfig, GuessSource, RomSolution,
};
use crate::subspaces::{
    assemble_subwindow_basis, pod_spatial, tailored_temporal, InitialGuessModel, SnapshotTensor3,
    WindowBasis,
};
use crate::windows::WindowPlan;

/// Residual snapshots flattened over the ragged Gauss-Newton axis: per
/// window and residual sub-window, a three-way tensor whose third axis
/// runs over (training parameter, GN iteration) pairs.
#[derive(Clone, Debug)]
pub struct ResidualTensor4 {
    /// per_window[k][m]: N_s x N_t^{k,m} x n_res tensor, not mean-centered.
    pub per_window: Vec<Vec<SnapshotTensor3>>,
    /// gn_counts[k][q]: Gauss-Newton iterations spent in window k for
    /// training parameter q.
    pub gn_counts: Vec<Vec<usize>>,
}

impl ResidualTensor4 {
    /// Total residual columns per window (the paper's n_res).
    pub fn n_res(&self, k: usize) -> usize {
        self.gn_counts[k].iter().sum()
    }
}

/// Runs the unweighted windowed solve for every training parameter and
/// stores the space-time residual at every Gauss-Newton iteration.
#[allow(clippy::too_many_arguments)]
pub fn collect_residual_snapshots<M, F>(
    model_for: F,
    training: &[Parameters],
    bases: &[WindowBasis],
    plan: &WindowPlan,
    initial: &[f64],
    guess_model: Option<&InitialGuessModel>,
    cfg: &GaussNewtonConfig,
    residual_subs: usize,
) -> Result<ResidualTensor4>
where
    M: Model,
    F: Fn(Parameters) -> M + Sync + Send,
{
    if training.is_empty() {
        return Err(Error::DegenerateData("no residual-training parameters".into()));
    }
    let mut solve_cfg = cfg.clone();
    solve_cfg.collect_residual_snapshots = true;

    let runs: Vec<Result<RomSolution>> = par_map(training, |p| {
        let model = model_for(*p);
        let guesses = match guess_model {
            Some(g) => GuessSource::Regression(g, *p),
            None => GuessSource::Zero,
        };
        solve_wst_lspg(&model, bases, plan, initial, guesses, &solve_cfg, None)
    });
    let mut solutions = Vec::with_capacity(runs.len());
    for (run, p) in runs.into_iter().zip(training.iter()) {
        match run {
            Ok(sol) => solutions.push(sol),
            Err(e) => {
                let window = match &e {
                    Error::Window { window, .. } => *window,
                    Error::SolveDiverged { window, .. } => *window,
                    _ => 0,
                };
                return Err(Error::TrainingSolve {
                    mu1: p.mu1,
                    mu2: p.mu2,
                    window,
                    source: Box::new(e),
                });
            }
        }
    }

    let n_space = initial.len();
    let n_win = plan.n_windows();
    let mut per_window = Vec::with_capacity(n_win);
    let mut gn_counts = Vec::with_capacity(n_win);
    for k in 0..n_win {
        let steps = plan.window_steps(k);
        if steps % residual_subs != 0 {
            return Err(Error::InvalidPlan(format!(
                "window {k}: {residual_subs} residual sub-windows do not divide {steps} steps"
            )));
        }
        let sub_steps = steps / residual_subs;
        let counts: Vec<usize> = solutions.iter().map(|s| s.reports[k].iterations).collect();
        let n_res: usize = counts.iter().sum();
        let mut tensors = Vec::with_capacity(residual_subs);
        for m in 0..residual_subs {
            let mut data = vec![0.0; n_space * sub_steps * n_res];
            let mut col = 0;
            for sol in &solutions {
                let snap = &sol.reports[k].residual_snapshots;
                let iters = sol.reports[k].iterations;
                for it in 0..iters {
                    for b in 0..sub_steps {
                        let src_col = it * steps + m * sub_steps + b;
                        for a in 0..n_space {
                            data[a + b * n_space + col * n_space * sub_steps] =
                                snap.get(a, src_col);
                        }
                    }
                    col += 1;
                }
            }
            tensors.push(SnapshotTensor3::new(n_space, sub_steps, n_res, data));
        }
        per_window.push(tensors);
        gn_counts.push(counts);
    }
    Ok(ResidualTensor4 {
        per_window,
        gn_counts,
    })
}

/// Orthonormal space-time residual basis for one sub-window.
#[derive(Clone, Debug)]
pub struct ResidualSubBasis {
    pub spatial: DenseMatrix,
    pub temporal: Vec<DenseMatrix>,
    /// N_s N_t^{k,m} x n_st_r, orthonormal columns after the QR pass.
    pub orthonormal: DenseMatrix,
}

/// Block-diagonal residual basis over one window. Residuals carry no
/// affine reference, so there are no trailing blocks.
#[derive(Clone, Debug)]
pub struct ResidualWindowBasis {
    pub sub_bases: Vec<ResidualSubBasis>,
    n_space: usize,
    n_steps: usize,
    step_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    n_cols: usize,
}

impl ResidualWindowBasis {
    pub fn from_sub_bases(sub_bases: Vec<ResidualSubBasis>, n_space: usize) -> Self {
        let mut step_offsets = Vec::new();
        let mut col_offsets = Vec::new();
        let mut steps = 0;
        let mut cols = 0;
        for sb in &sub_bases {
            step_offsets.push(steps);
            col_offsets.push(cols);
            steps += sb.orthonormal.rows() / n_space;
            cols += sb.orthonormal.cols();
        }
        Self {
            sub_bases,
            n_space,
            n_steps: steps,
            step_offsets,
            col_offsets,
            n_cols: cols,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.n_cols
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    fn sub_of_step(&self, s: usize) -> usize {
        match self.step_offsets.binary_search(&s) {
            Ok(m) => m,
            Err(ins) => ins - 1,
        }
    }

    /// One row of the block-diagonal window basis, for space-time index
    /// (local step b, cell a).
    pub fn window_row(&self, b: usize, a: usize) -> Vec<f64> {
        let m = self.sub_of_step(b);
        let sb = &self.sub_bases[m];
        let local = b - self.step_offsets[m];
        let mut out = vec![0.0; self.n_cols];
        let row = sb.orthonormal.row(local * self.n_space + a);
        out[self.col_offsets[m]..self.col_offsets[m] + sb.orthonormal.cols()]
            .copy_from_slice(row);
        out
    }

    /// Dense block-diagonal assembly (tests and small problems).
    pub fn assemble_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_space * self.n_steps, self.n_cols);
        for (m, sb) in self.sub_bases.iter().enumerate() {
            out.set_block(
                self.step_offsets[m] * self.n_space,
                self.col_offsets[m],
                &sb.orthonormal,
            );
        }
        out
    }

    /// Minimum temporal sample count that can resolve the basis: the
    /// Cartesian-product mesh samples every temporal factor on the same
    /// index set, so it must cover the largest per-mode factor.
    pub fn min_z_t(&self) -> usize {
        self.sub_bases
            .iter()
            .flat_map(|sb| sb.temporal.iter().map(|t| t.cols()))
            .max()
            .unwrap_or(1)
    }

    /// Minimum spatial sample count: the sampled spatial factors must stay
    /// independent, which needs at least one cell per spatial mode.
    pub fn min_z_s(&self) -> usize {
        self.sub_bases
            .iter()
            .map(|sb| sb.spatial.cols())
            .max()
            .unwrap_or(1)
    }

    /// Window-local stack of every temporal factor, each placed in its
    /// sub-window's rows. Stage 1 of the greedy sampler works on this.
    pub fn temporal_stack(&self) -> DenseMatrix {
        let total_cols: usize = self
            .sub_bases
            .iter()
            .map(|sb| sb.temporal.iter().map(|t| t.cols()).sum::<usize>())
            .sum();
        let mut out = DenseMatrix::zeros(self.n_steps, total_cols);
        let mut col = 0;
        for (m, sb) in self.sub_bases.iter().enumerate() {
            let base = self.step_offsets[m];
            for t in &sb.temporal {
                for j in 0..t.cols() {
                    for b in 0..t.rows() {
                        out.set(base + b, col, t.get(b, j));
                    }
                    col += 1;
                }
            }
        }
        out
    }
}

/// Tailored space-time residual basis for window `k`: the same spatial
/// POD / tailored-temporal pipeline as the state bases, with no shifting,
/// orthonormalized per sub-window by thin QR.
pub fn build_residual_basis(
    tensor: &ResidualTensor4,
    e_rs: f64,
    e_rt: f64,
    plan: &WindowPlan,
    k: usize,
) -> Result<ResidualWindowBasis> {
    let subs = &tensor.per_window[k];
    let n_space = subs[0].n_space;
    let mut sub_bases = Vec::with_capacity(subs.len());
    for t in subs {
        if t.frobenius_norm() == 0.0 {
            return Err(Error::DegenerateData(format!(
                "window {k}: all residual snapshots are zero; hyper-reduction unnecessary"
            )));
        }
        let phi = pod_spatial(t, e_rs)?;
        let tf = tailored_temporal(t, &phi, e_rt)?;
        let tensor_product = assemble_subwindow_basis(&phi, &tf.factors);
        let qr = thin_qr(&tensor_product.assembled);
        sub_bases.push(ResidualSubBasis {
            spatial: phi,
            temporal: tf.factors,
            orthonormal: qr.q,
        });
    }
    let rb = ResidualWindowBasis::from_sub_bases(sub_bases, n_space);
    debug_assert_eq!(rb.n_steps(), plan.window_steps(k));
    Ok(rb)
}

/// Selected space-time residual indices for one window: the Cartesian
/// product of temporal and spatial index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMesh {
    /// Local time-step indices, sorted, unique.
    pub temporal: Vec<usize>,
    /// Spatial cell indices, sorted, unique.
    pub spatial: Vec<usize>,
}

impl SampleMesh {
    pub fn len(&self) -> usize {
        self.temporal.len() * self.spatial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Space-time row indices (time-major), ordered temporal-outer.
    pub fn rows(&self, n_space: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for &b in &self.temporal {
            for &a in &self.spatial {
                out.push(b * n_space + a);
            }
        }
        out
    }
}

/// Greedy subset selection: maintains an orthonormal basis Q of the span
/// of chosen rows and picks, per iteration, the candidate row group whose
/// component orthogonal to Q captures the most energy of `data`'s columns
/// (the drop in Frobenius reconstruction error). Ties break to the
/// smallest index.
fn greedy_rows(
    data: &DenseMatrix,
    candidate_groups: &[Vec<Vec<f64>>],
    picks: usize,
) -> Vec<usize> {
    let n = data.cols();
    let mut q_basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..candidate_groups.len()).collect();
    for _ in 0..picks {
        let mut best_idx = usize::MAX;
        let mut best_gain = -1.0;
        for &cand in &remaining {
            let gain = group_gain(data, &q_basis, &candidate_groups[cand], n);
            if gain > best_gain + 1e-14 {
                best_gain = gain;
                best_idx = cand;
            }
        }
        // All gains ~equal (typically zero once the span is covered):
        // smallest remaining index.
        if best_idx == usize::MAX {
            best_idx = remaining[0];
        }
        chosen.push(best_idx);
        for row in &candidate_groups[best_idx] {
            if let Some(q) = orthogonal_component(row, &q_basis) {
                q_basis.push(q);
            }
        }
        remaining.retain(|&c| c != best_idx);
    }
    chosen.sort_unstable();
    chosen
}

/// Energy of `data` captured by the directions a candidate group adds.
fn group_gain(data: &DenseMatrix, q_basis: &[Vec<f64>], group: &[Vec<f64>], _n: usize) -> f64 {
    let mut local: Vec<Vec<f64>> = Vec::new();
    let mut gain = 0.0;
    for row in group {
        let mut r = row.clone();
        project_out(&mut r, q_basis);
        project_out(&mut r, &local);
        let nrm = norm2(&r);
        if nrm > 1e-12 {
            for v in &mut r {
                *v /= nrm;
            }
            // || data q ||^2
            let dq = data.matvec(&r);
            gain += dq.iter().map(|v| v * v).sum::<f64>();
            local.push(r);
        }
    }
    gain
}

fn project_out(r: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let d: f64 = r.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        for (ri, qi) in r.iter_mut().zip(q.iter()) {
            *ri -= d * qi;
        }
    }
}

fn orthogonal_component(row: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut r = row.to_vec();
    project_out(&mut r, basis);
    // Second pass for numerical hygiene.
    project_out(&mut r, basis);
    let nrm = norm2(&r);
    if nrm > 1e-12 {
        for v in &mut r {
            *v /= nrm;
        }
        Some(r)
    } else {
        None
    }
}

/// Two-stage greedy sample mesh: temporal indices against the stacked
/// temporal factors, then spatial indices against the window residual
/// basis restricted to the chosen temporal rows.
pub fn greedy_sample_mesh(
    rb: &ResidualWindowBasis,
    z_t: usize,
    z_s: usize,
    plan: &WindowPlan,
    k: usize,
) -> Result<SampleMesh> {
    let steps = plan.window_steps(k);
    let n_space = rb.n_space();
    if z_t == 0 || z_t > steps || z_s == 0 || z_s > n_space {
        return Err(Error::InfeasibleMesh(format!(
            "window {k}: z_t = {z_t} of {steps} steps, z_s = {z_s} of {n_space} cells"
        )));
    }
    if z_t * z_s < rb.n_columns() {
        return Err(Error::InfeasibleMesh(format!(
            "window {k}: z = {} below the residual basis dimension {}",
            z_t * z_s,
            rb.n_columns()
        )));
    }
    // Cartesian-product structure: every tensor-product block is sampled on
    // the same temporal/spatial index sets, so each factor must be
    // resolvable on its own.
    if z_t < rb.min_z_t() || z_s < rb.min_z_s() {
        return Err(Error::InfeasibleMesh(format!(
            "window {k}: Cartesian mesh needs z_t >= {} and z_s >= {} to resolve the tensor-product factors (got z_t = {z_t}, z_s = {z_s})",
            rb.min_z_t(),
            rb.min_z_s()
        )));
    }

    // Stage 1: temporal indices from the stacked temporal factors.
    let temporal = if z_t == steps {
        (0..steps).collect()
    } else {
        let psi = rb.temporal_stack();
        let groups: Vec<Vec<Vec<f64>>> = (0..steps).map(|b| vec![psi.row(b).to_vec()]) .collect();
        greedy_rows(&psi, &groups, z_t)
    };

    // Stage 2: spatial indices; each candidate contributes its rows across
    // all chosen temporal indices.
    let spatial = if z_s == n_space {
        (0..n_space).collect()
    } else {
        let pi = rb.assemble_dense();
        let groups: Vec<Vec<Vec<f64>>> = (0..n_space)
            .map(|a| {
                temporal
                    .iter()
                    .map(|&b| pi.row(b * n_space + a).to_vec())
                    .collect()
            })
            .collect();
        greedy_rows(&pi, &groups, z_s)
    };

    Ok(SampleMesh { temporal, spatial })
}

/// Gappy-POD weighting operator W = (Z Pi_r)^+ Z for one window: applying
/// it touches only the sampled space-time entries.
#[derive(Clone, Debug)]
pub struct GnatWeights {
    pub mesh: SampleMesh,
    /// (Z Pi_r)^+, n_st_r x z.
    pub reconstruction: DenseMatrix,
    n_space: usize,
    n_steps: usize,
}

impl GnatWeights {
    pub fn n_sampled(&self) -> usize {
        self.mesh.len()
    }

    pub fn n_weighted_rows(&self) -> usize {
        self.reconstruction.rows()
    }

    /// Restricts a full space-time vector to the sampled entries.
    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_space * self.n_steps);
        self.mesh
            .rows(self.n_space)
            .iter()
            .map(|&r| v[r])
            .collect()
    }

    /// W v for a full vector: gappy reconstruction coefficients of v.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_to_sampled(&self.restrict(v))
    }

    pub fn apply_to_sampled(&self, sampled: &[f64]) -> Vec<f64> {
        self.reconstruction.matvec(sampled)
    }

    pub fn apply_to_sampled_matrix(&self, sampled: &DenseMatrix) -> DenseMatrix {
        self.reconstruction.matmul(sampled)
    }

    /// Sampled residual entries at the trial state `reference + basis y`,
    /// reconstructing only the state columns the sampled stencils demand.
    pub fn sampled_residual<M: Model>(
        &self,
        model: &M,
        basis: &WindowBasis,
        incoming: &[f64],
        plan: &WindowPlan,
        _k: usize,
        y: &[f64],
    ) -> Result<Vec<f64>> {
        let (r, _) = self.sampled_eval(model, basis, incoming, plan, y, false)?;
        Ok(r)
    }

    /// Sampled residual and sampled Jacobian rows times the trial basis.
    pub fn sampled_residual_jacobian<M: Model>(
        &self,
        model: &M,
        basis: &WindowBasis,
        incoming: &[f64],
        plan: &WindowPlan,
        _k: usize,
        y: &[f64],
    ) -> Result<(Vec<f64>, DenseMatrix)> {
        let (r, j) = self.sampled_eval(model, basis, incoming, plan, y, true)?;
        Ok((r, j.expect("jacobian requested")))
    }

    fn sampled_eval<M: Model>(
        &self,
        model: &M,
        basis: &WindowBasis,
        incoming: &[f64],
        plan: &WindowPlan,
        y: &[f64],
        with_jacobian: bool,
    ) -> Result<(Vec<f64>, Option<DenseMatrix>)> {
        let n_space = self.n_space;
        let dt = plan.dt;
        assert_eq!(basis.n_steps(), self.n_steps);
        // State columns demanded by the sampled steps plus their stencils.
        let mut needed: Vec<usize> = Vec::new();
        for &b in &self.mesh.temporal {
            let scheme = plan.step_scheme(b);
            for j in 0..=scheme.width() {
                if b as isize - j as isize >= 0 {
                    needed.push(b - j);
                }
            }
        }
        needed.sort_unstable();
        needed.dedup();

        // Reconstruct exactly those columns: incoming + row_block(s) y.
        let mut columns: std::collections::HashMap<usize, Vec<f64>> =
            std::collections::HashMap::new();
        let mut row_blocks: std::collections::HashMap<usize, DenseMatrix> =
            std::collections::HashMap::new();
        for &s in &needed {
            let rb = basis.row_block(s);
            let mut col = rb.matvec(y);
            for (c, r) in col.iter_mut().zip(incoming.iter()) {
                *c += r;
            }
            columns.insert(s, col);
            if with_jacobian {
                row_blocks.insert(s, rb);
            }
        }

        let z_s = self.mesh.spatial.len();
        let z = self.mesh.len();
        let mut r_sampled = vec![0.0; z];
        let mut j_sampled = if with_jacobian {
            Some(DenseMatrix::zeros(z, basis.n_columns()))
        } else {
            None
        };
        for (ti, &b) in self.mesh.temporal.iter().enumerate() {
            let scheme = plan.step_scheme(b);
            let alpha = scheme.alpha();
            let beta = scheme.beta();
            // Full residual column at this step (the spatial dimension is
            // cheap; temporal sampling carries the savings).
            let mut r_col = vec![0.0; n_space];
            for j in 0..=scheme.width() {
                let src = b as isize - j as isize;
                let state: &[f64] = if src >= 0 {
                    columns.get(&(src as usize)).expect("needed column")
                } else {
                    incoming
                };
                let aj = alpha[j];
                for (rv, sv) in r_col.iter_mut().zip(state.iter()) {
                    *rv += aj * sv;
                }
                if beta[j] != 0.0 {
                    let f = model.velocity_vec(state);
                    for (rv, fv) in r_col.iter_mut().zip(f.iter()) {
                        *rv -= dt * beta[j] * fv;
                    }
                }
            }
            for (si, &a) in self.mesh.spatial.iter().enumerate() {
                r_sampled[ti * z_s + si] = r_col[a];
            }

            if let Some(jm) = j_sampled.as_mut() {
                // Row block of dr/du * basis at this step, restricted to the
                // sampled cells.
                let p_b = &row_blocks[&b];
                let jac = model.jacobian(columns.get(&b).expect("diagonal column"));
                let jp = jac.mul_matrix(p_b);
                for (si, &a) in self.mesh.spatial.iter().enumerate() {
                    let dst_row = ti * z_s + si;
                    for c in 0..basis.n_columns() {
                        let mut v = alpha[0] * p_b.get(a, c) - dt * beta[0] * jp.get(a, c);
                        for j in 1..=scheme.width() {
                            let src = b as isize - j as isize;
                            if src >= 0 {
                                v += alpha[j] * row_blocks[&(src as usize)].get(a, c);
                            }
                        }
                        jm.set(dst_row, c, v);
                    }
                }
            }
        }
        Ok((r_sampled, j_sampled))
    }
}

/// Builds the gappy-POD weighting from a mesh and the residual basis.
pub fn gnat_weights(mesh: &SampleMesh, rb: &ResidualWindowBasis) -> Result<GnatWeights> {
    let n_space = rb.n_space();
    let rows = mesh.rows(n_space);
    let mut sampled = DenseMatrix::zeros(rows.len(), rb.n_columns());
    for (i, &r) in rows.iter().enumerate() {
        let b = r / n_space;
        let a = r % n_space;
        let row = rb.window_row(b, a);
        sampled.row_mut(i).copy_from_slice(&row);
    }
    if sampled.rows() < sampled.cols() {
        return Err(Error::InfeasibleMesh(format!(
            "{} sampled rows cannot resolve {} residual modes; enlarge z_t or z_s",
            sampled.rows(),
            sampled.cols()
        )));
    }
    let svd = thin_svd(&sampled)?;
    let smax = svd.singular_values[0];
    let smin = *svd.singular_values.last().unwrap();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::InfeasibleMesh(format!(
            "sampled residual basis is rank deficient (sigma_min/sigma_max = {:.3e}); enlarge z_t or z_s",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let reconstruction = crate::densekit::pseudo_inverse(&sampled, 1e-13)?;
    Ok(GnatWeights {
        mesh: mesh.clone(),
        reconstruction,
        n_space,
        n_steps: rb.n_steps(),
    })
}

/// WST-GNAT: the windowed solve with per-window gappy-POD weighting.
pub fn solve_wst_gnat<M: Model>(
    model: &M,
    bases: &[WindowBasis],
    weights: &[GnatWeights],
    plan: &WindowPlan,
    initial: &[f64],
    guesses: GuessSource,
    cfg: &GaussNewtonConfig,
) -> Result<RomSolution> {
    solve_wst_lspg(model, bases, plan, initial, guesses, cfg, Some(weights))
}
