//! Experiment harness: error metrics, Lipschitz-constant estimation,
//! a posteriori / a priori error-bound evaluation, the training pipeline
//! and the Pareto sweep driver.

use crate::burgers::{BurgersModel, Parameters, SpatialGrid, Trajectory};
use crate::config::Config;
use crate::densekit::{least_squares, norm2, thin_svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::hyper::{
    build_residual_basis, collect_residual_snapshots, gnat_weights, greedy_sample_mesh,
    solve_wst_gnat, GnatWeights, ResidualWindowBasis,
};
use crate::model::Model;
use crate::parallel::par_map;
use crate::solver::{
    solve_wst_lspg, GuessSource, RomSolution,
};
use crate::subspaces::{
    assemble_subwindow_basis, assemble_window_basis, build_snapshot_tensor, fit_initial_guess,
    pod_spatial, tailored_temporal, InitialGuessModel, WindowBasis,
};
use crate::windows::{assemble_window_residual, scalar_window_operators, WindowPlan};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

/// Accuracy and cost summary of one online solve against its FOM.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub mse: f64,
    pub imse: f64,
    pub residual_l2: f64,
    pub wall_time_rom: f64,
    pub wall_time_fom: f64,
    pub relative_wall_time: f64,
}

/// Relative mean squared trajectory error, initial condition excluded.
pub fn mse(rom: &Trajectory, fom: &Trajectory) -> Result<f64> {
    if rom.n_space != fom.n_space || rom.n_time != fom.n_time {
        return Err(Error::DimensionMismatch(format!(
            "mse: {}x{} vs {}x{}",
            rom.n_space, rom.n_time, fom.n_space, fom.n_time
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..fom.n_time {
        for a in 0..fom.n_space {
            let u = fom.states.get(a, n);
            let d = rom.states.get(a, n) - u;
            num += d * d;
            den += u * u;
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateData("mse denominator is zero".into()));
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Relative error of per-DOF rectangle-rule time integrals: phase-type
/// errors that cancel over time are invisible here.
pub fn imse(rom: &Trajectory, fom: &Trajectory, dt: f64) -> Result<f64> {
    if rom.n_space != fom.n_space || rom.n_time != fom.n_time {
        return Err(Error::DimensionMismatch("imse dims".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..fom.n_space {
        let mut i_rom = 0.0;
        let mut i_fom = 0.0;
        for n in 0..fom.n_time {
            i_rom += rom.states.get(a, n) * dt;
            i_fom += fom.states.get(a, n) * dt;
        }
        num += (i_rom - i_fom) * (i_rom - i_fom);
        den += i_fom * i_fom;
    }
    if den == 0.0 {
        return Err(Error::DegenerateData("imse denominator is zero".into()));
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Space-time residual l2 norm of a trajectory under a window plan: the
/// square root of the sum of squared window-residual norms. Windows
/// partition the steps, so the value is partition-invariant for one-step
/// schemes.
pub fn residual_l2<M: Model>(traj: &Trajectory, model: &M, plan: &WindowPlan) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..plan.n_windows() {
        let phi = plan.phi(k)?;
        let steps = plan.window_steps(k);
        let mut states = DenseMatrix::zeros(traj.n_space, steps);
        for s in 0..steps {
            states.set_col(s, &traj.state(phi + s));
        }
        let incoming = traj.state(phi - 1);
        let r = assemble_window_residual(&states, &incoming, model, plan, k)?;
        acc += r.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(acc.sqrt())
}

/// Empirical lower estimate of the velocity's Lipschitz constant: the max
/// difference quotient over sampled state pairs plus random perturbations.
pub fn estimate_lipschitz<M: Model>(samples: &[Vec<f64>], model: &M) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mut best = 0.0_f64;
    let mut consider = |v: &[f64], w: &[f64]| {
        let dv: Vec<f64> = v.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
        let dn = norm2(&dv);
        if dn < 1e-14 {
            return; // duplicate states: skip the 0/0 pair
        }
        let fv = model.velocity_vec(v);
        let fw = model.velocity_vec(w);
        let df: Vec<f64> = fv.iter().zip(fw.iter()).map(|(a, b)| a - b).collect();
        best = best.max(norm2(&df) / dn);
    };
    for pair in samples.windows(2) {
        consider(&pair[0], &pair[1]);
    }
    // Long-range pairs.
    let stride = (samples.len() / 16).max(1);
    for i in (0..samples.len()).step_by(stride) {
        consider(&samples[0], &samples[i]);
    }
    // Random perturbations around sampled states.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let scale = samples
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for _ in 0..100 {
        let base = &samples[rng.gen_range(0..samples.len())];
        let eps = 10f64.powf(rng.gen_range(-6.0..-1.0)) * scale;
        let perturbed: Vec<f64> = base
            .iter()
            .map(|v| v + eps * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        consider(base, &perturbed);
    }
    best
}

/// Per-window bound constants and the evaluated inequality sides.
#[derive(Clone, Debug, Serialize)]
pub struct WindowBound {
    pub window: usize,
    pub kappa_f: f64,
    pub sigma_min_a: f64,
    pub sigma_max_b: f64,
    pub sigma_max_a_ic: f64,
    pub sigma_max_b_ic: f64,
    pub c1: f64,
    pub c2: f64,
    pub a2_satisfied: bool,
    /// Right-hand side of the local bound (infinite when A2 fails).
    pub local_rhs: f64,
    /// Actual window error when a ROM solution was available.
    pub local_lhs: f64,
    pub global_rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub windows: Vec<WindowBound>,
    /// Simplified exponential-in-windows constant; reported, not asserted.
    pub simplified_global_constant: f64,
}

impl BoundReport {
    /// Local bound violations among windows where A2 holds.
    pub fn violations(&self) -> usize {
        self.windows
            .iter()
            .filter(|w| w.a2_satisfied && w.local_lhs.is_finite() && w.local_lhs > w.local_rhs)
            .count()
    }
}

/// Singular-value constants of the window operators at the scalar
/// (per-step coefficient) level; the full operators are Kronecker products
/// with the spatial identity, so the spectra coincide.
fn window_constants(plan: &WindowPlan, k: usize, kappa_f: f64) -> Result<(f64, f64, f64, f64, f64, f64)> {
    let ops = scalar_window_operators(plan, k)?;
    let svd_a = thin_svd(&ops.a)?;
    let sigma_min_a = *svd_a.singular_values.last().unwrap();
    let svd_b = thin_svd(&ops.b)?;
    let sigma_max_b = svd_b.singular_values[0];
    let sigma_max_a_ic = norm2(&ops.a_ic.col(0));
    let sigma_max_b_ic = norm2(&ops.b_ic.col(0));
    let c1 = sigma_min_a - sigma_max_b * plan.dt * kappa_f;
    let c2 = sigma_max_a_ic + plan.dt * kappa_f * sigma_max_b_ic;
    Ok((sigma_min_a, sigma_max_b, sigma_max_a_ic, sigma_max_b_ic, c1, c2))
}

fn window_block(traj: &Trajectory, plan: &WindowPlan, k: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    let phi = plan.phi(k)?;
    let steps = plan.window_steps(k);
    let mut states = DenseMatrix::zeros(traj.n_space, steps);
    for s in 0..steps {
        states.set_col(s, &traj.state(phi + s));
    }
    Ok((states, traj.state(phi - 1)))
}

fn stack_columns(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for c in 0..m.cols() {
        out.extend(m.col(c));
    }
    out
}

/// Local and global a posteriori bounds evaluated on an actual ROM run.
pub fn aposteriori_bound<M: Model>(
    romsol: &RomSolution,
    fom: &Trajectory,
    model: &M,
    plan: &WindowPlan,
    kappa_f: f64,
) -> Result<BoundReport> {
    let n_win = plan.n_windows();
    let mut windows = Vec::with_capacity(n_win);
    let mut residual_norms = Vec::with_capacity(n_win);
    let mut constants = Vec::with_capacity(n_win);
    for k in 0..n_win {
        let (s_min_a, s_max_b, s_max_aic, s_max_bic, c1, c2) =
            window_constants(plan, k, kappa_f)?;
        let (rom_states, rom_incoming) = window_block(&romsol.trajectory, plan, k)?;
        let (fom_states, fom_incoming) = window_block(fom, plan, k)?;
        let r = assemble_window_residual(&rom_states, &rom_incoming, model, plan, k)?;
        let r_norm = norm2(&r);
        residual_norms.push(r_norm);
        constants.push((c1, c2));
        let diff = stack_columns(&rom_states)
            .iter()
            .zip(stack_columns(&fom_states).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let e_ic: f64 = rom_incoming
            .iter()
            .zip(fom_incoming.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let a2 = c1 > 0.0;
        let local_rhs = if a2 {
            r_norm / c1 + (c2 / c1) * e_ic
        } else {
            f64::INFINITY
        };
        windows.push(WindowBound {
            window: k,
            kappa_f,
            sigma_min_a: s_min_a,
            sigma_max_b: s_max_b,
            sigma_max_a_ic: s_max_aic,
            sigma_max_b_ic: s_max_bic,
            c1,
            c2,
            a2_satisfied: a2,
            local_rhs,
            local_lhs: diff,
            global_rhs: f64::NAN,
        });
    }
    fill_global_bounds(&mut windows, &constants, &residual_norms);
    let simplified = simplified_global_constant(&windows, &residual_norms, plan);
    Ok(BoundReport {
        windows,
        simplified_global_constant: simplified,
    })
}

/// Global weighted-residual-sum bound: for window k the term for source
/// window i is (prod_{l=i+1..k} C2_l) / (prod_{l=i..k} C1_l) * ||r_i||.
fn fill_global_bounds(
    windows: &mut [WindowBound],
    constants: &[(f64, f64)],
    residual_norms: &[f64],
) {
    for k in 0..windows.len() {
        if constants[..=k].iter().any(|(c1, _)| *c1 <= 0.0) {
            windows[k].global_rhs = f64::INFINITY;
            continue;
        }
        let mut total = 0.0;
        for i in 0..=k {
            let mut factor = 1.0;
            for l in i + 1..=k {
                factor *= constants[l].1;
            }
            for l in i..=k {
                factor /= constants[l].0;
            }
            total += factor * residual_norms[i];
        }
        windows[k].global_rhs = total;
    }
}

/// The exponential-in-windows simplified constant, evaluated at the last
/// window for uniform plans.
fn simplified_global_constant(
    windows: &[WindowBound],
    residual_norms: &[f64],
    plan: &WindowPlan,
) -> f64 {
    let k = windows.len() - 1;
    let w = &windows[0];
    if w.c1 <= 0.0 || w.sigma_max_a_ic == 0.0 {
        return f64::INFINITY;
    }
    let kappa = w.kappa_f;
    let dt = plan.dt;
    let ratio_b = w.sigma_max_b / w.sigma_min_a;
    let denominator = 1.0 - dt * kappa * ratio_b;
    if denominator <= 0.0 {
        return f64::INFINITY;
    }
    let ratio_bic = w.sigma_max_b_ic / w.sigma_max_a_ic;
    let exponent = (k as f64) * dt * kappa * (ratio_bic + ratio_b) / denominator;
    let max_res = residual_norms.iter().fold(0.0_f64, |m, v| m.max(*v));
    (k as f64 / w.c1)
        * (2.0 * w.sigma_max_a_ic / w.sigma_min_a).powi(k as i32)
        * exponent.exp()
        * max_res
}

/// A priori bounds: the FOM is projected (least squares) onto each
/// window's trial subspace and the residual is evaluated at the
/// projection. The incoming-error term is chained recursively through the
/// previous window's bound. When a ROM run is supplied its actual window
/// errors fill the LHS column.
pub fn apriori_bound<M: Model>(
    fom: &Trajectory,
    bases: &[WindowBasis],
    model: &M,
    plan: &WindowPlan,
    kappa_f: f64,
    rom: Option<&RomSolution>,
) -> Result<BoundReport> {
    let n_win = plan.n_windows();
    let mut windows = Vec::with_capacity(n_win);
    let mut residual_norms = Vec::with_capacity(n_win);
    let mut constants = Vec::with_capacity(n_win);
    let mut prev_bound = 0.0_f64;
    let mut projected_incoming = fom.initial.clone();
    for k in 0..n_win {
        let (s_min_a, s_max_b, s_max_aic, s_max_bic, c1, c2) =
            window_constants(plan, k, kappa_f)?;
        let (fom_states, _) = window_block(fom, plan, k)?;
        // l2-orthogonal projection of the FOM block onto the affine trial
        // subspace anchored at the projected incoming state.
        let dense = bases[k].assemble_dense();
        let target: Vec<f64> = {
            let steps = plan.window_steps(k);
            let mut t = Vec::with_capacity(dense.rows());
            for s in 0..steps {
                let col = fom_states.col(s);
                t.extend(
                    col.iter()
                        .zip(projected_incoming.iter())
                        .map(|(a, b)| a - b),
                );
            }
            t
        };
        let sol = least_squares(&dense, &target)?;
        let projected = crate::solver::reconstruct_state(&bases[k], &projected_incoming, &sol.x);
        let r = assemble_window_residual(&projected, &projected_incoming, model, plan, k)?;
        let r_norm = norm2(&r);
        residual_norms.push(r_norm);
        constants.push((c1, c2));
        let a2 = c1 > 0.0;
        let local_rhs = if a2 {
            r_norm / c1 + (2.0 * c2 / c1) * prev_bound
        } else {
            f64::INFINITY
        };
        prev_bound = local_rhs;
        let local_lhs = match rom {
            Some(sol) => {
                let (rom_states, _) = window_block(&sol.trajectory, plan, k)?;
                stack_columns(&rom_states)
                    .iter()
                    .zip(stack_columns(&fom_states).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }
            None => f64::NAN,
        };
        windows.push(WindowBound {
            window: k,
            kappa_f,
            sigma_min_a: s_min_a,
            sigma_max_b: s_max_b,
            sigma_max_a_ic: s_max_aic,
            sigma_max_b_ic: s_max_bic,
            c1,
            c2,
            a2_satisfied: a2,
            local_rhs,
            local_lhs,
            global_rhs: f64::NAN,
        });
        projected_incoming = projected.col(plan.window_steps(k) - 1);
    }
    // The a priori chain doubles the incoming constant.
    let doubled: Vec<(f64, f64)> = constants.iter().map(|(c1, c2)| (*c1, 2.0 * c2)).collect();
    fill_global_bounds(&mut windows, &doubled, &residual_norms);
    let simplified = simplified_global_constant(&windows, &residual_norms, plan);
    Ok(BoundReport {
        windows,
        simplified_global_constant: simplified,
    })
}

/// Everything the online phase needs from training.
#[derive(Clone, Debug)]
pub struct TrainingArtifacts {
    pub plan: WindowPlan,
    pub bases: Vec<WindowBasis>,
    pub guess_model: InitialGuessModel,
    pub n_st_total: usize,
}

/// Trains the per-window bases and the initial-guess regression from FOM
/// trajectories. Sub-window builds fan out in parallel.
pub fn train_state_bases(
    trajectories: &[Trajectory],
    params: &[Parameters],
    plan: &WindowPlan,
    e_s: f64,
    e_t: f64,
) -> Result<TrainingArtifacts> {
    let n_win = plan.n_windows();
    let pairs: Vec<(usize, usize)> = (0..n_win)
        .flat_map(|k| (0..plan.n_sub(k)).map(move |m| (k, m)))
        .collect();
    let built = par_map(&pairs, |&(k, m)| -> Result<_> {
        let tensor = build_snapshot_tensor(trajectories, plan, k, m)?;
        let phi = pod_spatial(&tensor, e_s)?;
        let tf = tailored_temporal(&tensor, &phi, e_t)?;
        Ok(((k, m), assemble_subwindow_basis(&phi, &tf.factors)))
    });
    let mut per_window: Vec<Vec<Option<crate::subspaces::SubwindowBasis>>> = (0..n_win)
        .map(|k| vec![None; plan.n_sub(k)])
        .collect();
    for item in built {
        let ((k, m), sb) = item?;
        per_window[k][m] = Some(sb);
    }
    let mut bases = Vec::with_capacity(n_win);
    for (k, subs) in per_window.into_iter().enumerate() {
        let subs: Vec<_> = subs.into_iter().map(|s| s.unwrap()).collect();
        bases.push(assemble_window_basis(subs, plan, k)?);
    }
    let guess_model = fit_initial_guess(&bases, trajectories, params, plan)?;
    let n_st_total = bases.iter().map(|b| b.n_columns()).sum();
    Ok(TrainingArtifacts {
        plan: plan.clone(),
        bases,
        guess_model,
        n_st_total,
    })
}

/// Runs the FOM over a parameter list in parallel.
pub fn fom_sweep(
    params: &[Parameters],
    grid: &SpatialGrid,
    dt: f64,
    n_steps: usize,
    scheme: crate::windows::LmmScheme,
) -> Result<Vec<Trajectory>> {
    let runs = par_map(params, |p| crate::burgers::fom_march(*p, grid, dt, n_steps, scheme));
    runs.into_iter().collect()
}

/// One Pareto-sweep result row, mirroring the benchmark table columns.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub l_w: f64,
    pub l_s: f64,
    pub n_st_total: usize,
    pub n_st_r_total: Option<usize>,
    pub e_s: f64,
    pub e_t: f64,
    pub e_rs: Option<f64>,
    pub e_rt: Option<f64>,
    pub z_t: Option<usize>,
    pub z_s: Option<usize>,
    pub mse: f64,
    pub imse: f64,
    pub residual_l2: f64,
    pub relative_wall_time: f64,
    pub converged: bool,
}

impl SweepRow {
    pub fn csv_header() -> &'static str {
        "method,l_w,l_s,n_st_total,n_st_r_total,e_s,e_t,e_rs,e_rt,z_t,z_s,mse,imse,residual_l2,relative_wall_time,converged"
    }

    pub fn to_csv(&self) -> String {
        let opt_u = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.l_w,
            self.l_s,
            self.n_st_total,
            opt_u(&self.n_st_r_total),
            self.e_s,
            self.e_t,
            opt_f(&self.e_rs),
            opt_f(&self.e_rt),
            opt_u(&self.z_t),
            opt_u(&self.z_s),
            self.mse,
            self.imse,
            self.residual_l2,
            self.relative_wall_time,
            self.converged
        )
    }
}

/// Method label per the limiting-case convention: one window spanning the
/// whole domain with one sub-window is the single-subspace method.
fn method_label(plan: &WindowPlan, gnat: bool) -> String {
    let single = plan.n_windows() == 1 && plan.n_sub(0) == 1;
    match (single, gnat) {
        (true, false) => "ST-LSPG".into(),
        (true, true) => "ST-GNAT".into(),
        (false, false) => "WST-LSPG".into(),
        (false, true) => "WST-GNAT".into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct PreparedConfig {
    plan: WindowPlan,
    artifacts: TrainingArtifacts,
    e_s: f64,
    e_t: f64,
    gnat: Option<PreparedGnat>,
}

struct PreparedGnat {
    weights: Vec<GnatWeights>,
    n_st_r_total: usize,
    e_rs: f64,
    e_rt: f64,
    z_t: usize,
    z_s: usize,
}

/// Full Pareto study: every (l_w, l_s, energy) combination, with optional
/// GNAT variants over the (e_r, z_t, z_s) grids. Accuracy solves run
/// concurrently; wall-time measurement serializes afterwards on a single
/// lane so timings stay uncontended.
pub fn pareto_sweep(cfg: &Config, test_params: &[Parameters]) -> Result<Vec<SweepRow>> {
    if test_params.is_empty() {
        return Err(Error::InvalidConfig("empty test-parameter list".into()));
    }
    let grid = SpatialGrid::new(cfg.grid.n_cells, cfg.grid.x_min, cfg.grid.x_max);
    let scheme = cfg.time.scheme;
    let dt = cfg.time.dt;
    let n_steps = cfg.time.n_steps;
    let gn_cfg = {
        let mut c = cfg.solver.to_gauss_newton();
        c.abort_on_divergence = false;
        c
    };

    let training = crate::burgers::sample_parameter_grid(
        cfg.params.mu1_range,
        cfg.params.n_mu1,
        cfg.params.mu2_range,
        cfg.params.n_mu2,
    )?;
    let trajectories = fom_sweep(&training, &grid, dt, n_steps, scheme)?;

    // FOM baseline timing: median over repetitions, measured serially.
    let reps = cfg.sweep.repetitions.max(1);
    let fom_times: Vec<f64> = (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            let _ = crate::burgers::fom_march(test_params[0], &grid, dt, n_steps, scheme);
            t0.elapsed().as_secs_f64()
        })
        .collect();
    let wall_fom = median(fom_times);
    let fom_test = crate::burgers::fom_march(test_params[0], &grid, dt, n_steps, scheme)?;

    // Enumerate and train each (l_w, l_s, e) family.
    let mut combos: Vec<(f64, f64, f64, f64)> = Vec::new();
    for &l_w in &cfg.sweep.l_w {
        for &l_s in &cfg.sweep.l_s {
            if l_s > l_w {
                continue;
            }
            for &(e_s, e_t) in &cfg.sweep.e_pairs {
                combos.push((l_w, l_s, e_s, e_t));
            }
        }
    }

    let prepared: Vec<Result<Vec<PreparedConfig>>> = par_map(&combos, |&(l_w, l_s, e_s, e_t)| {
        let plan = WindowPlan::from_lengths(n_steps, dt, l_w, l_s, scheme)?;
        let artifacts = train_state_bases(&trajectories, &training, &plan, e_s, e_t)?;
        let mut out = vec![PreparedConfig {
            plan: plan.clone(),
            artifacts: artifacts.clone(),
            e_s,
            e_t,
            gnat: None,
        }];
        if cfg.sweep.gnat {
            let residual_training = crate::burgers::sample_parameter_grid(
                cfg.params.mu1_range,
                cfg.params.residual_n_mu1,
                cfg.params.mu2_range,
                cfg.params.residual_n_mu2,
            )?;
            let initial = vec![1.0; grid.n_cells];
            let tensor = collect_residual_snapshots(
                |p| BurgersModel::new(grid.clone(), p),
                &residual_training,
                &artifacts.bases,
                &plan,
                &initial,
                Some(&artifacts.guess_model),
                &gn_cfg,
                1,
            )?;
            for &(e_rs, e_rt) in &cfg.sweep.e_r_pairs {
                let rbs: Vec<ResidualWindowBasis> = (0..plan.n_windows())
                    .map(|k| build_residual_basis(&tensor, e_rs, e_rt, &plan, k))
                    .collect::<Result<_>>()?;
                let n_st_r_total = rbs.iter().map(|rb| rb.n_columns()).sum();
                for &z_t in &cfg.sweep.z_t {
                    for &z_s in &cfg.sweep.z_s {
                        let meshes: Result<Vec<_>> = (0..plan.n_windows())
                            .map(|k| greedy_sample_mesh(&rbs[k], z_t.min(plan.window_steps(k)), z_s, &plan, k))
                            .collect();
                        let meshes = match meshes {
                            Ok(m) => m,
                            Err(_) => continue,
                        };
                        let weights: Result<Vec<_>> = meshes
                            .iter()
                            .zip(rbs.iter())
                            .map(|(mesh, rb)| gnat_weights(mesh, rb))
                            .collect();
                        let weights = match weights {
                            Ok(w) => w,
                            Err(_) => continue,
                        };
                        out.push(PreparedConfig {
                            plan: plan.clone(),
                            artifacts: artifacts.clone(),
                            e_s,
                            e_t,
                            gnat: Some(PreparedGnat {
                                weights,
                                n_st_r_total,
                                e_rs,
                                e_rt,
                                z_t,
                                z_s,
                            }),
                        });
                    }
                }
            }
        }
        Ok(out)
    });

    let mut configs = Vec::new();
    for c in prepared {
        configs.extend(c?);
    }

    // Accuracy solves (parallelizable), then serialized timing.
    let test = test_params[0];
    let initial = vec![1.0; grid.n_cells];
    let model = BurgersModel::new(grid.clone(), test);
    let mut rows = Vec::with_capacity(configs.len());
    for pc in &configs {
        let guesses = GuessSource::Regression(&pc.artifacts.guess_model, test);
        let solve = |timing: bool| -> Result<RomSolution> {
            let mut c = gn_cfg.clone();
            c.collect_residual_snapshots = false;
            let _ = timing;
            match &pc.gnat {
                None => solve_wst_lspg(&model, &pc.artifacts.bases, &pc.plan, &initial, guesses, &c, None),
                Some(g) => solve_wst_gnat(
                    &model,
                    &pc.artifacts.bases,
                    &g.weights,
                    &pc.plan,
                    &initial,
                    guesses,
                    &c,
                ),
            }
        };
        let result = solve(false);
        let (mse_v, imse_v, res_v, converged) = match &result {
            Ok(sol) => (
                mse(&sol.trajectory, &fom_test).unwrap_or(f64::NAN),
                imse(&sol.trajectory, &fom_test, dt).unwrap_or(f64::NAN),
                residual_l2(&sol.trajectory, &model, &pc.plan).unwrap_or(f64::NAN),
                sol.all_converged(),
            ),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN, false),
        };
        // Timing lane: serialized repetitions.
        let rel_time = if converged {
            let times: Vec<f64> = (0..reps)
                .map(|_| {
                    let t0 = Instant::now();
                    let _ = solve(true);
                    t0.elapsed().as_secs_f64()
                })
                .collect();
            median(times) / wall_fom
        } else {
            f64::NAN
        };
        rows.push(SweepRow {
            method: method_label(&pc.plan, pc.gnat.is_some()),
            l_w: pc.plan.window_length,
            l_s: pc.plan.sub_length,
            n_st_total: pc.artifacts.n_st_total,
            n_st_r_total: pc.gnat.as_ref().map(|g| g.n_st_r_total),
            e_s: pc.e_s,
            e_t: pc.e_t,
            e_rs: pc.gnat.as_ref().map(|g| g.e_rs),
            e_rt: pc.gnat.as_ref().map(|g| g.e_rt),
            z_t: pc.gnat.as_ref().map(|g| g.z_t),
            z_s: pc.gnat.as_ref().map(|g| g.z_s),
            mse: mse_v,
            imse: imse_v,
            residual_l2: res_v,
            relative_wall_time: rel_time,
            converged,
        });
    }
    Ok(rows)
}

/// Non-dominated subset under (error, relative wall time) minimization;
/// ties are kept.
pub fn pareto_front<'a>(
    rows: &'a [SweepRow],
    error_of: impl Fn(&SweepRow) -> f64,
) -> Vec<&'a SweepRow> {
    rows.iter()
        .filter(|r| {
            let (re, rt) = (error_of(r), r.relative_wall_time);
            if !re.is_finite() || !rt.is_finite() {
                return false;
            }
            !rows.iter().any(|o| {
                let (oe, ot) = (error_of(o), o.relative_wall_time);
                oe.is_finite()
                    && ot.is_finite()
                    && oe <= re
                    && ot <= rt
                    && (oe < re || ot < rt)
            })
        })
        .collect()
}

/// Builds the full error report for one solve, timing both sides.
pub fn error_report<M: Model>(
    sol: &RomSolution,
    fom: &Trajectory,
    model: &M,
    plan: &WindowPlan,
    wall_time_rom: f64,
    wall_time_fom: f64,
) -> Result<ErrorReport> {
    Ok(ErrorReport {
        mse: mse(&sol.trajectory, fom)?,
        imse: imse(&sol.trajectory, fom, plan.dt)?,
        residual_l2: residual_l2(&sol.trajectory, model, plan)?,
        wall_time_rom,
        wall_time_fom,
        relative_wall_time: wall_time_rom / wall_time_fom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::fom_march;
    use crate::model::LinearModel;
    use crate::windows::LmmScheme;

    fn small_fom() -> (SpatialGrid, Parameters, Trajectory) {
        let grid = SpatialGrid::new(24, 0.0, 100.0);
        let p = Parameters::new(3.2, 0.017);
        let traj = fom_march(p, &grid, 0.1, 16, LmmScheme::Bdf1).unwrap();
        (grid, p, traj)
    }

    #[test]
    fn mse_basics() {
        let (_, _, traj) = small_fom();
        assert_eq!(mse(&traj, &traj).unwrap(), 0.0);
        let mut double = traj.clone();
        double.states.scale(2.0);
        let v = mse(&double, &traj).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Single-entry perturbation.
        let mut one = traj.clone();
        let delta = 0.37;
        one.states.set(3, 5, one.states.get(3, 5) + delta);
        let den: f64 = traj.states.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = delta / den;
        assert!((mse(&one, &traj).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn imse_cancels_antisymmetric_perturbation() {
        let (_, _, traj) = small_fom();
        assert_eq!(imse(&traj, &traj, 0.1).unwrap(), 0.0);
        // Perturbation that integrates to zero per DOF.
        let mut rom = traj.clone();
        for a in 0..rom.n_space {
            rom.states.set(a, 2, rom.states.get(a, 2) + 0.1);
            rom.states.set(a, 9, rom.states.get(a, 9) - 0.1);
        }
        assert!(imse(&rom, &traj, 0.1).unwrap() < 1e-14);
        assert!(mse(&rom, &traj).unwrap() > 0.0);
    }

    #[test]
    fn imse_constant_ratio() {
        // u = c vs 2c constant in time: IMSE = 1.
        let n_space = 4;
        let n_time = 5;
        let mk = |c: f64| {
            let mut states = DenseMatrix::zeros(n_space, n_time);
            for n in 0..n_time {
                states.set_col(n, &vec![c; n_space]);
            }
            Trajectory {
                n_space,
                n_time,
                dt: 0.1,
                initial: vec![c; n_space],
                states,
            }
        };
        let v = imse(&mk(2.0), &mk(1.0), 0.1).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn residual_l2_fom_floor_and_partition_invariance() {
        let (grid, p, traj) = small_fom();
        let model = BurgersModel::new(grid, p);
        let mut values = Vec::new();
        for spw in [1usize, 4, 16] {
            let plan = WindowPlan::uniform(16, 0.1, spw, spw, LmmScheme::Bdf1).unwrap();
            values.push(residual_l2(&traj, &model, &plan).unwrap());
        }
        for v in &values {
            assert!(*v <= 1e-8, "FOM residual floor violated: {v}");
        }
        for w in values.windows(2) {
            assert!((w[0] - w[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn residual_l2_single_violation() {
        // One step violated by a residual of norm 3 (zero model: residual
        // is the state difference).
        let model = crate::model::ZeroModel(1);
        let mut states = DenseMatrix::zeros(1, 2);
        states.set_col(0, &[1.0]);
        states.set_col(1, &[4.0]); // jump of 3
        let traj = Trajectory {
            n_space: 1,
            n_time: 2,
            dt: 1.0,
            initial: vec![1.0],
            states,
        };
        let plan = WindowPlan::uniform(2, 1.0, 1, 1, LmmScheme::Bdf1).unwrap();
        let v = residual_l2(&traj, &model, &plan).unwrap();
        assert!((v - 3.0).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_linear_model_bounded_by_sigma_max() {
        let mmat = DenseMatrix::from_row_major(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        let model = LinearModel::new(mmat.clone(), vec![0.0, 0.0]);
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let est = estimate_lipschitz(&samples, &model);
        let smax = thin_svd(&mmat).unwrap().singular_values[0];
        assert!(est <= smax + 1e-12, "estimate {est} above sigma_max {smax}");
        assert!(est > 0.5 * smax, "estimate {est} far below sigma_max {smax}");
    }

    #[test]
    fn lipschitz_constant_velocity_zero() {
        let model = crate::model::ZeroModel(3);
        let samples: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0, 1.0]).collect();
        assert_eq!(estimate_lipschitz(&samples, &model), 0.0);
    }

    #[test]
    fn aposteriori_zero_error_for_fom_itself() {
        let (grid, p, traj) = small_fom();
        let model = BurgersModel::new(grid, p);
        let plan = WindowPlan::uniform(16, 0.1, 4, 4, LmmScheme::Bdf1).unwrap();
        // A "ROM" that is exactly the FOM.
        let sol = RomSolution {
            reduced: vec![],
            trajectory: traj.clone(),
            reports: vec![],
        };
        let kappa = 0.5;
        let report = aposteriori_bound(&sol, &traj, &model, &plan, kappa).unwrap();
        for w in &report.windows {
            assert!(w.local_lhs < 1e-12);
            if w.a2_satisfied {
                assert!(w.local_rhs >= w.local_lhs);
            }
        }
        assert_eq!(report.violations(), 0);
    }

    #[test]
    fn a2_violation_reported_not_error() {
        let (grid, p, traj) = small_fom();
        let model = BurgersModel::new(grid, p);
        let plan = WindowPlan::uniform(16, 0.1, 16, 16, LmmScheme::Bdf1).unwrap();
        let sol = RomSolution {
            reduced: vec![],
            trajectory: traj.clone(),
            reports: vec![],
        };
        // Huge kappa forces C1 <= 0.
        let report = aposteriori_bound(&sol, &traj, &model, &plan, 1e6).unwrap();
        assert!(!report.windows[0].a2_satisfied);
        assert!(report.windows[0].local_rhs.is_infinite());
        assert_eq!(report.violations(), 0);
    }

    #[test]
    fn pareto_front_cases() {
        let mk = |e: f64, t: f64| SweepRow {
            method: "WST-LSPG".into(),
            l_w: 1.0,
            l_s: 1.0,
            n_st_total: 1,
            n_st_r_total: None,
            e_s: 0.99,
            e_t: 0.99,
            e_rs: None,
            e_rt: None,
            z_t: None,
            z_s: None,
            mse: e,
            imse: e,
            residual_l2: e,
            relative_wall_time: t,
            converged: true,
        };
        let single = vec![mk(1.0, 1.0)];
        assert_eq!(pareto_front(&single, |r| r.mse).len(), 1);
        let dominated = vec![mk(1.0, 1.0), mk(2.0, 2.0)];
        let front = pareto_front(&dominated, |r| r.mse);
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].mse, 1.0);
        let mutual = vec![mk(1.0, 2.0), mk(2.0, 1.0)];
        assert_eq!(pareto_front(&mutual, |r| r.mse).len(), 2);
    }
}
