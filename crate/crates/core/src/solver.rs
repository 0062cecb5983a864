//! Online solve: per-window Gauss-Newton residual minimization in the
//! (optionally weighted) l2 norm, the sequential window loop with
//! reference-state handoff, and state reconstruction.

use crate::burgers::{Parameters, Trajectory};
use crate::densekit::{dot, least_squares, norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::hyper::GnatWeights;
use crate::model::Model;
use crate::subspaces::{InitialGuessModel, WindowBasis};
use crate::windows::{assemble_window_jacobian, assemble_window_residual, WindowPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearch {
    /// Unit step, falling back to backtracking only when the step would
    /// increase the residual norm.
    UnitStep,
    /// Armijo backtracking on every step.
    Backtracking,
}

#[derive(Clone, Debug)]
pub struct GaussNewtonConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub line_search: LineSearch,
    pub backtrack_shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Abort the run when a window fails to converge (downstream windows
    /// would inherit a bad reference state).
    pub abort_on_divergence: bool,
    /// Record the space-time residual at every Gauss-Newton iteration.
    pub collect_residual_snapshots: bool,
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50,
            line_search: LineSearch::UnitStep,
            backtrack_shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 20,
            abort_on_divergence: true,
            collect_residual_snapshots: false,
        }
    }
}

/// Convergence trace of one window solve.
#[derive(Clone, Debug)]
pub struct WindowSolveReport {
    pub iterations: usize,
    pub gradient_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// N_s rows; one column per (iteration, local step), iteration-major.
    /// Populated only when snapshot collection is on.
    pub residual_snapshots: DenseMatrix,
}

/// Output of one online solve: reduced coordinates per window, the
/// reconstructed trajectory and per-window convergence reports.
#[derive(Clone, Debug)]
pub struct RomSolution {
    pub reduced: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
    pub reports: Vec<WindowSolveReport>,
}

impl RomSolution {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }
}

/// Initial guess source for the window solves.
#[derive(Clone, Copy)]
pub enum GuessSource<'a> {
    /// y = 0: the reference trajectory (previous end state held constant).
    Zero,
    Regression(&'a InitialGuessModel, Parameters),
}

impl GuessSource<'_> {
    fn guess(&self, k: usize, n_cols: usize) -> Vec<f64> {
        match self {
            GuessSource::Zero => vec![0.0; n_cols],
            GuessSource::Regression(model, p) => {
                let g = model.predict(k, *p);
                debug_assert_eq!(g.len(), n_cols);
                g
            }
        }
    }
}

/// Replicates the incoming state across every step of a window.
pub fn window_reference_state(previous_end: &[f64], n_steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(previous_end.len() * n_steps);
    for _ in 0..n_steps {
        out.extend_from_slice(previous_end);
    }
    out
}

/// reference + basis * y, unvectorized to an N_s x N_t^k state block.
pub fn reconstruct_state(basis: &WindowBasis, incoming: &[f64], y: &[f64]) -> DenseMatrix {
    let n_space = basis.n_space();
    let steps = basis.n_steps();
    let increments = basis.apply(y);
    let mut states = DenseMatrix::zeros(n_space, steps);
    for s in 0..steps {
        let col: Vec<f64> = incoming
            .iter()
            .zip(&increments[s * n_space..(s + 1) * n_space])
            .map(|(r, d)| r + d)
            .collect();
        states.set_col(s, &col);
    }
    states
}

/// Evaluates the (optionally weighted) residual and Jacobian at `y`.
/// The weighted path touches only sampled space-time entries.
fn residual_and_jacobian<M: Model>(
    model: &M,
    basis: &WindowBasis,
    incoming: &[f64],
    plan: &WindowPlan,
    k: usize,
    y: &[f64],
    weights: Option<&GnatWeights>,
) -> Result<(Vec<f64>, DenseMatrix, Option<Vec<f64>>)> {
    match weights {
        None => {
            let states = reconstruct_state(basis, incoming, y);
            let r = assemble_window_residual(&states, incoming, model, plan, k)?;
            let j = assemble_window_jacobian(&states, model, plan, k, basis)?;
            Ok((r, j, None))
        }
        Some(w) => {
            let (r_s, j_s) = w.sampled_residual_jacobian(model, basis, incoming, plan, k, y)?;
            let wr = w.apply_to_sampled(&r_s);
            let wj = w.apply_to_sampled_matrix(&j_s);
            Ok((wr, wj, Some(r_s)))
        }
    }
}

/// Gauss-Newton minimization of || W r(y) ||_2 over one window.
pub fn gauss_newton_window<M: Model>(
    model: &M,
    basis: &WindowBasis,
    incoming: &[f64],
    plan: &WindowPlan,
    k: usize,
    guess: &[f64],
    weights: Option<&GnatWeights>,
    cfg: &GaussNewtonConfig,
) -> Result<(Vec<f64>, WindowSolveReport)> {
    let n_cols = basis.n_columns();
    assert_eq!(guess.len(), n_cols, "guess length");
    let n_space = basis.n_space();
    let steps = basis.n_steps();

    let mut y = guess.to_vec();
    let mut gradient_norms = Vec::new();
    let mut residual_norms = Vec::new();
    let mut step_norms = Vec::new();
    let mut lambdas = Vec::new();
    let mut snapshots: Vec<f64> = Vec::new();

    let mut converged = false;
    let mut grad0 = 0.0;
    let mut last_step_norm = 0.0;
    let mut final_residual = f64::NAN;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let (r, j, raw) = residual_and_jacobian(model, basis, incoming, plan, k, &y, weights)?;
        iterations += 1;
        if cfg.collect_residual_snapshots {
            match (&raw, weights) {
                (Some(full), Some(_)) => snapshots.extend_from_slice(full),
                _ => snapshots.extend_from_slice(&r),
            }
        }
        let r_norm = norm2(&r);
        let grad = j.transpose_matvec(&r);
        let grad_norm = norm2(&grad);
        gradient_norms.push(grad_norm);
        residual_norms.push(r_norm);
        final_residual = r_norm;
        if iterations == 1 {
            grad0 = grad_norm;
        }
        // Dual criterion: relative gradient drop, or absolute gradient with
        // a stalled step.
        let relative_ok = grad0 > 0.0 && grad_norm / grad0 < cfg.tol;
        let absolute_ok = grad_norm < cfg.tol && last_step_norm < cfg.tol;
        if grad_norm == 0.0 || relative_ok || absolute_ok {
            converged = true;
            break;
        }
        if j.rows() < j.cols() {
            return Err(Error::RankDeficient { window: k });
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let sol = least_squares(&j, &neg_r)?;
        if sol.rank_deficient {
            return Err(Error::RankDeficient { window: k });
        }
        let p = sol.x;
        let p_norm = norm2(&p);

        // Line search.
        let eval_norm = |y_trial: &[f64]| -> Result<f64> {
            let (r_t, _, _) = residual_and_jacobian_no_j(
                model, basis, incoming, plan, k, y_trial, weights,
            )?;
            Ok(norm2(&r_t))
        };
        let mut lambda = 1.0;
        let accept = |new_norm: f64, lambda: f64| -> bool {
            match cfg.line_search {
                LineSearch::UnitStep => new_norm <= r_norm,
                LineSearch::Backtracking => {
                    // Armijo on the squared norm: predicted decrease from the
                    // GN model is along -grad direction.
                    let directional = dot(&grad, &p);
                    new_norm * new_norm
                        <= r_norm * r_norm + cfg.sufficient_decrease * lambda * 2.0 * directional
                }
            }
        };
        let mut trial: Vec<f64> = y.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
        let mut trial_norm = eval_norm(&trial)?;
        let mut tries = 0;
        while !accept(trial_norm, lambda) && tries < cfg.max_backtracks {
            lambda *= cfg.backtrack_shrink;
            trial = y
                .iter()
                .zip(p.iter())
                .map(|(a, b)| a + lambda * b)
                .collect();
            trial_norm = eval_norm(&trial)?;
            tries += 1;
        }
        y = trial;
        last_step_norm = lambda * p_norm;
        step_norms.push(last_step_norm);
        lambdas.push(lambda);
    }

    let n_snapshot_iters = if cfg.collect_residual_snapshots {
        iterations
    } else {
        0
    };
    let mut snap = DenseMatrix::zeros(n_space, n_snapshot_iters * steps);
    if cfg.collect_residual_snapshots {
        // Each stored residual is time-major; split into step columns.
        for (it, chunk) in snapshots.chunks(n_space * steps).enumerate() {
            for s in 0..steps {
                for a in 0..n_space {
                    snap.set(a, it * steps + s, chunk[s * n_space + a]);
                }
            }
        }
    }

    let report = WindowSolveReport {
        iterations,
        gradient_norms,
        residual_norms,
        step_norms,
        lambdas,
        final_residual_norm: final_residual,
        converged,
        residual_snapshots: snap,
    };
    Ok((y, report))
}

/// Residual-only evaluation used by the line search.
fn residual_and_jacobian_no_j<M: Model>(
    model: &M,
    basis: &WindowBasis,
    incoming: &[f64],
    plan: &WindowPlan,
    k: usize,
    y: &[f64],
    weights: Option<&GnatWeights>,
) -> Result<(Vec<f64>, (), ())> {
    match weights {
        None => {
            let states = reconstruct_state(basis, incoming, y);
            let r = assemble_window_residual(&states, incoming, model, plan, k)?;
            Ok((r, (), ()))
        }
        Some(w) => {
            let r_s = w.sampled_residual(model, basis, incoming, plan, k, y)?;
            Ok((w.apply_to_sampled(&r_s), (), ()))
        }
    }
}

/// Sequential window loop: each window's final reconstructed state feeds
/// the next window's reference and incoming state.
pub fn solve_wst_lspg<M: Model>(
    model: &M,
    bases: &[WindowBasis],
    plan: &WindowPlan,
    initial: &[f64],
    guesses: GuessSource,
    cfg: &GaussNewtonConfig,
    weights: Option<&[GnatWeights]>,
) -> Result<RomSolution> {
    let n_win = plan.n_windows();
    assert_eq!(bases.len(), n_win, "one basis per window");
    if let Some(w) = weights {
        assert_eq!(w.len(), n_win, "one weighting operator per window");
    }
    let n_space = model.dim();
    let mut states_all = DenseMatrix::zeros(n_space, plan.n_time_total);
    let mut incoming = initial.to_vec();
    let mut reduced = Vec::with_capacity(n_win);
    let mut reports = Vec::with_capacity(n_win);
    for k in 0..n_win {
        let basis = &bases[k];
        let guess = guesses.guess(k, basis.n_columns());
        let w_k = weights.map(|w| &w[k]);
        let (y, report) =
            gauss_newton_window(model, basis, &incoming, plan, k, &guess, w_k, cfg).map_err(
                |e| Error::Window {
                    window: k,
                    source: Box::new(e),
                },
            )?;
        if !report.converged && cfg.abort_on_divergence {
            return Err(Error::SolveDiverged {
                window: k,
                iterations: report.iterations,
                residual_norm: report.final_residual_norm,
            });
        }
        let states = reconstruct_state(basis, &incoming, &y);
        let phi = plan.phi(k)?;
        for s in 0..plan.window_steps(k) {
            states_all.set_col(phi - 1 + s, &states.col(s));
        }
        incoming = states.col(plan.window_steps(k) - 1);
        reduced.push(y);
        reports.push(report);
    }
    Ok(RomSolution {
        reduced,
        trajectory: Trajectory {
            n_space,
            n_time: plan.n_time_total,
            dt: plan.dt,
            initial: initial.to_vec(),
            states: states_all,
        },
        reports,
    })
}

/// Dedicated one-window space-time solve: the whole time domain as a
/// single window. Kept as an independent entry point so the windowed loop
/// can be checked against it in the limiting case.
pub fn solve_st_lspg<M: Model>(
    model: &M,
    basis: &WindowBasis,
    plan: &WindowPlan,
    initial: &[f64],
    guess: &[f64],
    cfg: &GaussNewtonConfig,
    weights: Option<&GnatWeights>,
) -> Result<RomSolution> {
    assert_eq!(plan.n_windows(), 1, "st-lspg runs on a one-window plan");
    let (y, report) = gauss_newton_window(model, basis, initial, plan, 0, guess, weights, cfg)?;
    if !report.converged && cfg.abort_on_divergence {
        return Err(Error::SolveDiverged {
            window: 0,
            iterations: report.iterations,
            residual_norm: report.final_residual_norm,
        });
    }
    let states = reconstruct_state(basis, initial, &y);
    Ok(RomSolution {
        reduced: vec![y],
        trajectory: Trajectory {
            n_space: model.dim(),
            n_time: plan.n_time_total,
            dt: plan.dt,
            initial: initial.to_vec(),
            states,
        },
        reports: vec![report],
    })
}
