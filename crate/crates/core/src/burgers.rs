//! Parameterized 1D inviscid Burgers full-order model: Godunov
//! finite-volume fluxes, exponential source term, implicit time marching
//! with Newton, and parameter-grid sampling for training sweeps.

use crate::densekit::{norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::model::{Model, VelocityJacobian};
use crate::windows::LmmScheme;

/// Source amplitude of the benchmark: 0.02 exp(mu2 x).
const SOURCE_AMPLITUDE: f64 = 0.02;

/// The (mu1, mu2) pair parameterizing the model: inflow amplitude and
/// source decay rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parameters {
    pub mu1: f64,
    pub mu2: f64,
}

impl Parameters {
    pub fn new(mu1: f64, mu2: f64) -> Self {
        Self { mu1, mu2 }
    }

    /// Membership in the training domain [2, 4.1] x [0.013, 0.02].
    pub fn in_training_domain(&self) -> bool {
        (2.0..=4.1).contains(&self.mu1) && (0.013..=0.02).contains(&self.mu2)
    }
}

/// Uniform finite-volume grid on [x_min, x_max].
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    pub n_cells: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub cell_centers: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n_cells: usize, x_min: f64, x_max: f64) -> Self {
        assert!(n_cells > 0 && x_max > x_min);
        let dx = (x_max - x_min) / n_cells as f64;
        let cell_centers = (0..n_cells)
            .map(|i| x_min + (i as f64 + 0.5) * dx)
            .collect();
        Self {
            n_cells,
            x_min,
            x_max,
            dx,
            cell_centers,
        }
    }

    /// The benchmark configuration: 200 cells on [0, 100].
    pub fn benchmark() -> Self {
        Self::new(200, 0.0, 100.0)
    }
}

/// Dense space-time state history: the initial condition plus one column
/// per time step (column n holds the state at t^{n+1}).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n_space: usize,
    pub n_time: usize,
    pub dt: f64,
    pub initial: Vec<f64>,
    /// n_space x n_time; column n is the state after step n+1.
    pub states: DenseMatrix,
}

impl Trajectory {
    /// State at global step index `n` (0 = initial condition).
    pub fn state(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            self.initial.clone()
        } else {
            self.states.col(n - 1)
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_time as f64
    }
}

/// Exact Riemann flux for f(u) = u^2/2:
/// max(f(max(u_left, 0)), f(min(u_right, 0))).
pub fn godunov_flux(u_left: f64, u_right: f64) -> f64 {
    let fl = {
        let a = u_left.max(0.0);
        0.5 * a * a
    };
    let fr = {
        let b = u_right.min(0.0);
        0.5 * b * b
    };
    fl.max(fr)
}

/// Flux derivatives w.r.t. the left and right states; ties at the flux
/// maximum take the left-state branch.
fn godunov_flux_derivatives(u_left: f64, u_right: f64) -> (f64, f64) {
    let a = u_left.max(0.0);
    let b = u_right.min(0.0);
    let fl = 0.5 * a * a;
    let fr = 0.5 * b * b;
    if fl >= fr {
        (a, 0.0)
    } else {
        (0.0, b)
    }
}

/// The Burgers finite-volume model for one parameter instance.
#[derive(Clone, Debug)]
pub struct BurgersModel {
    pub grid: SpatialGrid,
    pub params: Parameters,
    source: Vec<f64>,
}

impl BurgersModel {
    pub fn new(grid: SpatialGrid, params: Parameters) -> Self {
        let source = grid
            .cell_centers
            .iter()
            .map(|&x| SOURCE_AMPLITUDE * (params.mu2 * x).exp())
            .collect();
        Self {
            grid,
            params,
            source,
        }
    }
}

impl Model for BurgersModel {
    fn dim(&self) -> usize {
        self.grid.n_cells
    }

    fn velocity(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.n_cells;
        debug_assert_eq!(u.len(), n);
        let dx = self.grid.dx;
        // Interface fluxes: ghost inflow state mu1 on the left, pure upwind
        // outflow on the right.
        let mut flux_left = godunov_flux(self.params.mu1, u[0]);
        for i in 0..n {
            let flux_right = if i + 1 < n {
                godunov_flux(u[i], u[i + 1])
            } else {
                0.5 * u[n - 1] * u[n - 1]
            };
            out[i] = -(flux_right - flux_left) / dx + self.source[i];
            flux_left = flux_right;
        }
    }

    fn jacobian(&self, u: &[f64]) -> VelocityJacobian {
        let n = self.grid.n_cells;
        let dx = self.grid.dx;
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n.saturating_sub(1)];

        // d out_i / d u_j = -(dF_{i+1/2} - dF_{i-1/2}) / dx per interface.
        let (_, mut dleft_db) = godunov_flux_derivatives(self.params.mu1, u[0]);
        for i in 0..n {
            let (dright_da, dright_db) = if i + 1 < n {
                godunov_flux_derivatives(u[i], u[i + 1])
            } else {
                (u[n - 1], 0.0)
            };
            diag[i] = -(dright_da - dleft_db) / dx;
            if i + 1 < n {
                sup[i] = -dright_db / dx;
            }
            if i > 0 {
                // F_{i-1/2} depends on u_{i-1} through its left slot.
                let (da, _) = if i < n {
                    godunov_flux_derivatives(u[i - 1], u[i])
                } else {
                    (0.0, 0.0)
                };
                sub[i - 1] = da / dx;
            }
            dleft_db = dright_db;
        }
        VelocityJacobian::Tridiagonal { sub, diag, sup }
    }
}

/// Public spec surface: velocity as a standalone call.
pub fn velocity(u: &[f64], grid: &SpatialGrid, p: Parameters) -> Vec<f64> {
    let model = BurgersModel::new(grid.clone(), p);
    model.velocity_vec(u)
}

/// Public spec surface: the velocity Jacobian as a dense matrix.
pub fn velocity_jacobian(u: &[f64], grid: &SpatialGrid, p: Parameters) -> DenseMatrix {
    let model = BurgersModel::new(grid.clone(), p);
    model.jacobian(u).to_dense()
}

const NEWTON_MAX_ITERS: usize = 30;
const NEWTON_REL_TOL: f64 = 1e-10;

/// Solves the tridiagonal system (Thomas algorithm). `sub`, `diag`, `sup`
/// are the bands of the Newton matrix; overwritten scratch copies are made
/// internally.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = if n > 1 { sup[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if m == 0.0 {
            return None;
        }
        if i < n - 1 {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let xi = x[i] - c[i] * x[i + 1];
        x[i] = xi;
    }
    Some(x)
}

/// One implicit step: solves r(u) = sum_j alpha_j u^{n-j}
/// - dt sum_j beta_j f(u^{n-j}) = 0 for the implicit state by Newton with
/// the analytic Jacobian.
pub fn implicit_step<M: Model>(
    model: &M,
    history: &[&[f64]],
    alpha: &[f64],
    beta: &[f64],
    dt: f64,
    step_index: usize,
) -> Result<Vec<f64>> {
    let n = model.dim();
    // Constant part of the residual from explicit history states.
    let mut constant = vec![0.0; n];
    for (j, h) in history.iter().enumerate() {
        let aj = alpha[j + 1];
        for (c, x) in constant.iter_mut().zip(h.iter()) {
            *c += aj * x;
        }
        let bj = beta[j + 1];
        if bj != 0.0 {
            let f = model.velocity_vec(h);
            for (c, x) in constant.iter_mut().zip(f.iter()) {
                *c -= dt * bj * x;
            }
        }
    }
    let alpha0 = alpha[0];
    let beta0 = beta[0];

    let mut u = history[0].to_vec();
    let mut f = vec![0.0; n];
    for _ in 0..NEWTON_MAX_ITERS {
        model.velocity(&u, &mut f);
        let mut res = constant.clone();
        for ((r, &ui), &fi) in res.iter_mut().zip(u.iter()).zip(f.iter()) {
            *r += alpha0 * ui - dt * beta0 * fi;
        }
        let res_norm = norm2(&res);
        let scale = norm2(&u).max(1.0);
        if res_norm <= NEWTON_REL_TOL * scale {
            return Ok(u);
        }
        // Newton matrix alpha0 I - dt beta0 df/du.
        let delta = match model.jacobian(&u) {
            VelocityJacobian::Tridiagonal { sub, diag, sup } => {
                let nsub: Vec<f64> = sub.iter().map(|v| -dt * beta0 * v).collect();
                let ndiag: Vec<f64> = diag.iter().map(|v| alpha0 - dt * beta0 * v).collect();
                let nsup: Vec<f64> = sup.iter().map(|v| -dt * beta0 * v).collect();
                solve_tridiagonal(&nsub, &ndiag, &nsup, &res)
            }
            VelocityJacobian::Dense(jf) => {
                let mut m = jf.clone();
                m.scale(-dt * beta0);
                for i in 0..n {
                    m.set(i, i, m.get(i, i) + alpha0);
                }
                crate::densekit::least_squares(&m, &res).ok().map(|s| s.x)
            }
        };
        let delta = delta.ok_or(Error::NewtonDiverged {
            step: step_index,
            residual_norm: res_norm,
            iterations: NEWTON_MAX_ITERS,
        })?;
        for (ui, di) in u.iter_mut().zip(delta.iter()) {
            *ui -= di;
        }
    }
    model.velocity(&u, &mut f);
    let mut res = constant;
    for ((r, &ui), &fi) in res.iter_mut().zip(u.iter()).zip(f.iter()) {
        *r += alpha0 * ui - dt * beta0 * fi;
    }
    Err(Error::NewtonDiverged {
        step: step_index,
        residual_norm: norm2(&res),
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Marches any velocity model from `initial` for `n_steps` of size `dt`.
/// The first step always uses the one-step scheme; the requested scheme
/// takes over once enough history exists.
pub fn march<M: Model>(
    model: &M,
    initial: &[f64],
    dt: f64,
    n_steps: usize,
    scheme: LmmScheme,
) -> Result<Trajectory> {
    let n = model.dim();
    assert_eq!(initial.len(), n);
    let mut states = DenseMatrix::zeros(n, n_steps);
    let mut history: Vec<Vec<f64>> = vec![initial.to_vec()];
    for step in 0..n_steps {
        let effective = if step + 1 < scheme.width() {
            LmmScheme::Bdf1
        } else {
            scheme
        };
        let refs: Vec<&[f64]> = (0..effective.width())
            .map(|j| history[history.len() - 1 - j].as_slice())
            .collect();
        let u = implicit_step(
            model,
            &refs,
            effective.alpha(),
            effective.beta(),
            dt,
            step + 1,
        )?;
        states.set_col(step, &u);
        history.push(u);
        if history.len() > scheme.width() + 1 {
            history.remove(0);
        }
    }
    Ok(Trajectory {
        n_space: n,
        n_time: n_steps,
        dt,
        initial: initial.to_vec(),
        states,
    })
}

/// Marches the Burgers benchmark from u(x, 0) = 1 for the given parameters.
pub fn fom_march(
    p: Parameters,
    grid: &SpatialGrid,
    dt: f64,
    n_steps: usize,
    scheme: LmmScheme,
) -> Result<Trajectory> {
    let model = BurgersModel::new(grid.clone(), p);
    let initial = vec![1.0; grid.n_cells];
    march(&model, &initial, dt, n_steps, scheme)
}

/// Cartesian product of inclusive uniform grids over each axis.
pub fn sample_parameter_grid(
    mu1_range: (f64, f64),
    n_mu1: usize,
    mu2_range: (f64, f64),
    n_mu2: usize,
) -> Result<Vec<Parameters>> {
    if n_mu1 == 0 || n_mu2 == 0 {
        return Err(Error::InvalidConfig(
            "parameter grid needs at least one point per axis".into(),
        ));
    }
    let linspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            vec![lo]
        } else {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let mu1s = linspace(mu1_range.0, mu1_range.1, n_mu1);
    let mu2s = linspace(mu2_range.0, mu2_range.1, n_mu2);
    let mut out = Vec::with_capacity(n_mu1 * n_mu2);
    for &m1 in &mu1s {
        for &m2 in &mu2s {
            out.push(Parameters::new(m1, m2));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearModel, ZeroModel};

    #[test]
    fn godunov_flux_cases() {
        assert_eq!(godunov_flux(1.0, 1.0), 0.5);
        assert_eq!(godunov_flux(2.0, 0.0), 2.0);
        assert_eq!(godunov_flux(-1.0, 1.0), 0.0);
    }

    #[test]
    fn velocity_uniform_state_cancels_fluxes() {
        let grid = SpatialGrid::benchmark();
        let p = Parameters::new(3.0, 0.02);
        let u = vec![p.mu1; grid.n_cells];
        let f = velocity(&u, &grid, p);
        for (i, &x) in grid.cell_centers.iter().enumerate() {
            let expected = 0.02 * (0.02 * x).exp();
            assert!(
                (f[i] - expected).abs() < 1e-13,
                "cell {i}: {} vs {}",
                f[i],
                expected
            );
        }
    }

    #[test]
    fn velocity_zero_state_is_pure_source() {
        // Zero state and zero inflow: every flux vanishes and only the
        // source term remains.
        let grid = SpatialGrid::new(50, 0.0, 100.0);
        let p = Parameters::new(0.0, 0.015);
        let u = vec![0.0; grid.n_cells];
        let f = velocity(&u, &grid, p);
        for (i, &x) in grid.cell_centers.iter().enumerate() {
            let expected = 0.02 * (p.mu2 * x).exp();
            assert!((f[i] - expected).abs() < 1e-14);
        }
    }

    /// Independent finite-volume oracle: evaluates every interface Riemann
    /// problem one by one without the rolling-flux shortcut.
    fn velocity_oracle(u: &[f64], grid: &SpatialGrid, p: Parameters) -> Vec<f64> {
        let n = u.len();
        let mut fluxes = vec![0.0; n + 1];
        fluxes[0] = godunov_flux(p.mu1, u[0]);
        for i in 1..n {
            fluxes[i] = godunov_flux(u[i - 1], u[i]);
        }
        fluxes[n] = 0.5 * u[n - 1] * u[n - 1];
        (0..n)
            .map(|i| {
                -(fluxes[i + 1] - fluxes[i]) / grid.dx
                    + 0.02 * (p.mu2 * grid.cell_centers[i]).exp()
            })
            .collect()
    }

    #[test]
    fn velocity_matches_interface_oracle() {
        let grid = SpatialGrid::new(40, 0.0, 100.0);
        let p = Parameters::new(3.3, 0.017);
        let u: Vec<f64> = (0..40)
            .map(|i| 1.0 + ((i * 7 + 3) % 11) as f64 * 0.3 - 1.0)
            .collect();
        let f = velocity(&u, &grid, p);
        let oracle = velocity_oracle(&u, &grid, p);
        for (a, b) in f.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_uniform_positive_state() {
        let grid = SpatialGrid::benchmark();
        let p = Parameters::new(2.0, 0.02);
        let u = vec![2.0; grid.n_cells];
        let j = velocity_jacobian(&u, &grid, p);
        // Upwind differentiation of F = u^2/2 at u = 2 with dx = 0.5.
        for i in 0..grid.n_cells {
            assert!((j.get(i, i) - (-4.0)).abs() < 1e-13);
            if i > 0 {
                assert!((j.get(i, i - 1) - 4.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jacobian_zero_state_is_zero() {
        let grid = SpatialGrid::new(10, 0.0, 5.0);
        let p = Parameters::new(0.0, 0.02);
        let u = vec![0.0; 10];
        let j = velocity_jacobian(&u, &grid, p);
        assert_eq!(j.max_abs(), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let grid = SpatialGrid::new(30, 0.0, 100.0);
        let p = Parameters::new(3.0, 0.018);
        // Deterministic positive pseudo-random states.
        let mut state = 0x12345678u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (1u64 << 31) as f64
        };
        for _ in 0..100 {
            let u: Vec<f64> = (0..30).map(|_| 0.5 + 3.0 * rand01()).collect();
            let j = velocity_jacobian(&u, &grid, p);
            let h = 1e-6;
            for col in 0..30 {
                let mut up = u.clone();
                let mut um = u.clone();
                up[col] += h;
                um[col] -= h;
                let fp = velocity(&up, &grid, p);
                let fm = velocity(&um, &grid, p);
                for row in 0..30 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let an = j.get(row, col);
                    let scale = an.abs().max(1.0);
                    assert!(
                        (fd - an).abs() <= 1e-5 * scale,
                        "({row},{col}): fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn march_zero_velocity_is_constant() {
        let model = ZeroModel(4);
        let init = vec![1.0, -2.0, 0.5, 3.0];
        let traj = march(&model, &init, 0.1, 10, LmmScheme::Bdf1).unwrap();
        for n in 0..10 {
            assert_eq!(traj.states.col(n), init);
        }
    }

    #[test]
    fn march_scalar_decay_matches_closed_form() {
        // du/dt = -u with backward Euler: u^n = (1/1.1)^n.
        let m = LinearModel::new(
            DenseMatrix::from_row_major(1, 1, vec![-1.0]).unwrap(),
            vec![0.0],
        );
        let traj = march(&m, &[1.0], 0.1, 20, LmmScheme::Bdf1).unwrap();
        for n in 1..=20 {
            let expected = (1.0f64 / 1.1).powi(n as i32);
            let got = traj.state(n)[0];
            assert!(
                (got - expected).abs() < 1e-12,
                "step {n}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn fom_march_benchmark_envelope() {
        let grid = SpatialGrid::benchmark();
        let p = Parameters::new(4.0714, 0.0185);
        let traj = fom_march(p, &grid, 0.1, 64, LmmScheme::Bdf1).unwrap();
        let mut front_position = Vec::new();
        for n in 1..=64 {
            let u = traj.state(n);
            for &v in &u {
                assert!((0.9..=7.0).contains(&v), "state out of envelope: {v}");
            }
            // The steepening front: rightmost cell with u > 2.
            let pos = u.iter().rposition(|&v| v > 2.0).unwrap_or(0);
            front_position.push(pos);
        }
        assert!(front_position.last().unwrap() > &front_position[4]);
    }

    #[test]
    fn discrete_conservation_per_step() {
        let grid = SpatialGrid::benchmark();
        let p = Parameters::new(3.5, 0.016);
        let dt = 0.1;
        let traj = fom_march(p, &grid, dt, 32, LmmScheme::Bdf1).unwrap();
        let dx = grid.dx;
        for n in 1..=32 {
            let u_new = traj.state(n);
            let u_old = traj.state(n - 1);
            let mass_change: f64 = u_new
                .iter()
                .zip(u_old.iter())
                .map(|(a, b)| (a - b) * dx)
                .sum();
            // Telescoping fluxes at the converged implicit state.
            let f_in = godunov_flux(p.mu1, u_new[0]);
            let f_out = 0.5 * u_new[grid.n_cells - 1] * u_new[grid.n_cells - 1];
            let source: f64 = grid
                .cell_centers
                .iter()
                .map(|&x| 0.02 * (p.mu2 * x).exp() * dx)
                .sum();
            let rhs = dt * (f_in - f_out + source);
            assert!(
                (mass_change - rhs).abs() < 1e-9,
                "step {n}: {mass_change} vs {rhs}"
            );
        }
    }

    #[test]
    fn parameter_grid_linspace() {
        let grid = sample_parameter_grid((2.0, 4.1), 20, (0.013, 0.02), 5).unwrap();
        assert_eq!(grid.len(), 100);
        assert!((grid[0].mu1 - 2.0).abs() < 1e-15);
        assert!((grid[99].mu1 - 4.1).abs() < 1e-15);
        assert!((grid[1].mu2 - 0.01475).abs() < 1e-15);
        let spacing = grid[5].mu1 - grid[0].mu1;
        assert!((spacing - 2.1 / 19.0).abs() < 1e-12);
        let mu2s: Vec<f64> = grid[..5].iter().map(|p| p.mu2).collect();
        for (a, b) in mu2s.iter().zip([0.013, 0.01475, 0.0165, 0.01825, 0.02]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_grid_single_point_and_error() {
        let single = sample_parameter_grid((2.0, 4.1), 1, (0.013, 0.02), 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0], Parameters::new(2.0, 0.013));
        assert!(sample_parameter_grid((2.0, 4.1), 0, (0.013, 0.02), 5).is_err());
    }
}
