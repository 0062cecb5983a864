//! Window and sub-window planning, linear-multistep coefficient tables,
//! and assembly of the windowed space-time residual, its Jacobian, and the
//! structural operators used by the bound evaluator.

use crate::densekit::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::subspaces::WindowBasis;

/// Linear multistep scheme. Coefficients satisfy sum_j alpha_j = 0 exactly
/// (stored as f64 from exact fractions).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmmScheme {
    Bdf1,
    Bdf2,
}

impl LmmScheme {
    /// Stencil width k: the number of history states consumed per step.
    pub fn width(&self) -> usize {
        match self {
            LmmScheme::Bdf1 => 1,
            LmmScheme::Bdf2 => 2,
        }
    }

    pub fn alpha(&self) -> &'static [f64] {
        match self {
            LmmScheme::Bdf1 => &[1.0, -1.0],
            LmmScheme::Bdf2 => &[1.5, -2.0, 0.5],
        }
    }

    pub fn beta(&self) -> &'static [f64] {
        match self {
            LmmScheme::Bdf1 => &[1.0, 0.0],
            LmmScheme::Bdf2 => &[1.0, 0.0, 0.0],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LmmScheme::Bdf1 => "BDF1",
            LmmScheme::Bdf2 => "BDF2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BDF1" => Ok(LmmScheme::Bdf1),
            "BDF2" => Ok(LmmScheme::Bdf2),
            other => Err(Error::InvalidConfig(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Per-window step counts plus the sub-window split inside each window.
#[derive(Clone, Debug)]
pub struct WindowSpec {
    pub n_steps: usize,
    pub sub_steps: Vec<usize>,
}

/// Partition of the discrete time domain into windows and sub-windows.
#[derive(Clone, Debug)]
pub struct WindowPlan {
    pub n_time_total: usize,
    pub dt: f64,
    pub scheme: LmmScheme,
    pub windows: Vec<WindowSpec>,
    pub window_length: f64,
    pub sub_length: f64,
}

impl WindowPlan {
    /// Uniform plan from step counts: every window has
    /// `steps_per_window` steps split into sub-windows of
    /// `steps_per_sub` steps.
    pub fn uniform(
        n_time_total: usize,
        dt: f64,
        steps_per_window: usize,
        steps_per_sub: usize,
        scheme: LmmScheme,
    ) -> Result<Self> {
        if steps_per_window == 0 || steps_per_sub == 0 || n_time_total == 0 {
            return Err(Error::InvalidPlan("zero-length window or domain".into()));
        }
        if n_time_total % steps_per_window != 0 {
            return Err(Error::InvalidPlan(format!(
                "window length {steps_per_window} does not divide {n_time_total} steps"
            )));
        }
        if steps_per_window % steps_per_sub != 0 {
            return Err(Error::InvalidPlan(format!(
                "sub-window length {steps_per_sub} does not divide window length {steps_per_window}"
            )));
        }
        let n_win = n_time_total / steps_per_window;
        let n_sub = steps_per_window / steps_per_sub;
        let windows = (0..n_win)
            .map(|_| WindowSpec {
                n_steps: steps_per_window,
                sub_steps: vec![steps_per_sub; n_sub],
            })
            .collect();
        Ok(Self {
            n_time_total,
            dt,
            scheme,
            windows,
            window_length: steps_per_window as f64 * dt,
            sub_length: steps_per_sub as f64 * dt,
        })
    }

    /// Uniform plan from physical lengths l_w and l_s; both must divide the
    /// total time within rounding.
    pub fn from_lengths(
        n_time_total: usize,
        dt: f64,
        l_w: f64,
        l_s: f64,
        scheme: LmmScheme,
    ) -> Result<Self> {
        let to_steps = |l: f64, name: &str| -> Result<usize> {
            let steps = l / dt;
            let rounded = steps.round();
            if (steps - rounded).abs() > 1e-9 * steps.abs().max(1.0) || rounded < 1.0 {
                return Err(Error::InvalidPlan(format!(
                    "{name} = {l} is not a positive multiple of dt = {dt}"
                )));
            }
            Ok(rounded as usize)
        };
        let spw = to_steps(l_w, "window length")?;
        let sps = to_steps(l_s, "sub-window length")?;
        Self::uniform(n_time_total, dt, spw, sps, scheme)
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn n_sub(&self, k: usize) -> usize {
        self.windows[k].sub_steps.len()
    }

    pub fn window_steps(&self, k: usize) -> usize {
        self.windows[k].n_steps
    }

    pub fn sub_steps(&self, k: usize, m: usize) -> usize {
        self.windows[k].sub_steps[m]
    }

    /// Maps a window index to the global time-step index of its first step.
    pub fn phi(&self, k: usize) -> Result<usize> {
        if k >= self.windows.len() {
            return Err(Error::InvalidPlan(format!(
                "window index {k} out of range ({} windows)",
                self.windows.len()
            )));
        }
        Ok(1 + self.windows[..k].iter().map(|w| w.n_steps).sum::<usize>())
    }

    /// Maps (window, sub-window) to the global time-step index of the
    /// sub-window's first step.
    pub fn zeta(&self, k: usize, m: usize) -> Result<usize> {
        let base = self.phi(k)?;
        if m >= self.windows[k].sub_steps.len() {
            return Err(Error::InvalidPlan(format!(
                "sub-window index {m} out of range in window {k}"
            )));
        }
        Ok(base + self.windows[k].sub_steps[..m].iter().sum::<usize>())
    }

    /// Scheme actually used at local step `s` (0-based) of any window: the
    /// first step in a window restarts with a one-step stencil.
    pub fn step_scheme(&self, local_step: usize) -> LmmScheme {
        if local_step == 0 {
            LmmScheme::Bdf1
        } else if local_step + 1 < self.scheme.width() {
            LmmScheme::Bdf1
        } else {
            self.scheme
        }
    }
}

/// Structural matrices of the windowed residual:
/// r(v; u0) = A v - dt B f(v) + A_IC u0 - dt B_IC f(u0).
#[derive(Clone, Debug)]
pub struct WindowOperators {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub a_ic: DenseMatrix,
    pub b_ic: DenseMatrix,
}

/// Scalar (per-step) coefficient factors of the window operators. The full
/// operators are Kronecker products of these with the spatial identity, so
/// their singular values coincide; the bound evaluator works at this scale.
#[derive(Clone, Debug)]
pub struct ScalarWindowOperators {
    /// n_steps x n_steps coefficient matrix multiplying window states.
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    /// n_steps x 1 columns multiplying the incoming state.
    pub a_ic: DenseMatrix,
    pub b_ic: DenseMatrix,
}

/// Per-step coefficient tables of the window residual at the scalar level.
pub fn scalar_window_operators(plan: &WindowPlan, k: usize) -> Result<ScalarWindowOperators> {
    let steps = plan.window_steps(k);
    let _ = plan.phi(k)?;
    let mut a = DenseMatrix::zeros(steps, steps);
    let mut b = DenseMatrix::zeros(steps, steps);
    let mut a_ic = DenseMatrix::zeros(steps, 1);
    let mut b_ic = DenseMatrix::zeros(steps, 1);
    for s in 0..steps {
        let scheme = plan.step_scheme(s);
        let alpha = scheme.alpha();
        let beta = scheme.beta();
        for j in 0..=scheme.width() {
            let src = s as isize - j as isize;
            if src >= 0 {
                let c = src as usize;
                a.set(s, c, a.get(s, c) + alpha[j]);
                b.set(s, c, b.get(s, c) + beta[j]);
            } else if src == -1 {
                a_ic.set(s, 0, a_ic.get(s, 0) + alpha[j]);
                b_ic.set(s, 0, b_ic.get(s, 0) + beta[j]);
            } else {
                return Err(Error::InvalidPlan(format!(
                    "step {s} of window {k} reaches {src} states before the window"
                )));
            }
        }
    }
    Ok(ScalarWindowOperators { a, b, a_ic, b_ic })
}

/// Expands the scalar coefficients into the full space-time operators via
/// Kronecker products with the spatial identity.
pub fn build_window_operators(plan: &WindowPlan, k: usize, n_space: usize) -> Result<WindowOperators> {
    let s = scalar_window_operators(plan, k)?;
    let kron_eye = |t: &DenseMatrix| -> DenseMatrix {
        let mut out = DenseMatrix::zeros(t.rows() * n_space, t.cols() * n_space);
        for r in 0..t.rows() {
            for c in 0..t.cols() {
                let v = t.get(r, c);
                if v != 0.0 {
                    for i in 0..n_space {
                        out.set(r * n_space + i, c * n_space + i, v);
                    }
                }
            }
        }
        out
    };
    Ok(WindowOperators {
        a: kron_eye(&s.a),
        b: kron_eye(&s.b),
        a_ic: kron_eye(&s.a_ic),
        b_ic: kron_eye(&s.b_ic),
    })
}

/// Stacks the per-step residuals r^n = sum_j alpha_j u^{n-j}
/// - dt sum_j beta_j f(u^{n-j}) over window `k`. `states` holds the window
/// states column-wise; `incoming` is the state immediately before the
/// window.
pub fn assemble_window_residual<M: Model>(
    states: &DenseMatrix,
    incoming: &[f64],
    model: &M,
    plan: &WindowPlan,
    k: usize,
) -> Result<Vec<f64>> {
    let n_space = model.dim();
    let steps = plan.window_steps(k);
    if states.rows() != n_space || states.cols() != steps || incoming.len() != n_space {
        return Err(Error::DimensionMismatch(format!(
            "window {k}: states {}x{}, expected {}x{}",
            states.rows(),
            states.cols(),
            n_space,
            steps
        )));
    }
    let dt = plan.dt;
    // Velocity columns are reused across stencils; evaluate each once.
    let mut f_cols: Vec<Option<Vec<f64>>> = vec![None; steps];
    let mut f_incoming: Option<Vec<f64>> = None;

    let mut out = vec![0.0; n_space * steps];
    for s in 0..steps {
        let scheme = plan.step_scheme(s);
        let alpha = scheme.alpha();
        let beta = scheme.beta();
        let block = &mut out[s * n_space..(s + 1) * n_space];
        for j in 0..=scheme.width() {
            let src = s as isize - j as isize;
            let (state_col, f_col): (Vec<f64>, Option<&Vec<f64>>) = if src >= 0 {
                let c = src as usize;
                if beta[j] != 0.0 && f_cols[c].is_none() {
                    f_cols[c] = Some(model.velocity_vec(&states.col(c)));
                }
                (states.col(c), f_cols[c].as_ref())
            } else {
                if beta[j] != 0.0 && f_incoming.is_none() {
                    f_incoming = Some(model.velocity_vec(incoming));
                }
                (incoming.to_vec(), f_incoming.as_ref())
            };
            let aj = alpha[j];
            for (b, v) in block.iter_mut().zip(state_col.iter()) {
                *b += aj * v;
            }
            let bj = beta[j];
            if bj != 0.0 {
                let f = f_col.expect("velocity cached when beta_j nonzero");
                for (b, v) in block.iter_mut().zip(f.iter()) {
                    *b -= dt * bj * v;
                }
            }
        }
    }
    Ok(out)
}

/// Assembles J = (dr/du) * basis without materializing dr/du beyond its
/// block bands. Row block s of J is
/// (alpha_0 I - dt beta_0 df/du(u^s)) P_s + sum_{j>=1} alpha_j P_{s-j},
/// where P_s is row block s of the window basis (zero for s = -1: the
/// incoming state is data, not an unknown).
pub fn assemble_window_jacobian<M: Model>(
    states: &DenseMatrix,
    model: &M,
    plan: &WindowPlan,
    k: usize,
    basis: &WindowBasis,
) -> Result<DenseMatrix> {
    let n_space = model.dim();
    let steps = plan.window_steps(k);
    if states.rows() != n_space || states.cols() != steps {
        return Err(Error::DimensionMismatch(format!(
            "window {k}: states {}x{}, expected {}x{}",
            states.rows(),
            states.cols(),
            n_space,
            steps
        )));
    }
    if basis.n_space() != n_space || basis.n_steps() != steps {
        return Err(Error::DimensionMismatch(format!(
            "window {k}: basis covers {} dofs x {} steps, states are {} x {}",
            basis.n_space(),
            basis.n_steps(),
            n_space,
            steps
        )));
    }
    let dt = plan.dt;
    let n_cols = basis.n_columns();
    let mut j_mat = DenseMatrix::zeros(n_space * steps, n_cols);
    // Ring of the last scheme-width basis row blocks; older ones are never
    // referenced again, which matters for long windows.
    let width = plan.scheme.width();
    let mut recent: Vec<Option<DenseMatrix>> = vec![None; width.max(1)];
    for s in 0..steps {
        let scheme = plan.step_scheme(s);
        let alpha = scheme.alpha();
        let beta = scheme.beta();
        let p_s = basis.row_block(s);
        // Implicit diagonal block.
        let jac = model.jacobian(&states.col(s));
        let mut block = jac.mul_matrix(&p_s);
        block.scale(-dt * beta[0]);
        block.axpy(alpha[0], &p_s);
        // History blocks: beta_j = 0 for j >= 1 in BDF schemes, but keep the
        // general form for any A-stable LMM added later.
        for j in 1..=scheme.width() {
            let src = s as isize - j as isize;
            if src >= 0 {
                let src = src as usize;
                let p_src = recent[src % width.max(1)]
                    .as_ref()
                    .expect("history block within stencil width");
                block.axpy(alpha[j], p_src);
                if beta[j] != 0.0 {
                    let jac_src = model.jacobian(&states.col(src));
                    let mut extra = jac_src.mul_matrix(p_src);
                    extra.scale(-dt * beta[j]);
                    block.axpy(1.0, &extra);
                }
            }
        }
        j_mat.set_block(s * n_space, 0, &block);
        recent[s % width.max(1)] = Some(p_s);
    }
    Ok(j_mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearModel, ZeroModel};

    #[test]
    fn scheme_consistency() {
        for scheme in [LmmScheme::Bdf1, LmmScheme::Bdf2] {
            let sum: f64 = scheme.alpha().iter().sum();
            assert_eq!(sum, 0.0, "{}", scheme.name());
            assert_ne!(scheme.alpha()[0], 0.0);
        }
    }

    #[test]
    fn phi_map() {
        let plan = WindowPlan::uniform(256, 0.1, 64, 64, LmmScheme::Bdf1).unwrap();
        assert_eq!(plan.phi(0).unwrap(), 1);
        assert_eq!(plan.phi(1).unwrap(), 65);
        assert_eq!(plan.phi(3).unwrap(), 193);
        assert!(plan.phi(4).is_err());
    }

    #[test]
    fn zeta_map() {
        let plan = WindowPlan::uniform(256, 0.1, 64, 32, LmmScheme::Bdf1).unwrap();
        assert_eq!(plan.zeta(0, 0).unwrap(), 1);
        assert_eq!(plan.zeta(1, 1).unwrap(), 97);
        let single = WindowPlan::uniform(8, 0.1, 8, 8, LmmScheme::Bdf1).unwrap();
        assert_eq!(single.zeta(0, 0).unwrap(), 1);
        assert!(single.zeta(0, 1).is_err());
    }

    #[test]
    fn maps_strictly_increasing() {
        let plan = WindowPlan::uniform(64, 0.5, 16, 4, LmmScheme::Bdf1).unwrap();
        let mut last = 0;
        for k in 0..plan.n_windows() {
            let p = plan.phi(k).unwrap();
            assert!(p > last);
            last = p;
            let mut last_z = 0;
            for m in 0..plan.n_sub(k) {
                let z = plan.zeta(k, m).unwrap();
                if m == 0 {
                    assert_eq!(z, p);
                } else {
                    assert!(z > last_z);
                }
                last_z = z;
            }
        }
    }

    #[test]
    fn plan_divisibility_enforced() {
        assert!(WindowPlan::uniform(10, 0.1, 3, 3, LmmScheme::Bdf1).is_err());
        assert!(WindowPlan::uniform(12, 0.1, 6, 4, LmmScheme::Bdf1).is_err());
        assert!(WindowPlan::from_lengths(256, 0.1, 25.6, 0.1, LmmScheme::Bdf1).is_ok());
        assert!(WindowPlan::from_lengths(256, 0.1, 0.25, 0.25, LmmScheme::Bdf1).is_err());
    }

    #[test]
    fn scalar_residual_bdf1_single_step() {
        // Scalar BDF1, one-step window, u1 = 2, u0 = 1, dt = 1, f = 0:
        // r = 1*2 - 1*1 = 1.
        let plan = WindowPlan::uniform(1, 1.0, 1, 1, LmmScheme::Bdf1).unwrap();
        let model = ZeroModel(1);
        let states = DenseMatrix::from_row_major(1, 1, vec![2.0]).unwrap();
        let r = assemble_window_residual(&states, &[1.0], &model, &plan, 0).unwrap();
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn zero_velocity_constant_states_zero_residual() {
        let plan = WindowPlan::uniform(4, 0.5, 4, 2, LmmScheme::Bdf1).unwrap();
        let model = ZeroModel(3);
        let mut states = DenseMatrix::zeros(3, 4);
        for c in 0..4 {
            states.set_col(c, &[7.0, -1.0, 2.5]);
        }
        let r = assemble_window_residual(&states, &[7.0, -1.0, 2.5], &model, &plan, 0).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_operators_bdf1_example() {
        let plan = WindowPlan::uniform(2, 1.0, 2, 2, LmmScheme::Bdf1).unwrap();
        let ops = build_window_operators(&plan, 0, 1).unwrap();
        assert_eq!(ops.a.data(), &[1.0, 0.0, -1.0, 1.0]);
        assert_eq!(ops.b.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ops.a_ic.data(), &[-1.0, 0.0]);
        assert_eq!(ops.b_ic.data(), &[0.0, 0.0]);
    }

    #[test]
    fn window_operators_bdf2_structure() {
        let plan = WindowPlan::uniform(4, 1.0, 4, 4, LmmScheme::Bdf2).unwrap();
        let s = scalar_window_operators(&plan, 0).unwrap();
        // First step restarts with BDF1.
        assert_eq!(s.a.get(0, 0), 1.0);
        assert_eq!(s.a_ic.get(0, 0), -1.0);
        // Second step: BDF2 reaching the incoming state with +1/2.
        assert_eq!(s.a.get(1, 1), 1.5);
        assert_eq!(s.a.get(1, 0), -2.0);
        assert_eq!(s.a_ic.get(1, 0), 0.5);
        // Interior BDF2 rows.
        assert_eq!(s.a.get(3, 3), 1.5);
        assert_eq!(s.a.get(3, 2), -2.0);
        assert_eq!(s.a.get(3, 1), 0.5);
        // B is diagonal: implicit-only schemes.
        for r in 0..4 {
            for c in 0..4 {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert_eq!(s.b.get(r, c), expected);
            }
        }
    }

    #[test]
    fn operators_reproduce_residual_on_random_inputs() {
        // Structural identity r(v; u0) = A v - dt B f(v) + A_IC u0
        // - dt B_IC f(u0) against the assembler, linear model.
        let n_space = 3;
        let dt = 0.25;
        for scheme in [LmmScheme::Bdf1, LmmScheme::Bdf2] {
            let plan = WindowPlan::uniform(8, dt, 4, 2, scheme).unwrap();
            let mmat = crate::densekit::DenseMatrix::from_row_major(
                3,
                3,
                vec![-1.0, 0.2, 0.0, 0.1, -0.8, 0.3, 0.0, 0.4, -1.2],
            )
            .unwrap();
            let model = LinearModel::new(mmat, vec![0.3, -0.1, 0.2]);
            let k = 1;
            let ops = build_window_operators(&plan, k, n_space).unwrap();
            let steps = plan.window_steps(k);
            let mut state = 99u64;
            let mut rnd = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(7);
                ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
            };
            for _ in 0..20 {
                let mut states = DenseMatrix::zeros(n_space, steps);
                for c in 0..steps {
                    let col: Vec<f64> = (0..n_space).map(|_| rnd() * 3.0).collect();
                    states.set_col(c, &col);
                }
                let incoming: Vec<f64> = (0..n_space).map(|_| rnd() * 3.0).collect();
                let direct =
                    assemble_window_residual(&states, &incoming, &model, &plan, k).unwrap();

                // Stacked v and f(v).
                let mut v = Vec::with_capacity(n_space * steps);
                let mut fv = Vec::with_capacity(n_space * steps);
                for c in 0..steps {
                    let col = states.col(c);
                    fv.extend(model.velocity_vec(&col));
                    v.extend(col);
                }
                let f0 = model.velocity_vec(&incoming);
                let mut via_ops = ops.a.matvec(&v);
                let bfv = ops.b.matvec(&fv);
                let aic = ops.a_ic.matvec(&incoming);
                let bic = ops.b_ic.matvec(&f0);
                for i in 0..via_ops.len() {
                    via_ops[i] += -dt * bfv[i] + aic[i] - dt * bic[i];
                }
                for (a, b) in direct.iter().zip(via_ops.iter()) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }
}
