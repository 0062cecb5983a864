use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;

use wstlspg::burgers::{fom_march, sample_parameter_grid, BurgersModel, Parameters, SpatialGrid};
use wstlspg::config::Config;
use wstlspg::harness::{
    aposteriori_bound, error_report, estimate_lipschitz, fom_sweep, pareto_front, pareto_sweep,
    train_state_bases, SweepRow,
};
use wstlspg::hyper::{
    build_residual_basis, collect_residual_snapshots, gnat_weights, greedy_sample_mesh,
    solve_wst_gnat,
};
use wstlspg::io;
use wstlspg::solver::{solve_wst_lspg, GuessSource};
use wstlspg::subspaces::fit_initial_guess;
use wstlspg::windows::WindowPlan;

#[derive(Parser)]
#[command(
    name = "wstlspg",
    about = "Windowed space-time least-squares Petrov-Galerkin model reduction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and write the trajectory.
    Fom {
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional config for grid/time settings (defaults: benchmark).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write a CSV next to the binary trajectory.
        #[arg(long)]
        csv: bool,
    },
    /// Build training trajectories and the state basis bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Online solve at one parameter; appends an error-report JSON line.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        /// Use the GNAT-weighted solve (requires gnat-train artifacts).
        #[arg(long)]
        gnat: bool,
        #[arg(long)]
        out: PathBuf,
        /// Directory with training artifacts (defaults to ./train).
        #[arg(long, value_name = "DIR")]
        artifacts: Option<PathBuf>,
    },
    /// Collect residual snapshots, build residual bases, meshes, weights.
    GnatTrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Full Pareto study over the configured sweep ranges.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the error bounds for one parameter, one row per window.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::from_file(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(Config::default()),
    }
}

struct Workspace {
    cfg: Config,
    grid: SpatialGrid,
    plan: WindowPlan,
}

impl Workspace {
    fn new(cfg: Config) -> Result<Self> {
        let grid = SpatialGrid::new(cfg.grid.n_cells, cfg.grid.x_min, cfg.grid.x_max);
        let plan = WindowPlan::from_lengths(
            cfg.time.n_steps,
            cfg.time.dt,
            cfg.windows.l_w,
            cfg.windows.l_s,
            cfg.time.scheme,
        )?;
        Ok(Self { cfg, grid, plan })
    }

    fn training_params(&self) -> Result<Vec<Parameters>> {
        Ok(sample_parameter_grid(
            self.cfg.params.mu1_range,
            self.cfg.params.n_mu1,
            self.cfg.params.mu2_range,
            self.cfg.params.n_mu2,
        )?)
    }

    fn plan_summary(&self) -> String {
        format!(
            "n_steps={},dt={},l_w={},l_s={},scheme={}",
            self.cfg.time.n_steps,
            self.cfg.time.dt,
            self.cfg.windows.l_w,
            self.cfg.windows.l_s,
            self.cfg.time.scheme.name()
        )
    }
}

fn cmd_fom(mu1: f64, mu2: f64, out: &PathBuf, config: Option<&PathBuf>, csv: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = SpatialGrid::new(cfg.grid.n_cells, cfg.grid.x_min, cfg.grid.x_max);
    let t0 = Instant::now();
    let traj = fom_march(
        Parameters::new(mu1, mu2),
        &grid,
        cfg.time.dt,
        cfg.time.n_steps,
        cfg.time.scheme,
    )?;
    eprintln!(
        "fom: {} cells x {} steps in {:.3}s",
        grid.n_cells,
        cfg.time.n_steps,
        t0.elapsed().as_secs_f64()
    );
    io::write_trajectory(&traj, out)?;
    if csv {
        let csv_path = out.with_extension("csv");
        io::write_trajectory_csv(&traj, &grid.cell_centers, &csv_path)?;
        eprintln!("wrote {}", csv_path.display());
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(config: &PathBuf, out_dir: &PathBuf) -> Result<()> {
    let ws = Workspace::new(load_config(Some(config))?)?;
    let params = ws.training_params()?;
    eprintln!("training sweep: {} parameters", params.len());
    let t0 = Instant::now();
    let trajectories = fom_sweep(
        &params,
        &ws.grid,
        ws.cfg.time.dt,
        ws.cfg.time.n_steps,
        ws.cfg.time.scheme,
    )?;
    eprintln!("fom sweep done in {:.2}s", t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let artifacts = train_state_bases(
        &trajectories,
        &params,
        &ws.plan,
        ws.cfg.energies.e_s,
        ws.cfg.energies.e_t,
    )?;
    eprintln!(
        "bases trained in {:.2}s: total n_st = {}",
        t1.elapsed().as_secs_f64(),
        artifacts.n_st_total
    );
    std::fs::create_dir_all(out_dir)?;
    io::write_basis_bundle(
        &out_dir.join("state_bases"),
        &artifacts.bases,
        "state",
        ws.cfg.energies.e_s,
        ws.cfg.energies.e_t,
        &ws.plan_summary(),
    )?;
    for (i, traj) in trajectories.iter().enumerate() {
        io::write_trajectory(traj, &out_dir.join(format!("train_{i:04}.wstr")))?;
    }
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}

/// Rebuilds training artifacts from a train directory (or retrains when
/// the directory lacks them).
fn load_or_train(ws: &Workspace, artifacts_dir: Option<&PathBuf>) -> Result<TrainOutput> {
    let params = ws.training_params()?;
    if let Some(dir) = artifacts_dir {
        let bundle = dir.join("state_bases");
        if bundle.join("manifest.txt").exists() {
            let bases = io::read_basis_bundle(&bundle)?;
            // The regression model is cheap; refit from stored trajectories.
            let mut trajectories = Vec::with_capacity(params.len());
            for i in 0..params.len() {
                let p = dir.join(format!("train_{i:04}.wstr"));
                if !p.exists() {
                    bail!(
                        "artifact dir {} lacks {}; re-run train",
                        dir.display(),
                        p.display()
                    );
                }
                trajectories.push(io::read_trajectory(&p)?);
            }
            let guess_model = fit_initial_guess(&bases, &trajectories, &params, &ws.plan)?;
            let n_st_total = bases.iter().map(|b| b.n_columns()).sum();
            return Ok(TrainOutput {
                trajectories,
                artifacts: wstlspg::harness::TrainingArtifacts {
                    plan: ws.plan.clone(),
                    bases,
                    guess_model,
                    n_st_total,
                },
            });
        }
    }
    let trajectories = fom_sweep(
        &params,
        &ws.grid,
        ws.cfg.time.dt,
        ws.cfg.time.n_steps,
        ws.cfg.time.scheme,
    )?;
    let artifacts = train_state_bases(
        &trajectories,
        &params,
        &ws.plan,
        ws.cfg.energies.e_s,
        ws.cfg.energies.e_t,
    )?;
    Ok(TrainOutput {
        trajectories,
        artifacts,
    })
}

struct TrainOutput {
    trajectories: Vec<wstlspg::burgers::Trajectory>,
    artifacts: wstlspg::harness::TrainingArtifacts,
}

fn cmd_solve(
    config: &PathBuf,
    mu1: f64,
    mu2: f64,
    gnat: bool,
    out: &PathBuf,
    artifacts_dir: Option<&PathBuf>,
) -> Result<()> {
    let ws = Workspace::new(load_config(Some(config))?)?;
    let test = Parameters::new(mu1, mu2);
    let trained = load_or_train(&ws, artifacts_dir)?;
    let model = BurgersModel::new(ws.grid.clone(), test);
    let initial = vec![1.0; ws.grid.n_cells];
    let gn = ws.cfg.solver.to_gauss_newton();
    let guesses = GuessSource::Regression(&trained.artifacts.guess_model, test);

    let weights = if gnat {
        let dir = artifacts_dir.cloned().unwrap_or_else(|| PathBuf::from("train"));
        let meshes = io::read_meshes(&dir.join("sample_mesh.txt"))
            .context("gnat solve needs gnat-train artifacts (sample_mesh.txt)")?;
        let rbs = io::read_basis_bundle(&dir.join("residual_bases"))?;
        let mut ws_weights = Vec::new();
        for (k, mesh) in meshes.iter().enumerate() {
            let rb = residual_window_from_bundle(&rbs[k]);
            ws_weights.push(gnat_weights(mesh, &rb)?);
        }
        Some(ws_weights)
    } else {
        None
    };

    let t0 = Instant::now();
    let sol = match &weights {
        Some(w) => solve_wst_gnat(
            &model,
            &trained.artifacts.bases,
            w,
            &ws.plan,
            &initial,
            guesses,
            &gn,
        )?,
        None => solve_wst_lspg(
            &model,
            &trained.artifacts.bases,
            &ws.plan,
            &initial,
            guesses,
            &gn,
            None,
        )?,
    };
    let wall_rom = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let fom = fom_march(test, &ws.grid, ws.cfg.time.dt, ws.cfg.time.n_steps, ws.cfg.time.scheme)?;
    let wall_fom = t1.elapsed().as_secs_f64();

    let report = error_report(&sol, &fom, &model, &ws.plan, wall_rom, wall_fom)?;
    let line = serde_json::to_string(&report)?;
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)?;
    writeln!(f, "{line}")?;
    io::write_trajectory(&sol.trajectory, &out.with_extension("wstr"))?;
    io::write_convergence_log(&sol.reports, &out.with_extension("convergence.csv"))?;
    eprintln!(
        "solve: mse = {:.6e}, residual l2 = {:.6e}, relative wall time = {:.3}",
        report.mse, report.residual_l2, report.relative_wall_time
    );
    Ok(())
}

/// The residual bundle stores each orthonormalized sub-basis in the
/// `assembled` slot; rebuild the block-diagonal window basis from it.
fn residual_window_from_bundle(
    wb: &wstlspg::subspaces::WindowBasis,
) -> wstlspg::hyper::ResidualWindowBasis {
    let subs = wb
        .sub_bases()
        .iter()
        .map(|sb| wstlspg::hyper::ResidualSubBasis {
            spatial: sb.spatial.clone(),
            temporal: sb.temporal.clone(),
            orthonormal: sb.assembled.clone(),
        })
        .collect();
    wstlspg::hyper::ResidualWindowBasis::from_sub_bases(subs, wb.n_space())
}

fn cmd_gnat_train(config: &PathBuf, out_dir: &PathBuf) -> Result<()> {
    let ws = Workspace::new(load_config(Some(config))?)?;
    let trained = load_or_train(&ws, Some(out_dir))?;
    let residual_params = sample_parameter_grid(
        ws.cfg.params.mu1_range,
        ws.cfg.params.residual_n_mu1,
        ws.cfg.params.mu2_range,
        ws.cfg.params.residual_n_mu2,
    )?;
    eprintln!(
        "collecting residual snapshots over {} parameters",
        residual_params.len()
    );
    let initial = vec![1.0; ws.grid.n_cells];
    let mut gn = ws.cfg.solver.to_gauss_newton();
    gn.abort_on_divergence = false;
    let grid = ws.grid.clone();
    let tensor = collect_residual_snapshots(
        move |p| BurgersModel::new(grid.clone(), p),
        &residual_params,
        &trained.artifacts.bases,
        &ws.plan,
        &initial,
        Some(&trained.artifacts.guess_model),
        &gn,
        1,
    )?;
    let mut residual_bases = Vec::new();
    let mut meshes = Vec::new();
    let mut weights_ok = true;
    for k in 0..ws.plan.n_windows() {
        let rb = build_residual_basis(
            &tensor,
            ws.cfg.energies.e_rs,
            ws.cfg.energies.e_rt,
            &ws.plan,
            k,
        )?;
        let z_t = ws.cfg.gnat.z_t.min(ws.plan.window_steps(k));
        let mesh = greedy_sample_mesh(&rb, z_t, ws.cfg.gnat.z_s, &ws.plan, k)?;
        if gnat_weights(&mesh, &rb).is_err() {
            weights_ok = false;
        }
        meshes.push(mesh);
        residual_bases.push(rb);
    }
    if !weights_ok {
        bail!("sampled residual basis is rank deficient; enlarge z_t or z_s");
    }
    std::fs::create_dir_all(out_dir)?;
    io::write_meshes(&meshes, &out_dir.join("sample_mesh.txt"))?;
    // Persist residual bases through the shared bundle format.
    let as_window_bases: Vec<wstlspg::subspaces::WindowBasis> = residual_bases
        .iter()
        .map(|rb| {
            let subs = rb
                .sub_bases
                .iter()
                .map(|sb| wstlspg::subspaces::SubwindowBasis {
                    spatial: sb.spatial.clone(),
                    temporal: sb.temporal.clone(),
                    assembled: sb.orthonormal.clone(),
                })
                .collect();
            wstlspg::subspaces::WindowBasis::from_sub_bases(subs)
        })
        .collect();
    io::write_basis_bundle(
        &out_dir.join("residual_bases"),
        &as_window_bases,
        "residual",
        ws.cfg.energies.e_rs,
        ws.cfg.energies.e_rt,
        &ws.plan_summary(),
    )?;
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_sweep(config: &PathBuf, out: &PathBuf) -> Result<()> {
    let cfg = load_config(Some(config))?;
    let test = cfg.params.test;
    let t0 = Instant::now();
    let rows = pareto_sweep(&cfg, &[test])?;
    eprintln!(
        "sweep: {} configurations in {:.1}s",
        rows.len(),
        t0.elapsed().as_secs_f64()
    );
    let mut text = String::from(SweepRow::csv_header());
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    std::fs::write(out, text)?;
    let front = pareto_front(&rows, |r| r.mse);
    eprintln!("pareto front ({} rows):", front.len());
    for r in front {
        eprintln!(
            "  {} l_w={} l_s={} mse={:.4e} rel_time={:.3}",
            r.method, r.l_w, r.l_s, r.mse, r.relative_wall_time
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_bounds(config: &PathBuf, mu1: f64, mu2: f64, out: &PathBuf) -> Result<()> {
    let ws = Workspace::new(load_config(Some(config))?)?;
    let test = Parameters::new(mu1, mu2);
    let trained = load_or_train(&ws, None)?;
    let model = BurgersModel::new(ws.grid.clone(), test);
    let initial = vec![1.0; ws.grid.n_cells];
    let gn = ws.cfg.solver.to_gauss_newton();
    let sol = solve_wst_lspg(
        &model,
        &trained.artifacts.bases,
        &ws.plan,
        &initial,
        GuessSource::Regression(&trained.artifacts.guess_model, test),
        &gn,
        None,
    )?;
    let fom = fom_march(test, &ws.grid, ws.cfg.time.dt, ws.cfg.time.n_steps, ws.cfg.time.scheme)?;
    // Lipschitz estimate from training snapshot columns.
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for traj in trained.trajectories.iter().take(8) {
        for n in (0..=traj.n_time).step_by(16) {
            samples.push(traj.state(n));
        }
    }
    let kappa = estimate_lipschitz(&samples, &model);
    let report = aposteriori_bound(&sol, &fom, &model, &ws.plan, kappa)?;
    let mut text = String::from(
        "window,kappa_f,sigma_min_a,sigma_max_b,sigma_max_a_ic,sigma_max_b_ic,c1,c2,a2_satisfied,local_lhs,local_rhs,global_rhs\n",
    );
    for w in &report.windows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            w.window,
            w.kappa_f,
            w.sigma_min_a,
            w.sigma_max_b,
            w.sigma_max_a_ic,
            w.sigma_max_b_ic,
            w.c1,
            w.c2,
            w.a2_satisfied,
            w.local_lhs,
            w.local_rhs,
            w.global_rhs
        ));
    }
    std::fs::write(out, text)?;
    eprintln!(
        "bounds: kappa_f = {:.4}, violations = {}, simplified global constant = {:.4e}",
        kappa,
        report.violations(),
        report.simplified_global_constant
    );
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fom {
            mu1,
            mu2,
            out,
            config,
            csv,
        } => cmd_fom(*mu1, *mu2, out, config.as_ref(), *csv),
        Command::Train { config, out_dir } => cmd_train(config, out_dir),
        Command::Solve {
            config,
            mu1,
            mu2,
            gnat,
            out,
            artifacts,
        } => cmd_solve(config, *mu1, *mu2, *gnat, out, artifacts.as_ref()),
        Command::GnatTrain { config, out_dir } => cmd_gnat_train(config, out_dir),
        Command::Sweep { config, out } => cmd_sweep(config, out),
        Command::Bounds {
            config,
            mu1,
            mu2,
            out,
        } => cmd_bounds(config, *mu1, *mu2, out),
    }
}
