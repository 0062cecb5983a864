use std::time::Instant;
use wstlspg::burgers::*;
use wstlspg::harness::*;
use wstlspg::hyper::*;
use wstlspg::solver::*;
use wstlspg::windows::*;

fn main() {
    let grid = SpatialGrid::new(200, 0.0, 100.0);
    let dt = 0.1;
    let n_steps = 256;
    let test = Parameters::new(4.0714, 0.0185);
    let params = sample_parameter_grid((2.0, 4.1), 10, (0.013, 0.02), 2).unwrap();
    let trajectories = fom_sweep(&params, &grid, dt, n_steps, LmmScheme::Bdf1).unwrap();
    let fom = fom_march(test, &grid, dt, n_steps, LmmScheme::Bdf1).unwrap();

    for (l_w, e_s, e_rs) in [(3.2, 0.99, 0.9999), (6.4, 0.98, 0.9999), (3.2, 0.99, 1.0)] {
        let t0 = Instant::now();
        let plan = WindowPlan::from_lengths(n_steps, dt, l_w, 0.1, LmmScheme::Bdf1).unwrap();
        let artifacts = train_state_bases(&trajectories, &params, &plan, e_s, e_s).unwrap();
        let cfg = GaussNewtonConfig::default();
        let initial = vec![1.0; grid.n_cells];
        let tensor = collect_residual_snapshots(
            |p| BurgersModel::new(grid.clone(), p),
            &params, &artifacts.bases, &plan, &initial,
            Some(&artifacts.guess_model), &cfg, 1,
        ).unwrap();
        let z_s = 40;
        let mut weights = Vec::new();
        let mut feasible = true;
        let mut max_zt = 0;
        let mut max_nstr = 0;
        for k in 0..plan.n_windows() {
            let rb = build_residual_basis(&tensor, e_rs, e_rs, &plan, k).unwrap();
            max_nstr = max_nstr.max(rb.n_columns());
            if rb.n_columns() < artifacts.bases[k].n_columns() {
                println!("l_w={l_w} e_s={e_s} e_rs={e_rs}: window {k} n_str {} < n_st {} INFEASIBLE", rb.n_columns(), artifacts.bases[k].n_columns());
                feasible = false;
                break;
            }
            let zt_k = rb.min_z_t().max(rb.n_columns().div_ceil(z_s)).min(plan.window_steps(k));
            max_zt = max_zt.max(zt_k);
            match greedy_sample_mesh(&rb, zt_k, z_s, &plan, k) {
                Ok(mesh) => match gnat_weights(&mesh, &rb) {
                    Ok(w) => weights.push(w),
                    Err(e) => { println!("  weights err: {e}"); feasible = false; break; }
                },
                Err(e) => { println!("  mesh err: {e}"); feasible = false; break; }
            }
        }
        if !feasible { continue; }
        let run_lspg = || solve_wst_lspg(&BurgersModel::new(grid.clone(), test), &artifacts.bases, &plan, &initial,
            GuessSource::Regression(&artifacts.guess_model, test), &cfg, None).unwrap();
        let run_gnat = || solve_wst_gnat(&BurgersModel::new(grid.clone(), test), &artifacts.bases, &weights, &plan, &initial,
            GuessSource::Regression(&artifacts.guess_model, test), &cfg).unwrap();
        let s1 = run_lspg();
        let s2 = run_gnat();
        let t1 = { let t = Instant::now(); let _ = run_lspg(); t.elapsed().as_secs_f64() };
        let t2 = { let t = Instant::now(); let _ = run_gnat(); t.elapsed().as_secs_f64() };
        let m1 = mse(&s1.trajectory, &fom).unwrap();
        let m2 = mse(&s2.trajectory, &fom).unwrap();
        println!(
            "l_w={l_w} e_s={e_s} e_rs={e_rs}: n_st={} max_n_str={max_nstr} z_t<={max_zt} | lspg {t1:.3}s mse {m1:.4e} | gnat {t2:.3}s mse {m2:.4e} | speedup {:.1}x degrade {:.2}x | total {:.0}s",
            artifacts.n_st_total, t1 / t2, m2 / m1, t0.elapsed().as_secs_f64()
        );
    }
}
