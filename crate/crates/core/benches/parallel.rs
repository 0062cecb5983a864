//! Compares the rayon-parallel maps against the always-sequential path on
//! the two training hot spots: the FOM parameter sweep and the
//! per-sub-window basis builds. Build with `--no-default-features` to
//! measure the sequential fallback of `par_map` itself.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use wstlspg::burgers::{fom_march, sample_parameter_grid, SpatialGrid};
use wstlspg::parallel::{par_map, seq_map};
use wstlspg::subspaces::{
    assemble_subwindow_basis, build_snapshot_tensor, pod_spatial, tailored_temporal,
};
use wstlspg::windows::{LmmScheme, WindowPlan};

fn bench_fom_sweep(c: &mut Criterion) {
    let grid = SpatialGrid::new(100, 0.0, 100.0);
    let params = sample_parameter_grid((2.0, 4.1), 8, (0.013, 0.02), 2).unwrap();
    let mut group = c.benchmark_group("fom_sweep_16_params");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par_map(&params, |p| {
                fom_march(*p, &grid, 0.1, 64, LmmScheme::Bdf1).unwrap()
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            seq_map(&params, |p| {
                fom_march(*p, &grid, 0.1, 64, LmmScheme::Bdf1).unwrap()
            })
        })
    });
    group.finish();
}

fn bench_basis_training(c: &mut Criterion) {
    let grid = SpatialGrid::new(100, 0.0, 100.0);
    let params = sample_parameter_grid((2.0, 4.1), 8, (0.013, 0.02), 2).unwrap();
    let trajectories: Vec<_> = params
        .iter()
        .map(|p| fom_march(*p, &grid, 0.1, 64, LmmScheme::Bdf1).unwrap())
        .collect();
    let plan = WindowPlan::uniform(64, 0.1, 8, 2, LmmScheme::Bdf1).unwrap();
    let pairs: Vec<(usize, usize)> = (0..plan.n_windows())
        .flat_map(|k| (0..plan.n_sub(k)).map(move |m| (k, m)))
        .collect();
    let build = |&(k, m): &(usize, usize)| {
        let tensor = build_snapshot_tensor(&trajectories, &plan, k, m).unwrap();
        let phi = pod_spatial(&tensor, 0.99).unwrap();
        let tf = tailored_temporal(&tensor, &phi, 0.99).unwrap();
        assemble_subwindow_basis(&phi, &tf.factors)
    };

    let mut group = c.benchmark_group("subwindow_basis_training");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter_batched(|| pairs.clone(), |p| par_map(&p, build), BatchSize::SmallInput)
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(|| pairs.clone(), |p| seq_map(&p, build), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bench_fom_sweep, bench_basis_training);
criterion_main!(benches);
