use std::time::Instant;
use wstlspg::densekit::{least_squares, thin_svd, DenseMatrix};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut state = seed;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
    };
    let data = (0..rows * cols).map(|_| next()).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

fn main() {
    for &(m, n) in &[(12800usize, 640usize), (51200, 1280), (51200, 2490)] {
        let a = random_matrix(m, n, 42);
        let b: Vec<f64> = (0..m).map(|i| (i as f64 * 0.1).sin()).collect();
        let t0 = Instant::now();
        let sol = least_squares(&a, &b).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let flops = 2.0 * m as f64 * (n as f64).powi(2);
        println!(
            "least_squares {m}x{n}: {dt:.2}s ({:.2} GFLOP/s) x0={:.4}",
            flops / dt / 1e9,
            sol.x[0]
        );
    }
    let a = random_matrix(200, 25600, 7);
    let t0 = Instant::now();
    let svd = thin_svd(&a).unwrap();
    println!(
        "thin_svd 200x25600: {:.2}s sigma0={:.3}",
        t0.elapsed().as_secs_f64(),
        svd.singular_values[0]
    );
}
