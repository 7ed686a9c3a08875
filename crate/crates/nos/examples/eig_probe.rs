//! Timing probe for dense complex eigensolves at the sizes the stability
//! sweeps use.

use nalgebra::DMatrix;
use std::time::Instant;

fn main() {
    for n in [128usize, 250, 500] {
        let m = DMatrix::from_fn(n, n, |i, j| {
            let x = ((i * 31 + j * 17 + 13) % 97) as f64 / 97.0;
            if (i + j) % 7 == 0 { x } else { 0.1 * x }
        });
        let t0 = Instant::now();
        let eig = m.complex_eigenvalues();
        let dt = t0.elapsed();
        let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        println!("n={n}: {:.3}s (rho={rho:.3})", dt.as_secs_f64());
    }
}
