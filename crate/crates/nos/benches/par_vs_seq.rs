//! Parallel vs sequential throughput on a representative workload: a
//! coupling-gain sweep of equilibrium solves plus local stability reads,
//! the same shape of job the sweep entry points fan out.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nos::model::NodeParams;
use nos::stability::{local_jacobian, solve_equilibrium};
use nos::par;

fn sweep_params() -> NodeParams {
    NodeParams {
        alpha: 0.02,
        kappa: 1.0,
        beta: 0.5,
        gamma: 0.05,
        lambda: 0.2,
        chi: 0.05,
        v_rest: 0.0,
        a: 0.05,
        b: 0.5,
        mu: 0.01,
    }
}

fn job(i_ext: f64) -> f64 {
    let p = sweep_params();
    match solve_equilibrium(&p, i_ext, (-0.5, 2.0)).report() {
        Some(eq) => {
            let st = local_jacobian(&p, eq.v_star);
            st.trace_t + st.det_delta
        }
        None => f64::NAN,
    }
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("gain_sweep");
    for &n in &[64usize, 512] {
        let inputs: Vec<f64> = (0..n).map(|k| 0.3 * k as f64 / n as f64).collect();
        group.bench_with_input(BenchmarkId::new("parallel", n), &inputs, |b, inp| {
            b.iter(|| par::map(inp.clone(), job))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &inputs, |b, inp| {
            b.iter(|| par::map_seq(inp.clone(), job))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
