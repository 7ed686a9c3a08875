//! Scratch driver for the synchrony-onset regime: prints the population
//! order parameter across a coupling grid so the acceptance fixture can be
//! pinned.

use std::time::Instant;

use nos::drive::{AmplitudeDist, DriveKind, DriveSpec};
use nos::graph::{normalise_to_rho, CouplingGraph};
use nos::model::{NodeParams, ResetKind, ResetSpec, ThresholdNoise, ThresholdSpec};
use nos::sim::{Per, RecordSpec, SimConfig};
use nos::spikestats::synchrony_order;

fn params() -> NodeParams {
    NodeParams {
        alpha: 0.7,
        kappa: 1.0,
        beta: 0.1,
        gamma: 0.05,
        lambda: 0.3,
        chi: 0.05,
        v_rest: 0.0,
        a: 0.02,
        b: 0.2,
        mu: 0.01,
    }
}

fn complete_graph(n: usize) -> CouplingGraph {
    let mut edges = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j, 1.0, 1));
            }
        }
    }
    let wg = CouplingGraph::from_edges(n, edges).unwrap();
    normalise_to_rho(&wg, 1.0).unwrap()
}

fn main() {
    let horizon = 60_000;
    let dt = 0.005;

    // (name, drive rate Hz, amplitude, threshold sigma, reset d)
    let combos: Vec<(&str, f64, f64, f64, f64)> = vec![
        ("C1 seed=101", 180.0, 0.15, 0.02, 1.0),
        ("C1 seed=202", 180.0, 0.15, 0.02, 1.0),
        ("C2 seed=101", 400.0, 0.07, 0.02, 1.0),
        ("C2 seed=202", 400.0, 0.07, 0.02, 1.0),
    ];

    for (name, rate_hz, amp, sigma, d) in combos {
        let seed: u64 = if name.ends_with("202") { 202 } else { 101 };
        for n in [64usize, 256] {
            let base = complete_graph(n);
            println!("=== {name} N={n} ===");
            for &k in &[0.0, 0.5, 1.0, 1.5, 2.0] {
                let t0 = Instant::now();
                let mut wg = base.clone();
                wg.g = k;
                let drive = DriveSpec {
                    kind: DriveKind::ShotNoise {
                        rate_hz,
                        amplitude: AmplitudeDist::Constant { a: amp },
                        tau_s_seconds: 0.0,
                    },
                    i0: 0.0,
                    gain: 1.0,
                    seed_stream: 0,
                };
                let mut cfg = SimConfig::new(
                    wg,
                    Per::Shared(params()),
                    Per::PerNode(
                        (0..n).map(|i| drive.clone().with_stream(i as u64)).collect(),
                    ),
                    horizon,
                );
                cfg.threshold = ThresholdSpec {
                    v_th_base: 1.0,
                    sigma,
                    noise_kind: ThresholdNoise::ClippedGaussian,
                    seed_stream: 0,
                };
                cfg.reset = ResetSpec {
                    kind: ResetKind::EventExponential,
                    d,
                    ..ResetSpec::default()
                };
                cfg.record = RecordSpec { states: false, inputs: false };
                let out = nos::sim::run_simulation(&cfg, seed).unwrap();

                let total: u64 = out.spikes.iter().map(|s| s.len() as u64).sum();
                let rate = total as f64 / (n as f64 * horizon as f64 * dt);
                match synchrony_order(&out.spikes, horizon) {
                    Some(r) => println!(
                        "k={k:.1}: R={:.3} rate {:.2} Hz defined {} excl {} ({:.1}s)",
                        r.r_mean,
                        rate,
                        r.defined_bins,
                        r.excluded_nodes,
                        t0.elapsed().as_secs_f64()
                    ),
                    None => println!(
                        "k={k:.1}: R undefined, rate {:.2} Hz ({:.1}s)",
                        rate,
                        t0.elapsed().as_secs_f64()
                    ),
                }
            }
        }
    }
}
