//! Scratch driver for the noise-sensitivity regime: prints rate/CV/CIs and
//! avalanche fits per amplitude so the acceptance fixture can be pinned.

use nos::drive::{AmplitudeDist, DriveKind, DriveSpec};
use nos::graph::{barabasi_albert, normalise_to_rho, CouplingGraph};
use nos::model::{NodeParams, ResetKind, ResetSpec, ThresholdNoise, ThresholdSpec};
use nos::sim::{Per, RecordSpec, SimConfig};
use nos::spikestats::{avalanche_analysis, spike_statistics};

fn base_params() -> NodeParams {
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

fn spread_graph(n: usize, delay_spread: bool) -> CouplingGraph {
    let base = barabasi_albert(n, 2, 7).unwrap();
    let rebuilt: Vec<(usize, usize, f64, u32)> = base
        .entries()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let d = if delay_spread { 1 + (k as u32 * 7 + 3) % 5 } else { 1 };
            (e.col, e.row, e.weight, d)
        })
        .collect();
    let wg = CouplingGraph::from_edges(n, rebuilt).unwrap();
    let mut wg = normalise_to_rho(&wg, 1.0).unwrap();
    wg.g = 1.36;
    wg
}

fn main() {
    let n = 16usize;
    let horizon = 120_000;
    let dt = 0.005;

    // (name, sigma, gamma spread, delay spread)
    let variants: Vec<(&str, f64, f64, bool)> = vec![
        ("T1 gamma-spread", 0.08, 0.08, false),
        ("T2 delay-spread", 0.08, 0.0, true),
        ("T3 high-noise", 0.15, 0.0, false),
        ("T4 all", 0.12, 0.08, true),
    ];

    for (name, sigma, gspread, dspread) in variants {
        for seed in [101u64, 202, 303] {
            println!("=== {name} seed={seed} ===");
            let wg = spread_graph(n, dspread);
            let params: Vec<NodeParams> = (0..n)
                .map(|i| {
                    let mut p = base_params();
                    p.gamma += gspread * i as f64 / (n - 1) as f64;
                    p
                })
                .collect();
            run_grid(&wg, params, 1.0, sigma, 1.0, horizon, dt, n, seed);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_grid(
    wg: &CouplingGraph,
    params: Vec<NodeParams>,
    v_th: f64,
    sigma: f64,
    d: f64,
    horizon: usize,
    dt: f64,
    n: usize,
    seed: u64,
) {
    for &a_amp in &[0.3, 0.6, 0.9] {
        let drive = DriveSpec {
            kind: DriveKind::ShotNoise {
                rate_hz: 50.0,
                amplitude: AmplitudeDist::Constant { a: a_amp },
                tau_s_seconds: 0.0,
            },
            i0: 0.0,
            gain: 1.0,
            seed_stream: 0,
        };
        let mut cfg = SimConfig::new(
            wg.clone(),
            Per::PerNode(params.clone()),
            Per::PerNode((0..n).map(|i| drive.clone().with_stream(i as u64)).collect()),
            horizon,
        );
        cfg.threshold = ThresholdSpec {
            v_th_base: v_th,
            sigma,
            noise_kind: ThresholdNoise::ClippedGaussian,
            seed_stream: 0,
        };
        cfg.reset =
            ResetSpec { kind: ResetKind::EventExponential, d, ..ResetSpec::default() };
        cfg.record = RecordSpec { states: false, inputs: false };
        let out = nos::sim::run_simulation(&cfg, seed).unwrap();

        let stats = spike_statistics(&out.spikes, horizon, dt, 200, 11).unwrap();
        let av = avalanche_analysis(&out.population_counts, dt).unwrap();
        let zero_frac = out.population_counts.iter().filter(|&&c| c == 0).count() as f64
            / horizon as f64;
        println!(
            "A={a_amp}: rate {:.3} ci ({:.3},{:.3}) cv {:.3} ci ({:.3},{:.3})",
            stats.mean_rate_hz,
            stats.rate_ci.0,
            stats.rate_ci.1,
            stats.isi_cv.unwrap_or(f64::NAN),
            stats.cv_ci.map_or(f64::NAN, |c| c.0),
            stats.cv_ci.map_or(f64::NAN, |c| c.1),
        );
        println!(
            "   av {} zero {:.3} fit {:?}",
            av.sizes.len(),
            zero_frac,
            av.fit.map(|f| (f.x_min, f.n_tail, format!("{:.2}", f.alpha_hat), f.preferred))
        );
    }
}
