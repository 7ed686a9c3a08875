//! Scratch diagnostics for the cross-check fixtures.

use nalgebra::{DMatrix, Matrix3};
use nos::continuation::{eig_sweep_gstar_with, SweepMethod};
use nos::drive::{AmplitudeDist, DriveSpec};
use nos::graph::{barabasi_albert, normalise_to_rho, CouplingGraph};
use nos::model::{NodeParams, ThresholdNoise, ThresholdSpec};
use nos::sim::{run_simulation, Per, SimConfig};
use nos::stability::{
    block_jacobian, node_drift_slope, solve_equilibrium, transfer_and_variance,
};

fn fixture() -> NodeParams {
    NodeParams {
        alpha: 0.02,
        kappa: 1.0,
        beta: 0.05,
        gamma: 0.01,
        lambda: 0.12,
        chi: 0.01,
        v_rest: 0.0,
        a: 0.02,
        b: 0.2,
        mu: 0.01,
    }
}

fn main() {
    variance_ground_truth();
    dense_reduced_250();
}

fn variance_ground_truth() {
    let p = fixture();
    let drive = DriveSpec::shot(400.0, AmplitudeDist::Constant { a: 0.00375 }, 0.040);
    let i_mean = 400.0 * 0.00375 * 0.040;
    let rep = solve_equilibrium(&p, i_mean, (-0.5, 2.0)).unwrap().report().unwrap().clone();
    println!("v* = {}", rep.v_star);

    // exact discrete Lyapunov variance of the linearised Euler system with
    // AR(1) drive (the sampler point-samples the continuous process, so the
    // drive autocov is var * phi^|lag| with phi = exp(-1/tau_bin))
    let d_bar = node_drift_slope(&p, rep.v_star);
    let apm = p.a + p.mu;
    let ab = p.a * p.b;
    let tau_bin = 0.040 / 0.005;
    let phi = (-1.0f64 / tau_bin).exp();
    let rate_bin = 400.0 * 0.005;
    let m2 = 0.00375 * 0.00375;
    let var_y = rate_bin * m2 * tau_bin / 2.0;
    let sig_eps2 = var_y * (1.0 - phi * phi);
    let m = Matrix3::new(
        1.0 + d_bar, -1.0, 1.0,
        ab, 1.0 - apm, 0.0,
        0.0, 0.0, phi,
    );
    let mut x = Matrix3::zeros();
    for _ in 0..200_000 {
        x = m * x * m.transpose();
        x[(2, 2)] += sig_eps2;
    }
    println!("discrete Lyapunov var(v) = {}", x[(0, 0)]);

    let analytic = transfer_and_variance(&p, rep.v_star, &drive, 0.005).unwrap();
    println!("transfer_and_variance    = {}", analytic.sigma_v2);

    // continuous Wiener-Khinchin integral with the tau^2 Lorentzian
    let tgs = |w: f64| nos::stability::transfer_gain_sq(&p, rep.v_star, w);
    let s2 = |w: f64| rate_bin * m2 * tau_bin * tau_bin / (1.0 + w * w * tau_bin * tau_bin);
    let integral =
        nos::stability::integrate_adaptive(|w| tgs(w) * s2(w), 0.0, 1e3 / tau_bin, 1e-8);
    println!("continuous WK integral   = {}", integral / std::f64::consts::PI);

    // one long simulation
    let (horizon, burn) = (400_000usize, 20_000usize);
    let wg = CouplingGraph::from_edges(1, []).unwrap();
    let mut cfg = SimConfig::new(wg, Per::Shared(p), Per::Shared(drive), horizon);
    cfg.threshold = ThresholdSpec {
        v_th_base: 5.0,
        sigma: 0.0,
        noise_kind: ThresholdNoise::None,
        seed_stream: 0,
    };
    cfg.record.states = true;
    let out = run_simulation(&cfg, 402).unwrap();
    let v = &out.v_trace.as_ref().unwrap()[0][burn..];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (v.len() - 1) as f64;
    println!("sim mean {mean} var {var}");
}

fn dense_reduced_250() {
    let p = NodeParams::default();
    let rep = solve_equilibrium(&p, 0.10, (-0.5, 2.0)).unwrap().report().unwrap().clone();
    let n = 250;
    let wg = normalise_to_rho(&barabasi_albert(n, 3, 9).unwrap(), 1.0).unwrap();
    let v_star = vec![rep.v_star; n];

    let j = block_jacobian(&p, &v_star, &wg, 0.3);
    let eigs = j.complex_eigenvalues();
    let mut res: Vec<(f64, f64)> = eigs.iter().map(|z| (z.re, z.im)).collect();
    res.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("dense top5: {:?}", &res[..5]);
    let tr_eig: f64 = eigs.iter().map(|z| z.re).sum();
    let tr_mat: f64 = (0..2 * n).map(|i| j[(i, i)]).sum();
    println!("trace check: sum Re eig = {tr_eig}, trace = {tr_mat}");

    let w: DMatrix<f64> = wg.to_dense();
    let modes = w.complex_eigenvalues();
    let d_bar = node_drift_slope(&p, rep.v_star);
    let apm = p.a + p.mu;
    let ab = p.a * p.b;
    let mut closures: Vec<(f64, f64)> = Vec::new();
    for z in modes.iter() {
        let top = num_complex::Complex::new(d_bar + 0.3 * z.re, 0.3 * z.im);
        let tr = top - apm;
        let det = num_complex::Complex::new(ab, 0.0) - top * apm;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let l1 = 0.5 * (tr + disc);
        let l2 = 0.5 * (tr - disc);
        closures.push((l1.re, l1.im));
        closures.push((l2.re, l2.im));
    }
    closures.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("reduced top5: {:?}", &closures[..5]);
    let tr_red: f64 = closures.iter().map(|c| c.0).sum();
    println!("reduced sum Re = {tr_red}");
    let mode_tr: f64 = modes.iter().map(|z| z.re).sum();
    println!("W eig sum {mode_tr} (should be ~0), rho target 1: max |mode| = {}",
        modes.iter().map(|z| (z.re * z.re + z.im * z.im).sqrt()).fold(0.0f64, f64::max));

    let spot = eig_sweep_gstar_with(&p, &v_star, &wg, &[0.3], SweepMethod::Dense).unwrap();
    println!("sweep dense spot = {:?}", spot.leading_re);
}
