//! Classical queueing references and closed-loop marking comparisons:
//! analytic M/M/1 means, a discrete-event M/M/1(/K) simulator, arrival-only
//! calibration of the node model against light-load queue means, and three
//! controllers (node-state, raw-queue, low-passed queue) driving the same
//! logistic marking law.

use rand::Rng;
use thiserror::Error;

use crate::model::{self, ModelError, NodeParams, ResetSpec};
use crate::rng::{self, Domain};
use crate::stability::{solve_equilibrium, StabilityError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("rates must be positive and finite: {0}")]
    BadRate(&'static str),
    #[error("analytic M/M/1 mean needs rho < 1, got rho = {rho}")]
    UnstableAnalytic { rho: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("calibration did not converge after {iters} secant iterations")]
    NoConvergence { iters: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// Closed-form mean of the stationary M/M/1 queue, `rho/(1-rho)`.
pub fn mm1_mean(rho: f64) -> Result<f64, BaselineError> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(BaselineError::BadRate("rho"));
    }
    if rho >= 1.0 {
        return Err(BaselineError::UnstableAnalytic { rho });
    }
    Ok(rho / (1.0 - rho))
}

/// Closed-form mean of the stationary M/M/1/K queue (any positive rho).
pub fn mm1k_mean(rho: f64, k: usize) -> Result<f64, BaselineError> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(BaselineError::BadRate("rho"));
    }
    let kf = k as f64;
    if (rho - 1.0).abs() < 1e-12 {
        return Ok(kf / 2.0);
    }
    let rk1 = rho.powi(k as i32 + 1);
    Ok(rho / (1.0 - rho) - (kf + 1.0) * rk1 / (1.0 - rk1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mm1Report {
    /// `rho/(1-rho)` without a buffer bound; the M/M/1/K closed form with
    /// one.
    pub analytic_mean: f64,
    /// Time-averaged occupancy of the event-driven run.
    pub sim_mean: f64,
    /// Time-weighted `P(N >= n)` for `n = 0, 1, ...`.
    pub ccdf: Vec<f64>,
}

/// Discrete-event birth-death queue: exponential holding times, arrivals
/// lost when a bound `k` is hit. `events` counts transitions (arrivals,
/// blocked arrivals, departures); the first tenth is discarded as burn-in.
pub fn mm1_reference(
    lambda_rate: f64,
    mu_rate: f64,
    k: Option<usize>,
    events: usize,
    seed: u64,
) -> Result<Mm1Report, BaselineError> {
    if !(lambda_rate > 0.0) || !lambda_rate.is_finite() {
        return Err(BaselineError::BadRate("lambda_rate"));
    }
    if !(mu_rate > 0.0) || !mu_rate.is_finite() {
        return Err(BaselineError::BadRate("mu_rate"));
    }
    if events == 0 {
        return Err(BaselineError::Degenerate("events must be >= 1"));
    }
    let rho = lambda_rate / mu_rate;
    let analytic_mean = match k {
        None => mm1_mean(rho)?,
        Some(k) => mm1k_mean(rho, k)?,
    };
    // without a bound the walk is transient at rho >= 1
    if k.is_none() && rho >= 1.0 {
        return Err(BaselineError::UnstableAnalytic { rho });
    }

    let mut rng = rng::stream(seed, Domain::Queue, 0);
    let burn_in = events / 10;
    let mut n: usize = 0;
    let mut occupancy_time: Vec<f64> = vec![0.0];
    let mut total_time = 0.0;
    for ev in 0..events {
        let dep_rate = if n > 0 { mu_rate } else { 0.0 };
        let total_rate = lambda_rate + dep_rate;
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let dwell = -u.ln() / total_rate;
        if ev >= burn_in {
            if occupancy_time.len() <= n {
                occupancy_time.resize(n + 1, 0.0);
            }
            occupancy_time[n] += dwell;
            total_time += dwell;
        }
        let arrival = rng.gen_range(0.0..1.0) < lambda_rate / total_rate;
        if arrival {
            match k {
                Some(k) if n >= k => {} // blocked, lost
                _ => n += 1,
            }
        } else {
            n -= 1;
        }
    }

    let sim_mean = occupancy_time
        .iter()
        .enumerate()
        .map(|(lvl, &t)| lvl as f64 * t)
        .sum::<f64>()
        / total_time;
    let mut ccdf = vec![0.0; occupancy_time.len()];
    let mut tail = 0.0;
    for lvl in (0..occupancy_time.len()).rev() {
        tail += occupancy_time[lvl] / total_time;
        ccdf[lvl] = tail;
    }
    Ok(Mm1Report { analytic_mean, sim_mean, ccdf })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Shared input gain mapping normalised per-bin arrivals into drive.
    pub gain_i: f64,
    /// Per-node output scales mapping mean `v` to packets.
    pub per_node_scale: Vec<f64>,
    /// Analytic M/M/1 means `rho_i/(1-rho_i)` the scales target.
    pub reference_means: Vec<f64>,
}

const SECANT_MAX_ITERS: usize = 100;

/// Arrival-only calibration: one shared input gain plus per-node output
/// scales, fitted so each node's long-run subthreshold mean reproduces the
/// analytic light-load M/M/1 mean. No queue labels are used; the long-run
/// mean is the deterministic operating point under the mean per-bin drive
/// `gain * lambda_i * dt / k`. The gain is pinned by a secant solve that
/// places the average operating point one average normalised analytic mean
/// above the no-load baseline, so the scales cannot absorb an arbitrary
/// gain.
///
/// A positive baseline (`gamma > 0`) matters here: it keeps the operating
/// band clear of the rest-floor clamp, which otherwise rectifies light-load
/// fluctuations upward and the simulated mean drifts off the deterministic
/// point the scales were fitted to.
pub fn calibrate_light_load(
    p: &NodeParams,
    arrival_rates_hz: &[f64],
    mu_rate: f64,
    k: usize,
    dt_seconds: f64,
) -> Result<CalibrationResult, BaselineError> {
    if arrival_rates_hz.is_empty() {
        return Err(BaselineError::Degenerate("no arrival rates"));
    }
    if !(mu_rate > 0.0) || !mu_rate.is_finite() {
        return Err(BaselineError::BadRate("mu_rate"));
    }
    if k == 0 {
        return Err(BaselineError::Degenerate("buffer k must be >= 1"));
    }
    if !(dt_seconds > 0.0) {
        return Err(BaselineError::BadRate("dt_seconds"));
    }
    let mut reference_means = Vec::with_capacity(arrival_rates_hz.len());
    for &lam in arrival_rates_hz {
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(BaselineError::Degenerate("zero or invalid arrival rate"));
        }
        let rho = lam / mu_rate;
        if rho >= 0.9 {
            return Err(BaselineError::BadRate("arrival rate implies rho >= 0.9"));
        }
        reference_means.push(mm1_mean(rho)?);
    }

    let kf = k as f64;
    let window = (p.v_rest - 0.5, p.v_rest + 2.0);
    let v_baseline = solve_equilibrium(p, 0.0, window)?
        .report()
        .ok_or(BaselineError::Degenerate("no operating point with zero drive"))?
        .v_star;
    let target = v_baseline
        + reference_means.iter().sum::<f64>() / reference_means.len() as f64 / kf;
    let mean_v = |gain: f64| -> Result<f64, BaselineError> {
        let mut acc = 0.0;
        for &lam in arrival_rates_hz {
            let drive = gain * lam * dt_seconds / kf;
            let out = solve_equilibrium(p, drive, window)?;
            let rep = out
                .report()
                .ok_or(BaselineError::Degenerate("no operating point at trial gain"))?;
            acc += rep.v_star;
        }
        Ok(acc / arrival_rates_hz.len() as f64)
    };

    // 1-D secant on the average operating point
    let (mut g0, mut g1) = (0.1, 1.0);
    let mut h0 = mean_v(g0)? - target;
    let mut h1 = mean_v(g1)? - target;
    let tol = 1e-9 * target.max(1e-9);
    for _ in 0..SECANT_MAX_ITERS {
        if h1.abs() <= tol || (h1 - h0).abs() < 1e-300 {
            break;
        }
        let g2 = g1 - h1 * (g1 - g0) / (h1 - h0);
        if !g2.is_finite() {
            break;
        }
        (g0, h0) = (g1, h1);
        g1 = g2;
        h1 = mean_v(g1)? - target;
    }
    if !(h1.abs() <= tol) || !(g1 > 0.0) {
        return Err(BaselineError::NoConvergence { iters: SECANT_MAX_ITERS });
    }

    let mut per_node_scale = Vec::with_capacity(arrival_rates_hz.len());
    for (i, &lam) in arrival_rates_hz.iter().enumerate() {
        let drive = g1 * lam * dt_seconds / kf;
        let out = solve_equilibrium(p, drive, window)?;
        let v = out
            .report()
            .ok_or(BaselineError::Degenerate("no operating point at final gain"))?
            .v_star;
        if !(v > 0.0) {
            return Err(BaselineError::Degenerate("non-positive operating point"));
        }
        per_node_scale.push(reference_means[i] / v);
    }
    Ok(CalibrationResult { gain_i: g1, per_node_scale, reference_means })
}

/// Which state feeds the marking nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    /// Subthreshold `v` of one node model with the continuous pullback.
    NosState,
    /// Raw queue occupancy, normalised by the buffer.
    RawQueue,
    /// Single-pole low-passed normalised occupancy.
    LpQueue,
}

/// `p(x) = 1 / (1 + exp(-slope (x - midpoint)))` on normalised state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingSpec {
    pub slope: f64,
    pub midpoint: f64,
}

impl MarkingSpec {
    pub fn p(&self, x: f64) -> f64 {
        model::sigmoid(x - self.midpoint, self.slope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    pub params: NodeParams,
    /// Drive per admitted packet is `gain_nos / k`.
    pub gain_nos: f64,
    /// Threshold the pullback is anchored to.
    pub v_th: f64,
    pub reset: ResetSpec,
    /// Service rate, packets per second; service credit accrues
    /// deterministically and idles when the queue is empty.
    pub mu_rate: f64,
    /// Buffer bound, packets.
    pub k: usize,
    pub dt_seconds: f64,
    /// Low-pass pole in (0, 1]: `y += pole (q/k - y)`.
    pub lp_pole: f64,
    pub marking: MarkingSpec,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig {
            params: NodeParams {
                alpha: 0.02,
                kappa: 1.0,
                beta: 0.2,
                gamma: 0.0,
                lambda: 0.4,
                chi: 0.05,
                v_rest: 0.0,
                a: 0.05,
                b: 0.5,
                mu: 0.01,
            },
            gain_nos: 8.0,
            v_th: 0.6,
            // gentler than the event-reset defaults: the pullback enters
            // the Euler step directly, and r_reset * gate slope must stay
            // inside the unit-step stability region or the marking rings
            reset: ResetSpec {
                kind: model::ResetKind::ContinuousPullback,
                r_reset: 0.5,
                k_reset: 8.0,
                ..ResetSpec::default()
            },
            mu_rate: 400.0,
            k: 50,
            dt_seconds: crate::model::DEFAULT_DT_SECONDS,
            lp_pole: 0.08,
            marking: MarkingSpec { slope: 12.0, midpoint: 0.30 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopMetrics {
    /// First bin after which the queue stays within 5% of its settled
    /// level (floored at one packet).
    pub settling_bins: usize,
    /// Peak excursion above the settled level, relative to it.
    pub overshoot: f64,
    /// Standard deviation of the marking signal over the settled half.
    pub mark_jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopReport {
    pub p_trace: Vec<f64>,
    pub queue_trace: Vec<f64>,
    pub metrics: LoopMetrics,
    /// FNV-1a over the offered-load trace; equal across controllers by
    /// construction when they share one trace.
    pub load_hash: u64,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_load(trace: &[u32]) -> u64 {
    let mut bytes = Vec::with_capacity(trace.len() * 4);
    for &c in trace {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// One marking loop over a shared offered-load trace: per bin, the marking
/// probability comes from the controller's state at the bin's start, each
/// offered packet is independently dropped with that probability, survivors
/// enter a bounded queue served at `mu_rate`, and the controller state
/// advances from what it observes (admitted traffic for the node model, the
/// queue for the others). Thinning draws are shared across controllers
/// under one seed, so runs differ only through the marking signal.
pub fn closed_loop_run(
    controller: Controller,
    load_trace: &[u32],
    cfg: &ClosedLoopConfig,
    seed: u64,
) -> Result<ClosedLoopReport, BaselineError> {
    if load_trace.is_empty() {
        return Err(BaselineError::Degenerate("empty load trace"));
    }
    if cfg.k == 0 {
        return Err(BaselineError::Degenerate("buffer k must be >= 1"));
    }
    if !(cfg.mu_rate > 0.0) || !(cfg.dt_seconds > 0.0) {
        return Err(BaselineError::BadRate("mu_rate and dt must be positive"));
    }
    if !(cfg.lp_pole > 0.0 && cfg.lp_pole <= 1.0) {
        return Err(BaselineError::BadRate("lp_pole must be in (0, 1]"));
    }
    cfg.params.validate_structural()?;

    let kf = cfg.k as f64;
    let mut rng = rng::stream(seed, Domain::Queue, 1);
    let mut q = 0.0f64;
    let mut srv = 0.0f64;
    let mut v = cfg.params.v_rest;
    let mut u = 0.0f64;
    let mut lp = 0.0f64;

    let mut p_trace = Vec::with_capacity(load_trace.len());
    let mut queue_trace = Vec::with_capacity(load_trace.len());

    for &offered in load_trace {
        let x = match controller {
            Controller::NosState => v,
            Controller::RawQueue => q / kf,
            Controller::LpQueue => lp,
        };
        let p_mark = cfg.marking.p(x);

        let mut admitted = 0u32;
        for _ in 0..offered {
            if rng.gen_range(0.0..1.0) >= p_mark {
                admitted += 1;
            }
        }

        q = (q + f64::from(admitted)).min(kf);
        srv += cfg.mu_rate * cfg.dt_seconds;
        let dep = srv.floor().min(q);
        q -= dep;
        srv -= dep;
        if q == 0.0 {
            srv = srv.min(1.0); // the server does not bank idle credit
        }

        // the node model taps offered load upstream of the marker, like a
        // telemetry counter; feeding it post-drop traffic would couple the
        // sensor to its own actuation and ring
        let drive = cfg.gain_nos * f64::from(offered) / kf;
        let (mut dv, du) = model::drift(v, u, drive, &cfg.params)?;
        dv += model::pullback_term(v, cfg.v_th, &cfg.reset);
        v = (v + dv).clamp(cfg.params.v_rest, 1.5);
        u = (u + du).clamp(-10.0, 10.0);
        lp += cfg.lp_pole * (q / kf - lp);

        p_trace.push(p_mark);
        queue_trace.push(q);
    }

    let metrics = loop_metrics(&queue_trace, &p_trace);
    Ok(ClosedLoopReport { p_trace, queue_trace, metrics, load_hash: hash_load(load_trace) })
}

fn loop_metrics(queue: &[f64], p: &[f64]) -> LoopMetrics {
    let n = queue.len();
    let tail_start = n - n / 4;
    let settled =
        queue[tail_start..].iter().sum::<f64>() / (n - tail_start).max(1) as f64;
    let peak = queue.iter().cloned().fold(0.0f64, f64::max);
    let tol = (0.05 * (peak - settled)).max(1.0);
    let mut settling_bins = 0;
    for (t, &qv) in queue.iter().enumerate() {
        if (qv - settled).abs() > tol {
            settling_bins = t + 1;
        }
    }
    let overshoot = (peak - settled).max(0.0) / settled.max(1.0);

    let half = &p[n / 2..];
    let m = half.iter().sum::<f64>() / half.len() as f64;
    let var = half.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / half.len() as f64;
    LoopMetrics { settling_bins, overshoot, mark_jitter: var.sqrt() }
}
