//! Equilibrium solving and the local/network stability toolkit: scalar
//! fixed points, uniqueness rules, quadratic surrogate diagnostics,
//! Jacobian classification, coupling thresholds, existence margins,
//! Gershgorin certificates, and linear response statistics.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive::{DriveKind, DriveSpec};
use crate::graph::{spectral_stats, CouplingGraph, GraphError};
use crate::model::{f_sat, f_sat_slope, net_drain, NodeParams, SLOPE_MAX_COEFF};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("interval must satisfy lo < hi")]
    BadInterval,
    #[error("node is not locally stable: variance undefined")]
    UnstableNode,
    #[error("shot-noise drive required")]
    NotShotNoise,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("v_star vector length {0} does not match graph size {1}")]
    VStarLenMismatch(usize, usize),
}

/// `L = beta - lambda - chi - a b/(a+mu)` and `C = gamma + chi v_rest + I`.
/// The scalar fixed-point residual is `F(v) = f_sat(v) + L v + C`.
pub fn lc_coefficients(p: &NodeParams, i_star: f64) -> (f64, f64) {
    let l = p.beta - p.lambda - p.chi - p.reduce_ratio();
    let c = p.gamma + p.chi * p.v_rest + i_star;
    (l, c)
}

/// Fixed-point residual `F(v)`.
pub fn f_residual(p: &NodeParams, i_star: f64, v: f64) -> f64 {
    let (l, c) = lc_coefficients(p, i_star);
    f_sat(v, p) + l * v + c
}

/// `F'(v) = f_sat'(v) + L`.
pub fn f_residual_slope(p: &NodeParams, i_star: f64, v: f64) -> f64 {
    let (l, _) = lc_coefficients(p, i_star);
    f_sat_slope(v, p) + l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub v_star: f64,
    /// `a b/(a+mu) * v_star` exactly.
    pub u_star: f64,
    pub residual: f64,
    /// True when `F' > 0` across the search interval, which guarantees at
    /// most one root there.
    pub unique_on_interval: bool,
    pub l_coef: f64,
    pub c_coef: f64,
    /// `L^2 - 4 alpha C` of the quadratic surrogate.
    pub discriminant: f64,
    /// Every bracketed root on the interval, ascending. `v_star` is the
    /// smallest (the operating low-occupancy branch).
    pub all_roots: Vec<f64>,
}

/// Outcome of the bracketing solve: absence of a sign change is a result,
/// not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SolveOutcome {
    Found(EquilibriumReport),
    NoEquilibrium { f_lo: f64, f_hi: f64 },
}

impl SolveOutcome {
    pub fn report(&self) -> Option<&EquilibriumReport> {
        match self {
            SolveOutcome::Found(r) => Some(r),
            SolveOutcome::NoEquilibrium { .. } => None,
        }
    }
}

/// Grid resolution for sign-change bracketing.
pub const SOLVE_GRID: usize = 1024;
/// Residual target for bisection.
pub const SOLVE_TOL: f64 = 1e-12;

fn bisect_root(mut lo: f64, mut hi: f64, mut f_lo: f64, f: impl Fn(f64) -> f64) -> f64 {
    // invariant: sign change inside [lo, hi]
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < SOLVE_TOL {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// All bracketed roots of `F` on `[lo, hi]`, ascending, deduplicated.
pub fn all_equilibria(p: &NodeParams, i_star: f64, lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let f = |v: f64| f_residual(p, i_star, v);
    let n = grid.max(2);
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        let tol = 1e-9 * (1.0 + r.abs());
        if roots.iter().all(|&x| (x - r).abs() > tol) {
            roots.push(r);
        }
    };
    let mut prev_v = lo;
    let mut prev_f = f(lo);
    if prev_f == 0.0 {
        push(lo, &mut roots);
    }
    for k in 1..n {
        let v = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        let fv = f(v);
        if fv == 0.0 {
            push(v, &mut roots);
        } else if prev_f != 0.0 && (fv > 0.0) != (prev_f > 0.0) {
            push(bisect_root(prev_v, v, prev_f, f), &mut roots);
        }
        prev_v = v;
        prev_f = fv;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Exact minimum of `f_sat'` over `[lo, hi]`: the slope is piecewise
/// monotone with critical points at `v = ±1/sqrt(3 kappa)`, so checking
/// the endpoints plus any interior critical point covers it.
pub fn fprime_interval_min(p: &NodeParams, lo: f64, hi: f64) -> f64 {
    let vc = 1.0 / (3.0 * p.kappa).sqrt();
    let mut m = f_sat_slope(lo, p).min(f_sat_slope(hi, p));
    for c in [-vc, vc] {
        if lo < c && c < hi {
            m = m.min(f_sat_slope(c, p));
        }
    }
    m
}

/// Locates the operating equilibrium by sign-change bracketing on a
/// [`SOLVE_GRID`]-point grid followed by bisection to `|F| <` [`SOLVE_TOL`].
pub fn solve_equilibrium(
    p: &NodeParams,
    i_star: f64,
    interval: (f64, f64),
) -> Result<SolveOutcome, StabilityError> {
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(StabilityError::BadInterval);
    }
    let roots = all_equilibria(p, i_star, lo, hi, SOLVE_GRID);
    let (l, c) = lc_coefficients(p, i_star);
    if roots.is_empty() {
        return Ok(SolveOutcome::NoEquilibrium {
            f_lo: f_residual(p, i_star, lo),
            f_hi: f_residual(p, i_star, hi),
        });
    }
    let unique = fprime_interval_min(p, lo, hi) + l > 0.0;
    let v_star = roots[0];
    Ok(SolveOutcome::Found(EquilibriumReport {
        v_star,
        u_star: p.reduce_ratio() * v_star,
        residual: f_residual(p, i_star, v_star),
        unique_on_interval: unique,
        l_coef: l,
        c_coef: c,
        discriminant: l * l - 4.0 * p.alpha * c,
        all_roots: if unique { roots[..1].to_vec() } else { roots },
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// `L > -(3 sqrt 3 / 8) alpha / sqrt(kappa)`.
    pub lemma_ok: bool,
    /// `lambda + chi + a b/(a+mu)`.
    pub corollary_lhs: f64,
    /// `(3 sqrt 3 / 8) alpha / sqrt(kappa) - beta`.
    pub corollary_rhs: f64,
    /// `corollary_lhs - corollary_rhs`; positive means headroom.
    pub rule_margin_epsilon: f64,
}

/// Service-dominance uniqueness rules. The two published forms are not
/// algebraically interchangeable (they differ in how the linear relief
/// `beta` enters), so both are reported verbatim.
pub fn uniqueness_and_rule_check(p: &NodeParams) -> UniquenessReport {
    let (l, _) = lc_coefficients(p, 0.0);
    let slope_max = SLOPE_MAX_COEFF * p.alpha / p.kappa.sqrt();
    let lhs = p.lambda + p.chi + p.reduce_ratio();
    let rhs = slope_max - p.beta;
    UniquenessReport {
        lemma_ok: l > -slope_max,
        corollary_lhs: lhs,
        corollary_rhs: rhs,
        rule_margin_epsilon: lhs - rhs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticDiagnostics {
    pub l_coef: f64,
    pub c_coef: f64,
    /// `L^2 - 4 alpha C`.
    pub discriminant: f64,
    /// `L^2 / (4 alpha)`, the largest `C` with real roots.
    pub quad_bound: f64,
    /// Ascending real roots of `alpha v^2 + L v + C = 0`; `None` flags the
    /// no-real-root (parameter mismatch) regime.
    pub roots: Option<[f64; 2]>,
}

/// Small-`v` quadratic surrogate of the fixed-point equation.
pub fn quadratic_diagnostics(p: &NodeParams, i_star: f64) -> QuadraticDiagnostics {
    let (l, c) = lc_coefficients(p, i_star);
    let d = l * l - 4.0 * p.alpha * c;
    let roots = if d >= 0.0 {
        let s = d.sqrt();
        let mut r = [(-l - s) / (2.0 * p.alpha), (-l + s) / (2.0 * p.alpha)];
        if r[0] > r[1] {
            r.swap(0, 1);
        }
        Some(r)
    } else {
        None
    };
    QuadraticDiagnostics { l_coef: l, c_coef: c, discriminant: d, quad_bound: l * l / (4.0 * p.alpha), roots }
}

/// Steady-state sensitivity of `v*` to drive: `-1 / (f'(v*) + L)`.
pub fn dc_gain(p: &NodeParams, v_star: f64) -> f64 {
    let (l, _) = lc_coefficients(p, 0.0);
    -1.0 / (f_sat_slope(v_star, p) + l)
}

/// Equivalent published factorisation `(a+mu) / (a b - (a+mu) d_bar)` with
/// `d_bar = f'(v*) + beta - lambda - chi`.
pub fn dc_gain_factored(p: &NodeParams, v_star: f64) -> f64 {
    let d_bar = node_drift_slope(p, v_star);
    (p.a + p.mu) / (p.a * p.b - (p.a + p.mu) * d_bar)
}

/// `d_bar = f'(v*) + beta - lambda - chi`, the v-equation's own slope.
pub fn node_drift_slope(p: &NodeParams, v_star: f64) -> f64 {
    f_sat_slope(v_star, p) + p.beta - p.lambda - p.chi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Node,
    Spiral,
    Saddle,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalStability {
    /// `T = f'(v*) + beta - lambda - chi - (a + mu)`.
    pub trace_t: f64,
    /// `Delta = a b - (f'(v*) + beta - lambda - chi)(a + mu)`.
    pub det_delta: f64,
    pub stable: bool,
    pub classification: Classification,
    /// Dominant linear return time in bins; `None` when unstable.
    pub tau_lin: Option<f64>,
    pub dc_gain: f64,
}

/// Two-by-two Jacobian classification at an operating point.
pub fn local_jacobian(p: &NodeParams, v_star: f64) -> LocalStability {
    let d_bar = node_drift_slope(p, v_star);
    let t = d_bar - (p.a + p.mu);
    let delta = p.a * p.b - d_bar * (p.a + p.mu);
    let stable = t < 0.0 && delta > 0.0;
    let classification = if delta < 0.0 {
        Classification::Saddle
    } else if t == 0.0 || delta == 0.0 {
        Classification::Marginal
    } else if t * t >= 4.0 * delta {
        Classification::Node
    } else {
        Classification::Spiral
    };
    let tau_lin = if stable {
        let disc = t * t - 4.0 * delta;
        let slowest_decay = if disc >= 0.0 {
            // two real negative eigenvalues; the one nearest zero rules
            -(t + disc.sqrt()) / 2.0
        } else {
            -t / 2.0
        };
        Some(1.0 / slowest_decay)
    } else {
        None
    };
    LocalStability { trace_t: t, det_delta: delta, stable, classification, tau_lin, dc_gain: dc_gain(p, v_star) }
}

/// Eigenvalues of the local Jacobian `[[d_bar, -1], [ab, -(a+mu)]]`.
pub fn local_eigenvalues(p: &NodeParams, v_star: f64) -> [num_complex::Complex<f64>; 2] {
    let d_bar = node_drift_slope(p, v_star);
    let t = d_bar - (p.a + p.mu);
    let delta = p.a * p.b - d_bar * (p.a + p.mu);
    let disc = t * t - 4.0 * delta;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [
            num_complex::Complex::new((t - s) / 2.0, 0.0),
            num_complex::Complex::new((t + s) / 2.0, 0.0),
        ]
    } else {
        let s = (-disc).sqrt() / 2.0;
        [
            num_complex::Complex::new(t / 2.0, -s),
            num_complex::Complex::new(t / 2.0, s),
        ]
    }
}

/// Local Jacobian as a dense matrix, for oracle comparisons.
pub fn local_jacobian_matrix(p: &NodeParams, v_star: f64) -> Matrix2<f64> {
    let d_bar = node_drift_slope(p, v_star);
    Matrix2::new(d_bar, -1.0, p.a * p.b, -(p.a + p.mu))
}

/// Operating point for network-level quantities: one shared `v*` or one
/// per node (weighted by the Perron mode).
#[derive(Debug, Clone, PartialEq)]
pub enum OperatingPoint {
    Homogeneous(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkThresholds {
    /// Net drain `Lambda = lambda + chi + a b/(a+mu) - beta`.
    pub lambda_drain: f64,
    /// Perron-weighted (or shared) drift slope `d_bar`.
    pub d_bar: f64,
    /// Perron-weighted (or shared) `f'(v*)`.
    pub fprime_eff: f64,
    /// `min{(a+mu) - d_bar, a b/(a+mu) - d_bar}`.
    pub k_star: f64,
    /// `k_star / rho(W)`; `None` when `rho = 0` (infinite headroom).
    pub g_star: Option<f64>,
    /// `Lambda - g rho(W) f'(v*)` at the graph's own gain.
    pub delta_net: f64,
    pub rho: f64,
}

/// Critical coupling scale and margin from the Perron-mode reduction.
pub fn network_thresholds(
    p: &NodeParams,
    at: &OperatingPoint,
    wg: &CouplingGraph,
) -> Result<NetworkThresholds, StabilityError> {
    let stats = spectral_stats(wg)?;
    let (fprime_eff, d_bar) = match at {
        OperatingPoint::Homogeneous(v) => {
            let f = f_sat_slope(*v, p);
            (f, f + p.beta - p.lambda - p.chi)
        }
        OperatingPoint::PerNode(vs) => {
            if vs.len() != wg.n() {
                return Err(StabilityError::VStarLenMismatch(vs.len(), wg.n()));
            }
            // homogeneous shortcut when the spread is negligible
            let spread = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread <= 1e-9 {
                let f = f_sat_slope(vs[0], p);
                (f, f + p.beta - p.lambda - p.chi)
            } else {
                let phi = &stats.perron_vector;
                let wsum: f64 = phi.iter().map(|x| x * x).sum();
                let f = vs
                    .iter()
                    .zip(phi)
                    .map(|(v, w)| w * w * f_sat_slope(*v, p))
                    .sum::<f64>()
                    / wsum;
                (f, f + p.beta - p.lambda - p.chi)
            }
        }
    };
    let lambda_drain = net_drain(p);
    let k_star = ((p.a + p.mu) - d_bar).min(p.reduce_ratio() - d_bar);
    let g_star = if stats.rho > 0.0 { Some(k_star / stats.rho) } else { None };
    Ok(NetworkThresholds {
        lambda_drain,
        d_bar,
        fprime_eff,
        k_star,
        g_star,
        delta_net: lambda_drain - wg.g * stats.rho * fprime_eff,
        rho: stats.rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceMargins {
    /// Worst-case constant term `gamma + chi v_rest + I_max`.
    pub c_worst: f64,
    /// `c_worst <= alpha/kappa` (meaningful when `L <= 0`).
    pub sat_cap_ok: bool,
    pub l_nonpositive: bool,
    /// `c_worst <= L^2/(4 alpha)`.
    pub quad_bound_ok: bool,
    /// `gamma + chi v_rest + ||W||_inf ||S*||_inf <= L^2/(4 alpha)`.
    pub sufic_ok: bool,
    /// `L^2/(4 alpha) - (gamma + I_max)`.
    pub delta_op: f64,
}

/// Conservative equilibrium-existence margins under a drive ceiling and
/// steady presynaptic output `s_star`.
pub fn existence_and_margins(
    p: &NodeParams,
    wg: &CouplingGraph,
    s_star: &[f64],
    i_max: f64,
) -> Result<ExistenceMargins, StabilityError> {
    if s_star.len() != wg.n() {
        return Err(StabilityError::VStarLenMismatch(s_star.len(), wg.n()));
    }
    let (l, _) = lc_coefficients(p, 0.0);
    let quad_bound = l * l / (4.0 * p.alpha);
    let c_worst = p.gamma + p.chi * p.v_rest + i_max;
    let stats = spectral_stats(wg)?;
    let s_max = s_star.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(ExistenceMargins {
        c_worst,
        sat_cap_ok: c_worst <= p.alpha / p.kappa,
        l_nonpositive: l <= 0.0,
        quad_bound_ok: c_worst <= quad_bound,
        sufic_ok: p.gamma + p.chi * p.v_rest + stats.norm_inf * s_max <= quad_bound,
        delta_op: quad_bound - (p.gamma + i_max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GershgorinReport {
    /// `min_i (-d_bar_i - 1) / sum_j |W_ij|` over rows with nonzero sums;
    /// `None` when the graph has no edges. Negative means no certificate.
    pub g_bound: Option<f64>,
    /// Same centre bound divided by the row-sum norm of the whole matrix.
    pub g_bound_norm: Option<f64>,
    /// Perron-prediction heuristic `k*/||W||_inf` for comparison.
    pub k_over_norm_inf: Option<f64>,
    /// Bottom-block rows certified: `|ab| < a + mu`.
    pub bottom_block_ok: bool,
}

/// Row-circle coupling certificates. The `-1` in the numerators is the
/// recovery-coupling entry that sits in every v-row's radius.
pub fn gershgorin_bounds(
    p: &NodeParams,
    v_star: &[f64],
    wg: &CouplingGraph,
) -> Result<GershgorinReport, StabilityError> {
    if v_star.len() != wg.n() {
        return Err(StabilityError::VStarLenMismatch(v_star.len(), wg.n()));
    }
    let mut row_sums = vec![0.0; wg.n()];
    for e in wg.entries() {
        row_sums[e.row] += e.weight.abs();
    }
    let mut g_bound = f64::INFINITY;
    let mut any = false;
    for (i, &rs) in row_sums.iter().enumerate() {
        if rs > 0.0 {
            any = true;
            g_bound = g_bound.min((-node_drift_slope(p, v_star[i]) - 1.0) / rs);
        }
    }
    let norm_inf = row_sums.iter().cloned().fold(0.0, f64::max);
    let worst_centre = v_star
        .iter()
        .map(|&v| -node_drift_slope(p, v) - 1.0)
        .fold(f64::INFINITY, f64::min);
    let (g_bound_norm, k_over) = if norm_inf > 0.0 {
        let nt = network_thresholds(p, &OperatingPoint::PerNode(v_star.to_vec()), wg)?;
        (Some(worst_centre / norm_inf), Some(nt.k_star / norm_inf))
    } else {
        (None, None)
    };
    Ok(GershgorinReport {
        g_bound: if any { Some(g_bound) } else { None },
        g_bound_norm,
        k_over_norm_inf: k_over,
        bottom_block_ok: (p.a * p.b).abs() < p.a + p.mu,
    })
}

/// Small-signal transfer function from drive fluctuations to `v`:
/// `H_v(s) = (s + (a+mu)) / ((s - d_bar)(s + (a+mu)) + ab)`, `s` in
/// per-bin units.
pub fn transfer_gain_sq(p: &NodeParams, v_star: f64, omega_per_bin: f64) -> f64 {
    let d_bar = node_drift_slope(p, v_star);
    let apm = p.a + p.mu;
    let s = num_complex::Complex::new(0.0, omega_per_bin);
    let h = (s + apm) / ((s - d_bar) * (s + apm) + p.a * p.b);
    h.norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferReport {
    /// `(a+mu) / (ab - (a+mu) d_bar)`.
    pub dc: f64,
    /// Stationary variance of `v` under the linearised dynamics.
    pub sigma_v2: f64,
}

/// Upper integration limit multiplier: beyond `1e3 / tau_s` the Lorentzian
/// tail contributes below the quadrature tolerance.
pub const VARIANCE_OMEGA_SPAN: f64 = 1e3;

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, rel_tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * rel_tol * (left + right).abs().max(1e-300) {
        return left + right + err / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, rel_tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, rel_tol, depth - 1)
}

/// Adaptive Simpson quadrature to relative tolerance `rel_tol`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    // seed with a modest uniform split so narrow features are not skipped
    let n_seed = 64;
    let mut total = 0.0;
    for k in 0..n_seed {
        let x0 = a + (b - a) * k as f64 / n_seed as f64;
        let x1 = a + (b - a) * (k + 1) as f64 / n_seed as f64;
        let xm = 0.5 * (x0 + x1);
        let f0 = f(x0);
        let fm = f(xm);
        let f1 = f(x1);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += adaptive_simpson(&f, x0, x1, f0, fm, f1, whole, rel_tol, 40);
    }
    total
}

/// DC gain and stationary variance of `v` for a locally stable node under
/// a smoothed shot-noise drive. The spectral integral runs over
/// `[0, 1e3/tau_s]` (doubled for symmetry) at relative tolerance 1e-6,
/// evaluated in per-bin units where the result is unit-free.
pub fn transfer_and_variance(
    p: &NodeParams,
    v_star: f64,
    drive: &DriveSpec,
    dt_seconds: f64,
) -> Result<TransferReport, StabilityError> {
    let local = local_jacobian(p, v_star);
    if !local.stable {
        return Err(StabilityError::UnstableNode);
    }
    let DriveKind::ShotNoise { rate_hz, amplitude, tau_s_seconds } = &drive.kind else {
        return Err(StabilityError::NotShotNoise);
    };
    let dc = dc_gain_factored(p, v_star);
    if *tau_s_seconds == 0.0 || *rate_hz == 0.0 {
        return Ok(TransferReport { dc, sigma_v2: 0.0 });
    }
    // per-bin units: rate per bin, tau_s in bins
    let rate_bin = rate_hz * dt_seconds;
    let tau_bin = tau_s_seconds / dt_seconds;
    let m2 = amplitude.second_moment() * drive.gain * drive.gain;
    // two-sided density transforming the autocovariance var * exp(-|lag|/tau);
    // AnalyticShotStats::psd publishes a different normalisation and must not
    // be substituted here or the variance comes out short by tau_bin/2
    let var = rate_bin * m2 * tau_bin / 2.0;
    let psd = |omega: f64| 2.0 * var * tau_bin / (1.0 + omega * omega * tau_bin * tau_bin);
    let integrand = |omega: f64| transfer_gain_sq(p, v_star, omega) * psd(omega);
    let upper = VARIANCE_OMEGA_SPAN / tau_bin;
    let integral = integrate_adaptive(integrand, 0.0, upper, 1e-6);
    Ok(TransferReport { dc, sigma_v2: 2.0 * integral / (2.0 * std::f64::consts::PI) })
}

/// Finite-precision robustness: the stability margin must exceed the
/// first-order error budget
/// `g rho f' (delta_f' + delta_W + delta_g) + eps_lut r_reset E|v - c|`.
#[allow(clippy::too_many_arguments)]
pub fn quantised_margin_check(
    delta_net: f64,
    delta_fprime: f64,
    delta_w: f64,
    delta_g: f64,
    eps_lut: f64,
    r_reset: f64,
    mean_abs_v_minus_c: f64,
    g: f64,
    rho: f64,
    fprime: f64,
) -> bool {
    debug_assert!(delta_fprime >= 0.0 && delta_w >= 0.0 && delta_g >= 0.0 && eps_lut >= 0.0);
    let rhs = g * rho * fprime * (delta_fprime + delta_w + delta_g)
        + eps_lut * r_reset * mean_abs_v_minus_c;
    delta_net > rhs
}

/// Dense 2N x 2N block Jacobian `[[D + gW, -I], [ab I, -(a+mu) I]]` with
/// `D = diag(d_bar_i)`.
pub fn block_jacobian(p: &NodeParams, v_star: &[f64], wg: &CouplingGraph, g: f64) -> DMatrix<f64> {
    let n = wg.n();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for (i, &v) in v_star.iter().enumerate() {
        j[(i, i)] = node_drift_slope(p, v);
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = p.a * p.b;
        j[(n + i, n + i)] = -(p.a + p.mu);
    }
    for e in wg.entries() {
        j[(e.row, e.col)] += g * e.weight;
    }
    j
}
