//! Equilibrium continuation in the drive level, fold and oscillatory-onset
//! markers, and coupling-gain eigenvalue sweeps of the network block
//! Jacobian with the spectral-collapse check.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{spectral_stats, CouplingGraph, GraphError, DENSE_FALLBACK_MAX_N};
use crate::model::{f_sat, f_sat_slope, NodeParams};
use crate::stability::{
    block_jacobian, lc_coefficients, local_jacobian, network_thresholds, node_drift_slope,
    OperatingPoint, StabilityError,
};

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("drive range must satisfy lo < hi")]
    BadRange,
    #[error("need at least 2 continuation steps")]
    BadSteps,
    #[error("no equilibrium anywhere in the requested drive range")]
    EmptyBranch,
    #[error("gain grid must be non-empty and strictly increasing")]
    BadGainGrid,
    #[error("graph size {0} exceeds the dense eigensolve budget {1}")]
    TooLarge(usize, usize),
    #[error("mode reduction needs a shared operating point across nodes")]
    HeterogeneousOperatingPoint,
    #[error("v_star vector length {0} does not match graph size {1}")]
    VStarLenMismatch(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// One equilibrium sample along the continuation branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub i: f64,
    pub v_star: f64,
    pub stable: bool,
    pub t: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    /// Branch samples ordered by drive level (folded regions repeat I
    /// values with their coexisting states in ascending v).
    pub branch: Vec<BranchPoint>,
    /// Fold of the operating branch: `(I, v)` where `dF/dv = 0`.
    pub sn: Option<(f64, f64)>,
    /// Oscillatory onset: `(I, v)` where `T = 0` with `Delta > 0`.
    pub hopf: Option<(f64, f64)>,
    /// `a b > (a + mu)^2`; exactly gates the Hopf marker because `Delta`
    /// at a `T = 0` crossing equals `a b - (a + mu)^2` identically.
    pub hopf_admissible: bool,
}

/// Drive level that places an equilibrium at `v`:
/// `I(v) = -(f_sat(v) + L v) - gamma - chi v_rest`. The equilibrium set is
/// exactly the graph of this function, which is what makes single-parameter
/// continuation a one-dimensional scan.
pub fn input_on_branch(p: &NodeParams, v: f64) -> f64 {
    let (l, _) = lc_coefficients(p, 0.0);
    -(f_sat(v, p) + l * v) - p.gamma - p.chi * p.v_rest
}

/// Marker refinement target on the bracketing derivative.
pub const MARKER_TOL: f64 = 1e-10;

fn refine_zero(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < MARKER_TOL {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every solution of `f_sat'(v) = c`, exactly: the slope is odd in v and
/// unimodal on v > 0 (rising to its peak, then falling back to zero), so
/// each monotone segment is bisected instead of scanned. Returns at most
/// two points, ascending. Tangency (`|c| = slope_max`) and `c = 0` report
/// nothing: neither is a transversal crossing.
pub fn slope_crossings(p: &NodeParams, c: f64) -> Vec<f64> {
    if c < 0.0 {
        return slope_crossings(p, -c).into_iter().rev().map(|v| -v).collect();
    }
    let peak = crate::model::SLOPE_MAX_COEFF * p.alpha / p.kappa.sqrt();
    if c == 0.0 || c >= peak {
        return Vec::new();
    }
    let argmax = 1.0 / (3.0 * p.kappa).sqrt();
    let g = |v: f64| f_sat_slope(v, p) - c;
    // rising segment (0, argmax)
    let rise = refine_zero(0.0, argmax, g);
    // falling segment (argmax, v_big): f' <= 2 alpha / (kappa^2 v^3)
    let mut v_big = (2.0 * argmax).max((16.0 * p.alpha / (p.kappa * p.kappa * c)).cbrt());
    while g(v_big) > 0.0 {
        v_big *= 2.0;
    }
    let fall = refine_zero(argmax, v_big, g);
    vec![rise, fall]
}

/// v-window guaranteed to contain every equilibrium whose drive level lies
/// in `[lo, hi]`: `|I(v)|` grows like `|L v|` once saturation flattens.
fn branch_window(p: &NodeParams, lo: f64, hi: f64) -> (f64, f64) {
    let (l, _) = lc_coefficients(p, 0.0);
    let clutter = p.alpha / p.kappa + p.gamma.abs() + (p.chi * p.v_rest).abs();
    let reach = (clutter + lo.abs().max(hi.abs())) / l.abs().max(0.05) + 1.0;
    (-reach, reach)
}

/// Scans the equilibrium branch over a drive range, flags stability of
/// every sample, and locates fold and oscillatory-onset markers by
/// bisection on the v-parametrised curve.
pub fn continue_and_classify(
    p: &NodeParams,
    i_range: (f64, f64),
    steps: usize,
) -> Result<ContinuationReport, ContinuationError> {
    let (lo, hi) = i_range;
    if !(lo < hi) {
        return Err(ContinuationError::BadRange);
    }
    if steps < 2 {
        return Err(ContinuationError::BadSteps);
    }
    let (v_lo, v_hi) = branch_window(p, lo, hi);

    // branch samples: every root at each drive level, ascending in I
    let mut branch = Vec::new();
    for k in 0..steps {
        let i = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
        for v in crate::stability::all_equilibria(p, i, v_lo, v_hi, 1024) {
            let s = local_jacobian(p, v);
            branch.push(BranchPoint { i, v_star: v, stable: s.stable, t: s.trace_t, delta: s.det_delta });
        }
    }
    if branch.is_empty() {
        return Err(ContinuationError::EmptyBranch);
    }

    let (l, _) = lc_coefficients(p, 0.0);
    let in_range = |i: f64| i >= lo && i <= hi;

    // folds: the branch is tangent to a drive level where dF/dv = 0,
    // i.e. f'(v) = -L; the one at the smallest state level ends the
    // operating branch
    let folds: Vec<(f64, f64)> = slope_crossings(p, -l)
        .into_iter()
        .map(|v| (input_on_branch(p, v), v))
        .filter(|&(i, _)| in_range(i))
        .collect();
    let sn = folds.first().copied();

    // oscillatory onset: T = 0 means f'(v) = (a+mu) + lambda + chi - beta;
    // the determinant there equals ab - (a+mu)^2 identically, so the
    // admissibility predicate is the whole Delta > 0 gate
    let apm = p.a + p.mu;
    let hopf_admissible = p.a * p.b > apm * apm;
    let theta_t = apm + p.lambda + p.chi - p.beta;
    let mut hopf_points: Vec<(f64, f64)> = slope_crossings(p, theta_t)
        .into_iter()
        .map(|v| (input_on_branch(p, v), v))
        .filter(|&(i, _)| in_range(i))
        .collect();
    hopf_points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let hopf = if hopf_admissible { hopf_points.first().copied() } else { None };

    Ok(ContinuationReport { branch, sn, hopf, hopf_admissible })
}

/// How the sweep evaluates the leading eigenvalue of the block Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethod {
    /// Dense eigensolve of the full 2N x 2N matrix at every gain.
    Dense,
    /// Eigendecompose the coupling matrix once, then close each mode with
    /// the 2 x 2 block. Exact when all nodes share one operating point:
    /// the block Jacobian is a matrix function of W alone, so its spectrum
    /// is the union of the per-mode closures.
    ModeReduced,
    /// [`SweepMethod::ModeReduced`] for homogeneous operating points above
    /// [`DENSE_AUTO_MAX`] states, [`SweepMethod::Dense`] otherwise.
    Auto,
}

/// Largest full system the Auto policy still eigensolves densely per gain.
pub const DENSE_AUTO_MAX: usize = 256;
/// Bisection target on the leading real part at the reported threshold.
pub const SWEEP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepStatus {
    Bracketed,
    StableThroughout,
    UnstableThroughout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSweepReport {
    /// First stability crossing, refined until `|max Re lambda| <` [`SWEEP_TOL`].
    pub g_star: Option<f64>,
    /// `(g, max Re lambda)` at every grid gain.
    pub leading_re: Vec<(f64, f64)>,
    /// `rho(W) * g_star / k*`; near one when the rank-one reduction holds.
    pub collapse_ratio: Option<f64>,
    pub status: SweepStatus,
}

fn max_re_dense(p: &NodeParams, v_star: &[f64], wg: &CouplingGraph, g: f64) -> f64 {
    let j = block_jacobian(p, v_star, wg, g);
    j.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Closes one coupling mode `w` with the recovery loop and returns the
/// larger real part of the resulting eigenvalue pair.
fn mode_max_re(p: &NodeParams, d_bar: f64, g: f64, w: Complex<f64>) -> f64 {
    let top = Complex::new(d_bar, 0.0) + g * w;
    let apm = p.a + p.mu;
    let tr = top - apm;
    let det = Complex::new(p.a * p.b, 0.0) - top * apm;
    let disc = (tr * tr - 4.0 * det).sqrt();
    (0.5 * (tr + disc)).re.max((0.5 * (tr - disc)).re)
}

fn max_re_reduced(p: &NodeParams, d_bar: f64, modes: &[Complex<f64>], g: f64) -> f64 {
    modes
        .iter()
        .map(|&w| mode_max_re(p, d_bar, g, w))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn homogeneous_v(v_star: &[f64]) -> Option<f64> {
    if v_star.is_empty() {
        return None;
    }
    let max = v_star.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v_star.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min <= 1e-9).then_some(v_star[0])
}

/// Sweeps the coupling gain over `g_grid`, recording the leading real part
/// of the network Jacobian spectrum, and brackets the first crossing into
/// the right half-plane. See [`eig_sweep_gstar_with`] for method control.
pub fn eig_sweep_gstar(
    p: &NodeParams,
    v_star: &[f64],
    wg: &CouplingGraph,
    g_grid: &[f64],
) -> Result<GainSweepReport, ContinuationError> {
    eig_sweep_gstar_with(p, v_star, wg, g_grid, SweepMethod::Auto)
}

pub fn eig_sweep_gstar_with(
    p: &NodeParams,
    v_star: &[f64],
    wg: &CouplingGraph,
    g_grid: &[f64],
    method: SweepMethod,
) -> Result<GainSweepReport, ContinuationError> {
    let n = wg.n();
    if n > DENSE_FALLBACK_MAX_N {
        return Err(ContinuationError::TooLarge(n, DENSE_FALLBACK_MAX_N));
    }
    if v_star.len() != n {
        return Err(ContinuationError::VStarLenMismatch(v_star.len(), n));
    }
    if g_grid.is_empty() || g_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ContinuationError::BadGainGrid);
    }

    let homog = homogeneous_v(v_star);
    let use_reduced = match method {
        SweepMethod::Dense => false,
        SweepMethod::ModeReduced => {
            if homog.is_none() {
                return Err(ContinuationError::HeterogeneousOperatingPoint);
            }
            true
        }
        SweepMethod::Auto => homog.is_some() && 2 * n > DENSE_AUTO_MAX,
    };

    // mode spectrum is gain-independent, so one coupling eigensolve serves
    // the whole sweep and the bisection
    let reduced: Option<(f64, Vec<Complex<f64>>)> = if use_reduced {
        let v = homog.expect("reduced path requires a shared operating point");
        let d_bar = node_drift_slope(p, v);
        let w: DMatrix<f64> = wg.to_dense();
        let modes: Vec<Complex<f64>> =
            w.complex_eigenvalues().iter().map(|z| Complex::new(z.re, z.im)).collect();
        Some((d_bar, modes))
    } else {
        None
    };
    let eval = |g: f64| -> f64 {
        match &reduced {
            Some((d_bar, modes)) => max_re_reduced(p, *d_bar, modes, g),
            None => max_re_dense(p, v_star, wg, g),
        }
    };

    let leading_re: Vec<(f64, f64)> = g_grid.iter().map(|&g| (g, eval(g))).collect();

    let crossing = leading_re
        .windows(2)
        .find(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .map(|w| (w[0].0, w[1].0, w[0].1));
    let (g_star, status) = match crossing {
        None => {
            let status = if leading_re[0].1 < 0.0 {
                SweepStatus::StableThroughout
            } else {
                SweepStatus::UnstableThroughout
            };
            (None, status)
        }
        Some((mut g_lo, mut g_hi, mut f_lo)) => {
            let mut g_star = 0.5 * (g_lo + g_hi);
            for _ in 0..200 {
                g_star = 0.5 * (g_lo + g_hi);
                let f_mid = eval(g_star);
                if f_mid.abs() < SWEEP_TOL {
                    break;
                }
                if (f_mid < 0.0) == (f_lo < 0.0) {
                    g_lo = g_star;
                    f_lo = f_mid;
                } else {
                    g_hi = g_star;
                }
            }
            (Some(g_star), SweepStatus::Bracketed)
        }
    };

    let collapse_ratio = match g_star {
        Some(gs) => {
            let nt = network_thresholds(p, &OperatingPoint::PerNode(v_star.to_vec()), wg)?;
            let stats = spectral_stats(wg)?;
            (nt.k_star.abs() > 0.0).then(|| stats.rho * gs / nt.k_star)
        }
        None => None,
    };

    Ok(GainSweepReport { g_star, leading_re, collapse_ratio, status })
}
