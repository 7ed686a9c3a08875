//! Exogenous arrival drives: compound-Poisson shot noise with causal
//! exponential smoothing, two-state Markov-modulated Poisson counts, and
//! deterministic trace playback.
//!
//! Shot-noise traces are exact samples of the continuous-time process at
//! bin instants: per-bin event counts are Poisson, each event gets a
//! uniform age inside its bin, and the smoother carries
//! `s <- s * exp(-dt/tau_s) + sum_k A_k * exp(-age_k/tau_s)` forward. The
//! stationary mean, variance, and autocovariance of the sampled series
//! therefore equal the closed forms in [`analytic_shot_stats`] with no
//! discretisation bias. `tau_s = 0` degenerates to per-bin impulses.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Domain};

#[derive(Debug, Error)]
pub enum DriveError {
    #[error("horizon must be >= 1")]
    BadHorizon,
    #[error("dt must be > 0")]
    BadDt,
    #[error("shot-noise spec required for analytic statistics")]
    NotShotNoise,
    #[error("invalid drive parameter: {0}")]
    BadParam(&'static str),
    #[error("trace file error: {0}")]
    Trace(String),
}

/// Event amplitude law. All options have finite second moments, which the
/// variance and spectral formulas require.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AmplitudeDist {
    Constant { a: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl AmplitudeDist {
    pub fn validate(&self) -> Result<(), DriveError> {
        match *self {
            AmplitudeDist::Constant { a } if a >= 0.0 && a.is_finite() => Ok(()),
            AmplitudeDist::Uniform { lo, hi } if 0.0 <= lo && lo <= hi && hi.is_finite() => Ok(()),
            AmplitudeDist::Exponential { mean } if mean > 0.0 && mean.is_finite() => Ok(()),
            _ => Err(DriveError::BadParam("amplitude distribution")),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            AmplitudeDist::Constant { a } => a,
            AmplitudeDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            AmplitudeDist::Exponential { mean } => mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            AmplitudeDist::Constant { a } => a * a,
            AmplitudeDist::Uniform { lo, hi } => (hi * hi + hi * lo + lo * lo) / 3.0,
            AmplitudeDist::Exponential { mean } => 2.0 * mean * mean,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            AmplitudeDist::Constant { a } => a,
            AmplitudeDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo..hi)
                }
            }
            AmplitudeDist::Exponential { mean } => {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                -mean * u.ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriveKind {
    ShotNoise {
        /// Event rate in events per second.
        rate_hz: f64,
        amplitude: AmplitudeDist,
        /// Smoothing time constant in seconds; 0 means raw impulses.
        tau_s_seconds: f64,
    },
    Mmpp {
        /// Rate of leaving ON, per second.
        on_to_off_hz: f64,
        /// Rate of leaving OFF, per second.
        off_to_on_hz: f64,
        /// Arrival intensity while ON, per second.
        lambda_on_hz: f64,
        /// Arrival intensity while OFF, per second.
        lambda_off_hz: f64,
    },
    Trace {
        path: String,
        node: usize,
    },
}

/// Exogenous drive recipe: `I(t) = i0 + gain * process(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub kind: DriveKind,
    pub i0: f64,
    pub gain: f64,
    /// Distinguishes independent copies under one experiment seed (for
    /// example, one sub-stream per node).
    pub seed_stream: u64,
}

impl DriveSpec {
    pub fn shot(rate_hz: f64, amplitude: AmplitudeDist, tau_s_seconds: f64) -> Self {
        DriveSpec {
            kind: DriveKind::ShotNoise { rate_hz, amplitude, tau_s_seconds },
            i0: 0.0,
            gain: 1.0,
            seed_stream: 0,
        }
    }

    pub fn with_offset_gain(mut self, i0: f64, gain: f64) -> Self {
        self.i0 = i0;
        self.gain = gain;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.seed_stream = stream;
        self
    }

    pub fn validate(&self) -> Result<(), DriveError> {
        match &self.kind {
            DriveKind::ShotNoise { rate_hz, amplitude, tau_s_seconds } => {
                if !(*rate_hz >= 0.0) {
                    return Err(DriveError::BadParam("rate_hz must be >= 0"));
                }
                if !(*tau_s_seconds >= 0.0) {
                    return Err(DriveError::BadParam("tau_s_seconds must be >= 0"));
                }
                amplitude.validate()
            }
            DriveKind::Mmpp { on_to_off_hz, off_to_on_hz, lambda_on_hz, lambda_off_hz } => {
                if !(*on_to_off_hz > 0.0) || !(*off_to_on_hz > 0.0) {
                    return Err(DriveError::BadParam("dwell rates must be > 0"));
                }
                if !(*lambda_on_hz >= 0.0) || !(*lambda_off_hz >= 0.0) {
                    return Err(DriveError::BadParam("intensities must be >= 0"));
                }
                Ok(())
            }
            DriveKind::Trace { .. } => Ok(()),
        }
    }
}

/// Causal exponential smoothing of impulses that land exactly on sampling
/// instants: an event `(bin, amplitude)` contributes its full amplitude at
/// its own bin and decays by `exp(-1/tau_s_bins)` each later bin.
pub fn kernel_trace(events: &[(usize, f64)], horizon: usize, tau_s_bins: f64) -> Vec<f64> {
    let mut out = vec![0.0; horizon];
    for &(bin, amp) in events {
        if bin < horizon {
            out[bin] += amp;
        }
    }
    if tau_s_bins > 0.0 {
        let decay = (-1.0 / tau_s_bins).exp();
        for i in 1..horizon {
            let carried = out[i - 1] * decay;
            out[i] += carried;
        }
    }
    out
}

/// Samples one drive trace: `horizon` per-bin values of `i0 + gain * s`.
/// Bit-identical for identical `(spec, seed)`.
pub fn sample_drive(
    spec: &DriveSpec,
    horizon: usize,
    dt_seconds: f64,
    seed: u64,
) -> Result<Vec<f64>, DriveError> {
    let mut sampler = DriveSampler::new(spec, horizon, dt_seconds, seed)?;
    Ok((0..horizon).map(|_| sampler.step()).collect())
}

/// Incremental form of [`sample_drive`]: `step()` yields the same series,
/// one bin at a time. Shot noise keeps O(1) state, so a network of
/// per-node drives never materialises `n * horizon` floats; modulated and
/// file-backed drives pre-generate their count vectors at construction.
pub struct DriveSampler {
    i0: f64,
    gain: f64,
    inner: SamplerInner,
}

enum SamplerInner {
    /// Zero-rate shot noise: identically `i0`.
    Quiet,
    Shot {
        rng: rand_chacha::ChaCha12Rng,
        poisson: Poisson<f64>,
        amplitude: AmplitudeDist,
        tau_s_seconds: f64,
        dt: f64,
        decay: f64,
        s: f64,
    },
    Stored { values: Vec<f64>, next: usize },
}

impl DriveSampler {
    pub fn new(
        spec: &DriveSpec,
        horizon: usize,
        dt_seconds: f64,
        seed: u64,
    ) -> Result<Self, DriveError> {
        if horizon == 0 {
            return Err(DriveError::BadHorizon);
        }
        if !(dt_seconds > 0.0) {
            return Err(DriveError::BadDt);
        }
        spec.validate()?;
        let inner = match &spec.kind {
            DriveKind::ShotNoise { rate_hz, amplitude, tau_s_seconds } => {
                let lam = rate_hz * dt_seconds;
                if lam == 0.0 {
                    SamplerInner::Quiet
                } else {
                    SamplerInner::Shot {
                        rng: rng::stream(seed, Domain::Drive, spec.seed_stream),
                        poisson: Poisson::new(lam).expect("validated rate"),
                        amplitude: *amplitude,
                        tau_s_seconds: *tau_s_seconds,
                        dt: dt_seconds,
                        decay: if *tau_s_seconds > 0.0 {
                            (-dt_seconds / tau_s_seconds).exp()
                        } else {
                            0.0
                        },
                        s: 0.0,
                    }
                }
            }
            DriveKind::Mmpp { .. } => SamplerInner::Stored {
                values: sample_mmpp(spec, horizon, dt_seconds, seed)?
                    .into_iter()
                    .map(f64::from)
                    .collect(),
                next: 0,
            },
            DriveKind::Trace { path, node } => {
                SamplerInner::Stored { values: load_trace_column(path, *node, horizon)?, next: 0 }
            }
        };
        Ok(DriveSampler { i0: spec.i0, gain: spec.gain, inner })
    }

    /// Next bin's drive value. Stored drives return the baseline past the
    /// construction horizon.
    pub fn step(&mut self) -> f64 {
        let raw = match &mut self.inner {
            SamplerInner::Quiet => 0.0,
            SamplerInner::Shot { rng, poisson, amplitude, tau_s_seconds, dt, decay, s } => {
                *s *= *decay;
                let count = poisson.sample(rng) as usize;
                for _ in 0..count {
                    let amp = amplitude.sample(rng);
                    if *tau_s_seconds > 0.0 {
                        // age of the event at this bin's sampling instant
                        let age: f64 = rng.gen_range(0.0..1.0) * *dt;
                        *s += amp * (-age / *tau_s_seconds).exp();
                    } else {
                        *s += amp;
                    }
                }
                *s
            }
            SamplerInner::Stored { values, next } => {
                let v = values.get(*next).copied().unwrap_or(0.0);
                *next += 1;
                v
            }
        };
        self.i0 + self.gain * raw
    }
}

/// Closed-form statistics of the smoothed shot-noise process (before the
/// `i0`/`gain` affine map).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticShotStats {
    /// `rate * E[A] * tau_s`.
    pub mean: f64,
    /// `rate * E[A^2] * tau_s / 2`.
    pub variance: f64,
    tau_s: f64,
    psd0: f64,
}

impl AnalyticShotStats {
    /// `variance * exp(-|lag|/tau_s)`.
    pub fn autocov(&self, lag_seconds: f64) -> f64 {
        if self.tau_s == 0.0 {
            return if lag_seconds == 0.0 { self.variance } else { 0.0 };
        }
        self.variance * (-lag_seconds.abs() / self.tau_s).exp()
    }

    /// Lorentzian `2 rate E[A^2] tau_s / (1 + omega^2 tau_s^2)`,
    /// `omega` in radians per second.
    pub fn psd(&self, omega: f64) -> f64 {
        self.psd0 / (1.0 + omega * omega * self.tau_s * self.tau_s)
    }
}

/// Mean, variance, autocovariance, and spectrum of the shot-noise drive.
pub fn analytic_shot_stats(spec: &DriveSpec) -> Result<AnalyticShotStats, DriveError> {
    spec.validate()?;
    let DriveKind::ShotNoise { rate_hz, amplitude, tau_s_seconds } = &spec.kind else {
        return Err(DriveError::NotShotNoise);
    };
    let m2 = amplitude.second_moment();
    Ok(AnalyticShotStats {
        mean: rate_hz * amplitude.mean() * tau_s_seconds,
        variance: rate_hz * m2 * tau_s_seconds / 2.0,
        tau_s: *tau_s_seconds,
        psd0: 2.0 * rate_hz * m2 * tau_s_seconds,
    })
}

/// Markov-modulated Poisson counts per bin. Dwell epochs and per-bin counts
/// draw from separate sub-streams, so two specs differing only in
/// intensities share identical ON/OFF epochs under the same seed.
pub fn sample_mmpp(
    spec: &DriveSpec,
    horizon: usize,
    dt_seconds: f64,
    seed: u64,
) -> Result<Vec<u32>, DriveError> {
    Ok(sample_mmpp_with_epochs(spec, horizon, dt_seconds, seed)?.0)
}

/// As [`sample_mmpp`], also returning each bin's ON-time fraction. The
/// fraction series depends only on the dwell rates, seed, and stream, so
/// specs differing in intensities alone share it bit for bit.
pub fn sample_mmpp_with_epochs(
    spec: &DriveSpec,
    horizon: usize,
    dt_seconds: f64,
    seed: u64,
) -> Result<(Vec<u32>, Vec<f64>), DriveError> {
    if horizon == 0 {
        return Err(DriveError::BadHorizon);
    }
    if !(dt_seconds > 0.0) {
        return Err(DriveError::BadDt);
    }
    spec.validate()?;
    let DriveKind::Mmpp { on_to_off_hz, off_to_on_hz, lambda_on_hz, lambda_off_hz } = spec.kind
    else {
        return Err(DriveError::BadParam("mmpp spec required"));
    };
    let mut epoch_rng = rng::stream(seed, Domain::Drive, spec.seed_stream.wrapping_mul(2));
    let mut count_rng =
        rng::stream(seed, Domain::Drive, spec.seed_stream.wrapping_mul(2).wrapping_add(1));

    // piecewise-constant intensity integrated over each bin
    let pi_on = off_to_on_hz / (on_to_off_hz + off_to_on_hz);
    let mut on = epoch_rng.gen_range(0.0..1.0) < pi_on;
    let mut next_switch = sample_exp(&mut epoch_rng, if on { on_to_off_hz } else { off_to_on_hz });
    let mut out = Vec::with_capacity(horizon);
    let mut on_frac = Vec::with_capacity(horizon);
    for bin in 0..horizon {
        let t0 = bin as f64 * dt_seconds;
        let t1 = t0 + dt_seconds;
        let mut t = t0;
        let mut mass = 0.0;
        let mut on_time = 0.0;
        while next_switch < t1 {
            mass += (next_switch - t) * if on { lambda_on_hz } else { lambda_off_hz };
            on_time += if on { next_switch - t } else { 0.0 };
            t = next_switch;
            on = !on;
            next_switch =
                t + sample_exp(&mut epoch_rng, if on { on_to_off_hz } else { off_to_on_hz });
        }
        mass += (t1 - t) * if on { lambda_on_hz } else { lambda_off_hz };
        on_time += if on { t1 - t } else { 0.0 };
        let count = if mass > 0.0 {
            Poisson::new(mass).expect("positive mass").sample(&mut count_rng) as u32
        } else {
            0
        };
        out.push(count);
        on_frac.push(on_time / dt_seconds);
    }
    Ok((out, on_frac))
}

fn sample_exp<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -u.ln() / rate
}

/// Reads one node's per-bin counts from a `bin,node,count` CSV. Bins not
/// present in the file are zero; a `bin,node,count` header is optional.
pub fn load_trace_column(path: &str, node: usize, horizon: usize) -> Result<Vec<f64>, DriveError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| DriveError::Trace(format!("{path}: {e}")))?;
    parse_trace_csv(&text, node, horizon)
}

pub fn parse_trace_csv(text: &str, node: usize, horizon: usize) -> Result<Vec<f64>, DriveError> {
    let mut out = vec![0.0; horizon];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("bin")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(DriveError::Trace(format!("line {}: expected 3 fields", lineno + 1)));
        }
        let bin: usize = parts[0]
            .parse()
            .map_err(|_| DriveError::Trace(format!("line {}: bad bin", lineno + 1)))?;
        let who: usize = parts[1]
            .parse()
            .map_err(|_| DriveError::Trace(format!("line {}: bad node", lineno + 1)))?;
        let count: f64 = parts[2]
            .parse()
            .map_err(|_| DriveError::Trace(format!("line {}: bad count", lineno + 1)))?;
        if who == node && bin < horizon {
            out[bin] += count;
        }
    }
    Ok(out)
}

/// Amplitude normalisation guidance: mean event area over the spiking
/// headroom `m = v_th_base - v_rest` should sit in `[1e-3, 2e-1]`. Returns
/// a human-readable warning outside that band; never an error.
pub fn amplitude_normalisation_warning(
    spec: &DriveSpec,
    v_th_base: f64,
    v_rest: f64,
) -> Option<String> {
    let DriveKind::ShotNoise { amplitude, tau_s_seconds, .. } = &spec.kind else {
        return None;
    };
    let m = v_th_base - v_rest;
    if m <= 0.0 {
        return Some("threshold headroom v_th_base - v_rest is not positive".to_string());
    }
    let ratio = amplitude.mean() * tau_s_seconds / m;
    if !(1.0e-3..=2.0e-1).contains(&ratio) {
        Some(format!(
            "amplitude normalisation E[A]*tau_s/m = {ratio:.4e} outside [1e-3, 2e-1]; \
             drives may be negligible or saturating"
        ))
    } else {
        None
    }
}

/// Sample mean.
pub fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (denominator n).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = sample_mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Lag-k autocovariance (denominator n).
pub fn sample_autocov(xs: &[f64], lag: usize) -> f64 {
    let m = sample_mean(xs);
    let n = xs.len();
    assert!(lag < n);
    xs.iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Batched mean and its standard error, robust to serial correlation when
/// batches are much longer than the correlation time.
pub fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    assert!(n_batches >= 2 && xs.len() >= 2 * n_batches);
    let len = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| sample_mean(&xs[b * len..(b + 1) * len]))
        .collect();
    let grand = sample_mean(&means);
    let var_b =
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (n_batches - 1) as f64;
    (grand, (var_b / n_batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.005;

    #[test]
    fn zero_rate_gives_zero_trace() {
        let spec = DriveSpec::shot(0.0, AmplitudeDist::Constant { a: 1.0 }, 0.01);
        let trace = sample_drive(&spec, 100, DT, 1).unwrap();
        assert!(trace.iter().all(|&x| x == 0.0));
        let stats = analytic_shot_stats(&spec).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.variance, 0.0);
    }

    #[test]
    fn single_event_kernel_shape() {
        // tau_s = 2 bins
        let trace = kernel_trace(&[(0, 1.0)], 3, 2.0);
        assert_relative_eq!(trace[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(trace[1], (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(trace[2], (-1.0f64).exp(), epsilon = 1e-15);
        // tau_s = 0: no carryover
        let raw = kernel_trace(&[(1, 0.7)], 3, 0.0);
        assert_eq!(raw, vec![0.0, 0.7, 0.0]);
    }

    #[test]
    fn analytic_hand_values() {
        let spec = DriveSpec::shot(50.0, AmplitudeDist::Constant { a: 0.6 }, 0.01);
        let stats = analytic_shot_stats(&spec).unwrap();
        assert_relative_eq!(stats.mean, 0.3, max_relative = 1e-12);
        assert_relative_eq!(stats.variance, 0.09, max_relative = 1e-12);
        assert_relative_eq!(stats.psd(0.0), 2.0 * 50.0 * 0.36 * 0.01, max_relative = 1e-12);
        // Lorentzian half-power point at omega = 1/tau_s
        assert_relative_eq!(stats.psd(100.0), 0.5 * stats.psd(0.0), max_relative = 1e-12);
        assert_relative_eq!(stats.autocov(0.0), stats.variance, max_relative = 1e-12);
        assert_relative_eq!(
            stats.autocov(0.01),
            stats.variance * (-1.0f64).exp(),
            max_relative = 1e-12
        );

        let not_shot = DriveSpec {
            kind: DriveKind::Mmpp {
                on_to_off_hz: 1.0,
                off_to_on_hz: 1.0,
                lambda_on_hz: 10.0,
                lambda_off_hz: 0.0,
            },
            i0: 0.0,
            gain: 1.0,
            seed_stream: 0,
        };
        assert!(analytic_shot_stats(&not_shot).is_err());
    }

    #[test]
    fn shot_mean_converges() {
        let spec = DriveSpec::shot(50.0, AmplitudeDist::Constant { a: 0.6 }, 0.01);
        let trace = sample_drive(&spec, 100_000, DT, 7).unwrap();
        let (mean, se) = batch_mean_se(&trace, 100);
        assert!(
            (mean - 0.3).abs() <= 3.0 * se,
            "mean {mean} vs 0.3, se {se}"
        );
    }

    #[test]
    fn shot_variance_and_autocov_converge() {
        let spec = DriveSpec::shot(40.0, AmplitudeDist::Exponential { mean: 0.5 }, 0.01);
        let stats = analytic_shot_stats(&spec).unwrap();
        let trace = sample_drive(&spec, 200_000, DT, 11).unwrap();
        let n = trace.len() as f64;
        let var = sample_variance(&trace);
        assert!(
            (var - stats.variance).abs() / stats.variance < 0.05,
            "var {var} vs {}",
            stats.variance
        );
        // Lags 1, 2, 5 x tau_s (tau_s = 2 bins). The estimator's own noise
        // at long lags dwarfs the tiny target value, so the tolerance is
        // 10% of the value plus five Bartlett standard errors:
        // Var(c_hat_L) ~ (1/n) sum_k (c_k^2 + c_{k+L} c_{k-L}).
        let c = |k: i64| stats.autocov(k.abs() as f64 * DT);
        for lag_mult in [1i64, 2, 5] {
            let lag = 2 * lag_mult;
            let mut se2 = 0.0;
            for k in -60i64..=60 {
                se2 += c(k) * c(k) + c(k + lag) * c(k - lag);
            }
            let se = (se2 / n).sqrt();
            let est = sample_autocov(&trace, lag as usize);
            let want = c(lag);
            assert!(
                (est - want).abs() <= 0.10 * want + 5.0 * se,
                "autocov lag {lag}: {est} vs {want} (se {se})"
            );
        }
        // The decay rate itself, where it is well resolved: one-lag ratio.
        let ratio = sample_autocov(&trace, 1) / sample_autocov(&trace, 0);
        assert!(
            (ratio - (-0.5f64).exp()).abs() < 0.03,
            "one-lag decay ratio {ratio}"
        );
    }

    #[test]
    fn traces_are_deterministic_by_seed() {
        let spec = DriveSpec::shot(30.0, AmplitudeDist::Uniform { lo: 0.2, hi: 0.8 }, 0.008);
        let a = sample_drive(&spec, 2000, DT, 99).unwrap();
        let b = sample_drive(&spec, 2000, DT, 99).unwrap();
        assert_eq!(a, b, "same seed must be bit-identical");
        let c = sample_drive(&spec, 2000, DT, 100).unwrap();
        assert_ne!(a, c);
        let d = sample_drive(&spec.clone().with_stream(1), 2000, DT, 99).unwrap();
        assert_ne!(a, d, "different sub-stream must decorrelate");
    }

    #[test]
    fn offset_and_gain_apply_affinely() {
        let base = DriveSpec::shot(20.0, AmplitudeDist::Constant { a: 0.5 }, 0.01);
        let shifted = base.clone().with_offset_gain(0.12, 1.1);
        let a = sample_drive(&base, 500, DT, 5).unwrap();
        let b = sample_drive(&shifted, 500, DT, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(*y, 0.12 + 1.1 * x, epsilon = 1e-12);
        }
    }

    #[test]
    fn mmpp_epochs_shared_across_intensities() {
        let mk = |lam_on: f64, lam_off: f64| DriveSpec {
            kind: DriveKind::Mmpp {
                on_to_off_hz: 5.0,
                off_to_on_hz: 1.0,
                lambda_on_hz: lam_on,
                lambda_off_hz: lam_off,
            },
            i0: 0.0,
            gain: 1.0,
            seed_stream: 3,
        };
        let (a, epochs_a) = sample_mmpp_with_epochs(&mk(200.0, 0.0), 4000, DT, 17).unwrap();
        let (b, epochs_b) = sample_mmpp_with_epochs(&mk(200.0, 0.0), 4000, DT, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(epochs_a, epochs_b);
        // Intensities do not touch the epoch stream: a spec with different
        // ON/OFF intensities reproduces the exact same ON-fraction series.
        let (c, epochs_c) = sample_mmpp_with_epochs(&mk(400.0, 5.0), 4000, DT, 17).unwrap();
        assert_eq!(epochs_a, epochs_c, "epochs must be shared across intensity variants");
        let sum_a: u32 = a.iter().sum();
        let sum_c: u32 = c.iter().sum();
        assert!(sum_c > sum_a);
        // counts respect the epochs when OFF intensity is zero
        for (count, frac) in a.iter().zip(&epochs_a) {
            if *count > 0 {
                assert!(*frac > 0.0, "arrival in a fully-OFF bin");
            }
        }
    }

    #[test]
    fn mmpp_stationary_mean() {
        let spec = DriveSpec {
            kind: DriveKind::Mmpp {
                on_to_off_hz: 4.0,
                off_to_on_hz: 1.0,
                lambda_on_hz: 300.0,
                lambda_off_hz: 20.0,
            },
            i0: 0.0,
            gain: 1.0,
            seed_stream: 0,
        };
        let counts = sample_mmpp(&spec, 400_000, DT, 23).unwrap();
        let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let (mean, se) = batch_mean_se(&xs, 100);
        let pi_on = 1.0 / 5.0;
        let want = DT * (pi_on * 300.0 + (1.0 - pi_on) * 20.0);
        assert!(
            (mean - want).abs() <= 4.0 * se.max(1e-6),
            "mmpp mean {mean} vs {want} (se {se})"
        );
    }

    #[test]
    fn trace_playback() {
        let text = "bin,node,count\n0,0,2\n1,1,5\n3,0,1\n";
        let col0 = parse_trace_csv(text, 0, 5).unwrap();
        assert_eq!(col0, vec![2.0, 0.0, 0.0, 1.0, 0.0]);
        let col1 = parse_trace_csv(text, 1, 5).unwrap();
        assert_eq!(col1, vec![0.0, 5.0, 0.0, 0.0, 0.0]);
        assert!(load_trace_column("/nonexistent/file.csv", 0, 5).is_err());
    }

    #[test]
    fn normalisation_warning_band() {
        let ok = DriveSpec::shot(50.0, AmplitudeDist::Constant { a: 0.6 }, 0.01);
        assert!(amplitude_normalisation_warning(&ok, 0.6, 0.0).is_none());
        let large = DriveSpec::shot(50.0, AmplitudeDist::Constant { a: 30.0 }, 0.01);
        assert!(amplitude_normalisation_warning(&large, 0.6, 0.0).is_some());
        let tiny = DriveSpec::shot(50.0, AmplitudeDist::Constant { a: 1e-4 }, 0.001);
        assert!(amplitude_normalisation_warning(&tiny, 0.6, 0.0).is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        // Moment formulas for every amplitude family agree with brute-force
        // sampling of the amplitude law itself.
        #[test]
        fn amplitude_moments_match_sampling(pick in 0usize..3, x in 0.1f64..1.5, y in 0.0f64..1.0) {
            let dist = match pick {
                0 => AmplitudeDist::Constant { a: x },
                1 => AmplitudeDist::Uniform { lo: x * y, hi: x },
                _ => AmplitudeDist::Exponential { mean: x },
            };
            let mut rng = rng::stream(42, Domain::Test, 0);
            let n = 200_000;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let a = dist.sample(&mut rng);
                s1 += a;
                s2 += a * a;
            }
            let m1 = s1 / n as f64;
            let m2 = s2 / n as f64;
            prop_assert!((m1 - dist.mean()).abs() < 0.02 * dist.mean().max(0.05));
            prop_assert!((m2 - dist.second_moment()).abs() < 0.04 * dist.second_moment().max(0.05));
        }

        // Smoothed traces stay non-negative and bounded over any horizon.
        #[test]
        fn shot_traces_nonnegative(seed in 0u64..50, tau_ms in 0.0f64..15.0) {
            let spec = DriveSpec::shot(
                50.0,
                AmplitudeDist::Uniform { lo: 0.3, hi: 0.9 },
                tau_ms * 1e-3,
            );
            let trace = sample_drive(&spec, 3000, DT, seed).unwrap();
            prop_assert!(trace.iter().all(|&x| x >= 0.0 && x.is_finite()));
        }
    }
}
