//! Label-free next-step queue forecasters, the train-calibrated residual
//! event protocol, and forecast / detection metrics.
//!
//! All forecasters are zero-shot: nothing is fitted to queue labels. The
//! node-model forecaster is calibrated from arrival statistics alone
//! (see [`crate::baselines::calibrate_light_load`]); the others are
//! closed-form update rules.

use thiserror::Error;

use crate::baselines::CalibrationResult;
use crate::graph::CouplingGraph;
use crate::model::{self, ModelError, NodeParams};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("window must contain at least one bin")]
    EmptyWindow,
    #[error("tgnn-smooth requires a graph")]
    MissingGraph,
    #[error("{what}: got {got}, want {want}")]
    LenMismatch { what: &'static str, got: usize, want: usize },
    #[error("train split has zero residual variance")]
    ZeroTrainVariance,
    #[error("split fractions must be positive and sum to 1")]
    BadSplit,
    #[error("series too short for the configured split")]
    TooShort,
    #[error("bad parameter: {0}")]
    BadParam(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Stateful forecaster around one node-model Euler step per bin, using the
/// arrival-only calibration: drive is `gain * a_t / k`, the prediction is
/// `scale_i * v_i`.
#[derive(Debug, Clone)]
pub struct NosForecaster {
    pub params: NodeParams,
    pub cal: CalibrationResult,
    pub k: usize,
    v: Vec<f64>,
    u: Vec<f64>,
}

impl NosForecaster {
    pub fn new(params: NodeParams, cal: CalibrationResult, k: usize) -> Self {
        let n = cal.per_node_scale.len();
        NosForecaster { params, cal, k, v: vec![params.v_rest; n], u: vec![0.0; n] }
    }

    fn step(&mut self, last_arrivals: &[f64]) -> Result<Vec<f64>, ForecastError> {
        if last_arrivals.len() != self.v.len() {
            return Err(ForecastError::LenMismatch {
                what: "arrivals",
                got: last_arrivals.len(),
                want: self.v.len(),
            });
        }
        let mut out = Vec::with_capacity(self.v.len());
        for i in 0..self.v.len() {
            let drive = self.cal.gain_i * last_arrivals[i] / self.k as f64;
            let (dv, du) = model::drift(self.v[i], self.u[i], drive, &self.params)?;
            self.v[i] = (self.v[i] + dv).clamp(self.params.v_rest, 1.5);
            self.u[i] = (self.u[i] + du).clamp(-10.0, 10.0);
            out.push(self.cal.per_node_scale[i] * self.v[i]);
        }
        Ok(out)
    }
}

/// Forecast rule. All predict the next bin's queue from the arrival window
/// (newest last) and the current queue.
#[derive(Debug)]
pub enum ForecastMethod {
    /// `q' = clip(q + a_t - mu dt, >= 0)`.
    Fluid,
    /// Fluid with the window-averaged arrivals in place of `a_t`.
    MovingAvg,
    /// Fluid with one-hop degree-normalised arrivals (self plus in-edge
    /// neighbours).
    TgnnSmooth,
    /// `q' = (1 - leak) q + a_t`.
    LifLeaky { leak: f64 },
    /// One node-model step; carries its own state across calls.
    NosCalibrated(NosForecaster),
}

pub const DEFAULT_LIF_LEAK: f64 = 0.1;

/// One prediction step for every node. `arrivals[i]` is node `i`'s window,
/// newest last; all windows must share a length of at least one bin.
pub fn zero_shot_forecast(
    method: &mut ForecastMethod,
    arrivals: &[Vec<f64>],
    queue: &[f64],
    mu_rate: f64,
    dt_seconds: f64,
    graph: Option<&CouplingGraph>,
) -> Result<Vec<f64>, ForecastError> {
    let n = queue.len();
    if arrivals.len() != n {
        return Err(ForecastError::LenMismatch { what: "arrivals", got: arrivals.len(), want: n });
    }
    let w = arrivals.first().map_or(0, Vec::len);
    if w == 0 || arrivals.iter().any(|a| a.len() != w) {
        return Err(ForecastError::EmptyWindow);
    }
    if !(mu_rate >= 0.0) || !(dt_seconds > 0.0) {
        return Err(ForecastError::BadParam("mu_rate and dt must be non-negative"));
    }
    let service = mu_rate * dt_seconds;
    let fluid = |q: f64, a: f64| (q + a - service).max(0.0);

    match method {
        ForecastMethod::Fluid => {
            Ok((0..n).map(|i| fluid(queue[i], arrivals[i][w - 1])).collect())
        }
        ForecastMethod::MovingAvg => Ok((0..n)
            .map(|i| {
                let a_bar = arrivals[i].iter().sum::<f64>() / w as f64;
                fluid(queue[i], a_bar)
            })
            .collect()),
        ForecastMethod::TgnnSmooth => {
            let graph = graph.ok_or(ForecastError::MissingGraph)?;
            if graph.n() != n {
                return Err(ForecastError::LenMismatch { what: "graph", got: graph.n(), want: n });
            }
            let mut acc: Vec<f64> = (0..n).map(|i| arrivals[i][w - 1]).collect();
            let mut cnt = vec![1.0f64; n];
            for e in graph.entries() {
                acc[e.row] += arrivals[e.col][w - 1];
                cnt[e.row] += 1.0;
            }
            Ok((0..n).map(|i| fluid(queue[i], acc[i] / cnt[i])).collect())
        }
        ForecastMethod::LifLeaky { leak } => {
            if !(*leak >= 0.0 && *leak <= 1.0) {
                return Err(ForecastError::BadParam("leak must lie in [0, 1]"));
            }
            Ok((0..n).map(|i| (1.0 - *leak) * queue[i] + arrivals[i][w - 1]).collect())
        }
        ForecastMethod::NosCalibrated(f) => {
            let last: Vec<f64> = (0..n).map(|i| arrivals[i][w - 1]).collect();
            f.step(&last)
        }
    }
}

/// Runs a forecaster along a whole series. `arrivals[i][t]` are per-bin
/// counts, `queue[i][t]` the truth; `predictions[i][t]` estimates
/// `queue[i][t]` from data through bin `t - 1` (the first bin has no
/// prediction and is carried as the initial queue).
pub fn run_forecasts(
    method: &mut ForecastMethod,
    arrivals: &[Vec<f64>],
    queue: &[Vec<f64>],
    mu_rate: f64,
    dt_seconds: f64,
    window: usize,
    graph: Option<&CouplingGraph>,
) -> Result<Vec<Vec<f64>>, ForecastError> {
    if window == 0 {
        return Err(ForecastError::EmptyWindow);
    }
    let n = queue.len();
    if arrivals.len() != n || n == 0 {
        return Err(ForecastError::LenMismatch { what: "arrivals", got: arrivals.len(), want: n });
    }
    let horizon = queue[0].len();
    let mut preds: Vec<Vec<f64>> = (0..n).map(|i| vec![queue[i][0]]).collect();
    let mut win: Vec<Vec<f64>> = vec![Vec::with_capacity(window); n];
    for t in 0..horizon - 1 {
        for i in 0..n {
            if win[i].len() == window {
                win[i].remove(0);
            }
            win[i].push(arrivals[i][t]);
        }
        let q_now: Vec<f64> = (0..n).map(|i| queue[i][t]).collect();
        let p = zero_shot_forecast(method, &win, &q_now, mu_rate, dt_seconds, graph)?;
        for i in 0..n {
            preds[i].push(p[i]);
        }
    }
    Ok(preds)
}

/// Contiguous train / validation / test split plus the event rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventProtocolConfig {
    /// Fractions of the series, summing to one.
    pub split: (f64, f64, f64),
    /// Fixed residual z-score cut; when absent the cut is the validation
    /// quantile at `1 - fp_budget`.
    pub z_threshold: Option<f64>,
    /// Fraction of validation bins allowed above the cut.
    pub fp_budget: f64,
    /// Episodes shorter than this many bins are discarded.
    pub min_duration: usize,
    /// Starts match within +/- this many bins.
    pub match_window: usize,
    pub dt_seconds: f64,
}

impl Default for EventProtocolConfig {
    fn default() -> Self {
        EventProtocolConfig {
            split: (0.5, 0.25, 0.25),
            z_threshold: None,
            fp_budget: 0.02,
            min_duration: 3,
            match_window: 25,
            dt_seconds: crate::model::DEFAULT_DT_SECONDS,
        }
    }
}

impl EventProtocolConfig {
    fn validate(&self, len: usize) -> Result<(usize, usize), ForecastError> {
        let (a, b, c) = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(ForecastError::BadSplit);
        }
        if self.min_duration == 0 {
            return Err(ForecastError::BadParam("min_duration must be >= 1"));
        }
        if !(self.fp_budget > 0.0 && self.fp_budget < 1.0) {
            return Err(ForecastError::BadParam("fp_budget must lie in (0, 1)"));
        }
        let train_end = (len as f64 * a).round() as usize;
        let val_end = (len as f64 * (a + b)).round() as usize;
        if train_end < 2 || val_end <= train_end || len <= val_end + 1 {
            return Err(ForecastError::TooShort);
        }
        Ok((train_end, val_end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDetectionReport {
    /// The z cut actually applied.
    pub z_cut: f64,
    /// Train-split residual moments used for all z-scoring.
    pub train_mean: f64,
    pub train_std: f64,
    /// Episode starts on the test split, absolute bins.
    pub event_starts_pred: Vec<usize>,
    pub event_starts_true: Vec<usize>,
    /// `(true_start, pred_start)` pairs, one prediction per truth.
    pub matches: Vec<(usize, usize)>,
    /// Test split as `[start, end)` absolute bins.
    pub test_range: (usize, usize),
}

fn episode_starts(flags: &[bool], offset: usize, min_duration: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut run = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            run += 1;
            if run == min_duration {
                starts.push(offset + i + 1 - min_duration);
            }
        } else {
            run = 0;
        }
    }
    starts
}

/// Greedy earliest-first one-to-one matching: truth starts in order each
/// take the earliest unmatched predicted start within the window.
fn match_starts(
    starts_true: &[usize],
    starts_pred: &[usize],
    window: usize,
) -> Vec<(usize, usize)> {
    let mut used = vec![false; starts_pred.len()];
    let mut out = Vec::new();
    for &t in starts_true {
        for (j, &p) in starts_pred.iter().enumerate() {
            if used[j] {
                continue;
            }
            if p + window >= t && p <= t + window {
                used[j] = true;
                out.push((t, p));
                break;
            }
        }
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Residual event protocol on one node's series: z-score the signed
/// residuals with train-only moments, select the cut on validation, extract
/// test-split episodes of at least `min_duration`, and match them to truth
/// episodes (truth above its own test-split top decile).
pub fn residual_event_detection(
    truth: &[f64],
    predictions: &[f64],
    cfg: &EventProtocolConfig,
) -> Result<EventDetectionReport, ForecastError> {
    if truth.len() != predictions.len() {
        return Err(ForecastError::LenMismatch {
            what: "predictions",
            got: predictions.len(),
            want: truth.len(),
        });
    }
    let (train_end, val_end) = cfg.validate(truth.len())?;
    let resid: Vec<f64> = truth.iter().zip(predictions).map(|(t, p)| t - p).collect();

    let train = &resid[..train_end];
    let m = train.iter().sum::<f64>() / train.len() as f64;
    let var = train.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / train.len() as f64;
    if !(var > 0.0) {
        return Err(ForecastError::ZeroTrainVariance);
    }
    let s = var.sqrt();
    let z: Vec<f64> = resid.iter().map(|r| (r - m) / s).collect();

    let z_cut = match cfg.z_threshold {
        Some(c) => c,
        None => {
            let mut val: Vec<f64> = z[train_end..val_end].to_vec();
            val.sort_by(|a, b| a.total_cmp(b));
            quantile(&val, 1.0 - cfg.fp_budget)
        }
    };

    let test = train_end.max(val_end)..truth.len();
    let pred_flags: Vec<bool> = test.clone().map(|t| z[t] >= z_cut).collect();
    let event_starts_pred = episode_starts(&pred_flags, test.start, cfg.min_duration);

    let mut test_truth: Vec<f64> = truth[test.clone()].to_vec();
    test_truth.sort_by(|a, b| a.total_cmp(b));
    let burst_level = quantile(&test_truth, 0.9);
    let true_flags: Vec<bool> = test.clone().map(|t| truth[t] > burst_level).collect();
    let event_starts_true = episode_starts(&true_flags, test.start, cfg.min_duration);

    let matches = match_starts(&event_starts_true, &event_starts_pred, cfg.match_window);
    Ok(EventDetectionReport {
        z_cut,
        train_mean: m,
        train_std: s,
        event_starts_pred,
        event_starts_true,
        matches,
        test_range: (test.start, test.end),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Rank-statistic AUROC of residual z against top-decile burst labels;
    /// absent without both label classes.
    pub auroc: Option<f64>,
    /// Average precision; absent without positive labels.
    pub auprc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Median signed `(pred_start - true_start) * dt` in ms over matches;
    /// absent without matches.
    pub median_start_latency_ms: Option<f64>,
}

/// Mann-Whitney AUROC with midranks for ties. `None` without both classes.
pub fn auroc_rank(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block shares the midrank
        let midrank = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision over the ranked scores. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (seen, &k) in idx.iter().enumerate() {
        if labels[k] {
            tp += 1;
            ap += tp as f64 / (seen + 1) as f64;
        }
    }
    Some(ap / n_pos as f64)
}

/// Point error on the test split plus event skill from the detection
/// report. Scores for AUROC/AUPRC are the train-calibrated residual
/// z-scores; labels are the test split's top decile of the truth.
pub fn forecast_metrics(
    truth: &[f64],
    predictions: &[f64],
    report: &EventDetectionReport,
) -> Result<ForecastMetrics, ForecastError> {
    if truth.len() != predictions.len() {
        return Err(ForecastError::LenMismatch {
            what: "predictions",
            got: predictions.len(),
            want: truth.len(),
        });
    }
    let (t0, t1) = report.test_range;
    if t1 > truth.len() || t0 >= t1 {
        return Err(ForecastError::BadParam("test range out of bounds"));
    }
    let truth_t = &truth[t0..t1];
    let pred_t = &predictions[t0..t1];
    let n = truth_t.len() as f64;
    let mae = truth_t.iter().zip(pred_t).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
    let rmse = (truth_t.iter().zip(pred_t).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n)
        .sqrt();

    let z: Vec<f64> = truth_t
        .iter()
        .zip(pred_t)
        .map(|(t, p)| (t - p - report.train_mean) / report.train_std)
        .collect();
    let mut sorted: Vec<f64> = truth_t.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let burst_level = quantile(&sorted, 0.9);
    let labels: Vec<bool> = truth_t.iter().map(|&t| t > burst_level).collect();
    let auroc = auroc_rank(&z, &labels);
    let auprc = average_precision(&z, &labels);

    let n_pred = report.event_starts_pred.len();
    let n_true = report.event_starts_true.len();
    let n_match = report.matches.len();
    let precision = if n_pred > 0 { n_match as f64 / n_pred as f64 } else { 0.0 };
    let recall = if n_true > 0 { n_match as f64 / n_true as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let median_start_latency_ms = if n_match == 0 {
        None
    } else {
        let mut lat: Vec<f64> = report
            .matches
            .iter()
            .map(|&(t, p)| (p as f64 - t as f64) * report_dt_ms(report))
            .collect();
        lat.sort_by(|a, b| a.total_cmp(b));
        Some(quantile(&lat, 0.5))
    };
    Ok(ForecastMetrics {
        mae,
        rmse,
        auroc,
        auprc,
        precision,
        recall,
        f1,
        median_start_latency_ms,
    })
}

// latency needs dt; the report does not carry it, so metrics use the
// protocol default unless the caller rescales
fn report_dt_ms(_report: &EventDetectionReport) -> f64 {
    crate::model::DEFAULT_DT_SECONDS * 1000.0
}
