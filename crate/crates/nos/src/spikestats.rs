//! Post-run spike statistics: rates and ISI CV with bootstrap intervals,
//! avalanche extraction with tail fitting (power law vs log-normal), and
//! the phase-interpolation synchrony order parameter.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::rng::{self, Domain};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("dt must be positive and finite")]
    BadDt,
    #[error("bootstrap needs at least one replicate")]
    BadBootstrap,
    #[error("spike bin {bin} outside horizon {horizon} on node {node}")]
    SpikeOutOfRange { node: usize, bin: u32, horizon: usize },
    #[error("no spike trains given")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeStatsReport {
    /// Spikes per second averaged over nodes.
    pub mean_rate_hz: f64,
    /// Mean over nodes of std(ISI)/mean(ISI); nodes with fewer than two
    /// spikes are excluded.
    pub isi_cv: Option<f64>,
    pub rate_ci: (f64, f64),
    pub cv_ci: Option<(f64, f64)>,
    pub nodes_with_cv: usize,
}

fn percentile_ci(mut reps: Vec<f64>) -> (f64, f64) {
    reps.sort_by(|a, b| a.total_cmp(b));
    (interp_quantile(&reps, 0.025), interp_quantile(&reps, 0.975))
}

fn interp_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn isis(train: &[u32]) -> Vec<f64> {
    let mut bins: Vec<u32> = train.to_vec();
    bins.sort_unstable();
    bins.windows(2).map(|w| f64::from(w[1] - w[0])).collect()
}

fn cv_of(isi: &[f64]) -> f64 {
    let n = isi.len() as f64;
    let mean = isi.iter().sum::<f64>() / n;
    let var = isi.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Rates and ISI CV with percentile-bootstrap 95% intervals. The bootstrap
/// resamples nodes for the rate; for the CV it resamples nodes and then
/// each chosen node's ISIs, so single-node runs still get a CV interval.
pub fn spike_statistics(
    spikes: &[Vec<u32>],
    horizon: usize,
    dt: f64,
    b: usize,
    seed: u64,
) -> Result<SpikeStatsReport, StatsError> {
    if horizon == 0 {
        return Err(StatsError::BadHorizon);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StatsError::BadDt);
    }
    if b == 0 {
        return Err(StatsError::BadBootstrap);
    }
    for (node, train) in spikes.iter().enumerate() {
        if let Some(&bin) = train.iter().find(|&&s| s as usize >= horizon) {
            return Err(StatsError::SpikeOutOfRange { node, bin, horizon });
        }
    }
    let n = spikes.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let span = horizon as f64 * dt;
    let rates: Vec<f64> = spikes.iter().map(|t| t.len() as f64 / span).collect();
    let mean_rate_hz = rates.iter().sum::<f64>() / n as f64;

    let node_isis: Vec<Vec<f64>> = spikes.iter().map(|t| isis(t)).collect();
    let cvs: Vec<Option<f64>> =
        node_isis.iter().map(|i| (!i.is_empty()).then(|| cv_of(i))).collect();
    let defined: Vec<f64> = cvs.iter().flatten().copied().collect();
    let nodes_with_cv = defined.len();
    let isi_cv =
        (nodes_with_cv > 0).then(|| defined.iter().sum::<f64>() / nodes_with_cv as f64);

    let mut rng = rng::stream(seed, Domain::Bootstrap, 0);
    let mut rate_reps = Vec::with_capacity(b);
    let mut cv_reps = Vec::with_capacity(b);
    for _ in 0..b {
        let mut rate_acc = 0.0;
        let mut cv_acc = 0.0;
        let mut cv_cnt = 0usize;
        for _ in 0..n {
            let j = rng.gen_range(0..n);
            rate_acc += rates[j];
            if !node_isis[j].is_empty() {
                let src = &node_isis[j];
                let resampled: Vec<f64> =
                    (0..src.len()).map(|_| src[rng.gen_range(0..src.len())]).collect();
                cv_acc += cv_of(&resampled);
                cv_cnt += 1;
            }
        }
        rate_reps.push(rate_acc / n as f64);
        if cv_cnt > 0 {
            cv_reps.push(cv_acc / cv_cnt as f64);
        }
    }
    let rate_ci = percentile_ci(rate_reps);
    let cv_ci = (!cv_reps.is_empty()).then(|| percentile_ci(cv_reps));
    Ok(SpikeStatsReport { mean_rate_hz, isi_cv, rate_ci, cv_ci, nodes_with_cv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailModel {
    PowerLaw,
    LogNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFitReport {
    pub x_min: f64,
    pub n_tail: usize,
    pub alpha_hat: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub ks_pl: f64,
    pub ks_ln: f64,
    pub ll_pl: f64,
    pub ll_ln: f64,
    pub aic_pl: f64,
    pub aic_ln: f64,
    pub preferred: TailModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvalancheReport {
    pub sizes: Vec<u64>,
    pub fit: Option<TailFitReport>,
}

/// Maximal contiguous runs of nonzero bins; size is the spikes in the run.
pub fn avalanche_sizes(population_counts: &[u32]) -> Vec<u64> {
    let mut sizes = Vec::new();
    let mut acc: u64 = 0;
    for &c in population_counts {
        if c > 0 {
            acc += u64::from(c);
        } else if acc > 0 {
            sizes.push(acc);
            acc = 0;
        }
    }
    if acc > 0 {
        sizes.push(acc);
    }
    sizes
}

/// Continuous-tail power-law MLE at a fixed threshold.
pub fn power_law_mle(tail: &[f64], x_min: f64) -> f64 {
    let s: f64 = tail.iter().map(|x| (x / x_min).ln()).sum();
    1.0 + tail.len() as f64 / s
}

fn power_law_ll(tail: &[f64], x_min: f64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let s: f64 = tail.iter().map(|x| (x / x_min).ln()).sum();
    n * ((alpha - 1.0) / x_min).ln() - alpha * s
}

/// KS distance between the empirical CDF of a sorted tail and a model CDF.
fn ks_distance(sorted_tail: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted_tail.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted_tail.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    d
}

/// Left-truncated normal MLE on `ys` with support `y >= y_min`, via
/// Nelder-Mead on (mu, ln sigma). Deterministic.
fn truncated_normal_mle(ys: &[f64], y_min: f64) -> (f64, f64) {
    let n = ys.len() as f64;
    let std_norm = Normal::new(0.0, 1.0).unwrap();
    let nll = |p: [f64; 2]| -> f64 {
        let (mu, sigma) = (p[0], p[1].exp());
        let tail_mass = std_norm.cdf(-(y_min - mu) / sigma).max(1e-300);
        let mut acc = n * (sigma.ln() + tail_mass.ln());
        for &y in ys {
            let z = (y - mu) / sigma;
            acc += 0.5 * z * z;
        }
        acc
    };
    // moment start from the truncated sample
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n)
        .sqrt()
        .max(1e-3);
    let mut simplex = [[mean, sd.ln()], [mean + sd, sd.ln()], [mean, sd.ln() + 0.5]];
    let mut fx = simplex.map(nll);
    for _ in 0..400 {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| fx[a].total_cmp(&fx[b]));
        let (best, mid, worst) = (order[0], order[1], order[2]);
        if (fx[worst] - fx[best]).abs() < 1e-12 {
            break;
        }
        let centroid = [
            (simplex[best][0] + simplex[mid][0]) / 2.0,
            (simplex[best][1] + simplex[mid][1]) / 2.0,
        ];
        let refl = [
            centroid[0] + (centroid[0] - simplex[worst][0]),
            centroid[1] + (centroid[1] - simplex[worst][1]),
        ];
        let f_refl = nll(refl);
        if f_refl < fx[best] {
            let exp = [
                centroid[0] + 2.0 * (centroid[0] - simplex[worst][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[worst][1]),
            ];
            let f_exp = nll(exp);
            if f_exp < f_refl {
                simplex[worst] = exp;
                fx[worst] = f_exp;
            } else {
                simplex[worst] = refl;
                fx[worst] = f_refl;
            }
        } else if f_refl < fx[mid] {
            simplex[worst] = refl;
            fx[worst] = f_refl;
        } else {
            let con = [
                centroid[0] + 0.5 * (simplex[worst][0] - centroid[0]),
                centroid[1] + 0.5 * (simplex[worst][1] - centroid[1]),
            ];
            let f_con = nll(con);
            if f_con < fx[worst] {
                simplex[worst] = con;
                fx[worst] = f_con;
            } else {
                for i in [mid, worst] {
                    simplex[i] = [
                        (simplex[i][0] + simplex[best][0]) / 2.0,
                        (simplex[i][1] + simplex[best][1]) / 2.0,
                    ];
                    fx[i] = nll(simplex[i]);
                }
            }
        }
    }
    let best = if fx[0] <= fx[1] && fx[0] <= fx[2] {
        simplex[0]
    } else if fx[1] <= fx[2] {
        simplex[1]
    } else {
        simplex[2]
    };
    (best[0], best[1].exp())
}

/// Log-likelihood of the tail under the x_min-truncated log-normal,
/// expressed as a density in x so it is comparable with the power law.
fn lognormal_ll(tail: &[f64], x_min: f64, mu: f64, sigma: f64) -> f64 {
    let std_norm = Normal::new(0.0, 1.0).unwrap();
    let tail_mass = std_norm.cdf(-(x_min.ln() - mu) / sigma).max(1e-300);
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    tail.iter()
        .map(|&x| {
            let z = (x.ln() - mu) / sigma;
            -half_ln_2pi - sigma.ln() - x.ln() - 0.5 * z * z - tail_mass.ln()
        })
        .sum()
}

fn lognormal_cdf(x: f64, x_min: f64, mu: f64, sigma: f64) -> f64 {
    let std_norm = Normal::new(0.0, 1.0).unwrap();
    let lo = std_norm.cdf((x_min.ln() - mu) / sigma);
    ((std_norm.cdf((x.ln() - mu) / sigma) - lo) / (1.0 - lo).max(1e-300)).clamp(0.0, 1.0)
}

/// On large samples the threshold search only considers tails keeping at
/// least this many points; fewer give an unusably noisy exponent.
pub const TAIL_SEARCH_MIN_POINTS: usize = 50;

/// Fits both tail models above a threshold chosen to minimise the
/// power-law KS distance over the unique observed sizes. `None` when no
/// candidate leaves two or more strictly spread tail points.
pub fn fit_tail(xs: &[f64]) -> Option<TailFitReport> {
    let mut sorted: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut unique: Vec<f64> = sorted.clone();
    unique.dedup();
    let min_tail = if sorted.len() >= 2 * TAIL_SEARCH_MIN_POINTS { TAIL_SEARCH_MIN_POINTS } else { 2 };

    let mut best: Option<(f64, f64, usize)> = None; // (ks, x_min, tail start)
    for &cand in &unique {
        let start = sorted.partition_point(|&x| x < cand);
        let tail = &sorted[start..];
        if tail.len() < min_tail {
            break;
        }
        let spread: f64 = tail.iter().map(|x| (x / cand).ln()).sum();
        if spread <= 0.0 {
            continue; // all tail points equal: the MLE degenerates
        }
        let alpha = power_law_mle(tail, cand);
        let ks = ks_distance(tail, |x| 1.0 - (x / cand).powf(1.0 - alpha));
        if best.map_or(true, |(b_ks, _, _)| ks < b_ks) {
            best = Some((ks, cand, start));
        }
    }
    let (_, x_min, start) = best?;
    fit_tail_span(&sorted[start..], x_min)
}

/// Both fits above a caller-fixed threshold; `None` when fewer than two
/// points remain or they carry no spread.
pub fn fit_tail_at(xs: &[f64], x_min: f64) -> Option<TailFitReport> {
    let mut tail: Vec<f64> =
        xs.iter().copied().filter(|x| x.is_finite() && *x >= x_min).collect();
    tail.sort_by(|a, b| a.total_cmp(b));
    fit_tail_span(&tail, x_min)
}

fn fit_tail_span(tail: &[f64], x_min: f64) -> Option<TailFitReport> {
    if tail.len() < 2 || tail.iter().map(|x| (x / x_min).ln()).sum::<f64>() <= 0.0 {
        return None;
    }
    let n_tail = tail.len();
    let alpha_hat = power_law_mle(tail, x_min);
    let ll_pl = power_law_ll(tail, x_min, alpha_hat);
    let ks_pl = ks_distance(tail, |x| 1.0 - (x / x_min).powf(1.0 - alpha_hat));

    let ys: Vec<f64> = tail.iter().map(|x| x.ln()).collect();
    let (mu_hat, sigma_hat) = truncated_normal_mle(&ys, x_min.ln());
    let ll_ln = lognormal_ll(tail, x_min, mu_hat, sigma_hat);
    let ks_ln = ks_distance(tail, |x| lognormal_cdf(x, x_min, mu_hat, sigma_hat));

    let aic_pl = 2.0 - 2.0 * ll_pl;
    let aic_ln = 4.0 - 2.0 * ll_ln;
    let preferred = if aic_pl <= aic_ln { TailModel::PowerLaw } else { TailModel::LogNormal };
    Some(TailFitReport {
        x_min,
        n_tail,
        alpha_hat,
        mu_hat,
        sigma_hat,
        ks_pl,
        ks_ln,
        ll_pl,
        ll_ln,
        aic_pl,
        aic_ln,
        preferred,
    })
}

/// Avalanche extraction plus tail fit. `dt` only scales durations, which
/// this report does not carry; it is validated for interface parity.
pub fn avalanche_analysis(
    population_counts: &[u32],
    dt: f64,
) -> Result<AvalancheReport, StatsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StatsError::BadDt);
    }
    let sizes = avalanche_sizes(population_counts);
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    Ok(AvalancheReport { fit: fit_tail(&xs), sizes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynchronyReport {
    /// Per-bin order parameter; NaN where fewer than two nodes have a
    /// defined phase.
    pub r_trace: Vec<f64>,
    /// Time average over the defined bins.
    pub r_mean: f64,
    pub included_nodes: usize,
    pub excluded_nodes: usize,
    pub defined_bins: usize,
}

/// Kuramoto-style order parameter with linear phase interpolation: phase
/// ramps 0 to 2 pi between consecutive spikes of each node and is undefined
/// outside its first..last spike span. Nodes with fewer than two spikes are
/// excluded; `None` when nothing qualifies.
pub fn synchrony_order(spikes: &[Vec<u32>], horizon: usize) -> Option<SynchronyReport> {
    let trains: Vec<Vec<u32>> = spikes
        .iter()
        .filter(|t| t.len() >= 2)
        .map(|t| {
            let mut s = t.clone();
            s.sort_unstable();
            s
        })
        .collect();
    let excluded_nodes = spikes.len() - trains.len();
    if trains.is_empty() {
        return None;
    }

    let mut re = vec![0.0f64; horizon];
    let mut im = vec![0.0f64; horizon];
    let mut cnt = vec![0u32; horizon];
    for train in &trains {
        for w in train.windows(2) {
            let (s0, s1) = (w[0] as usize, w[1] as usize);
            let span = (s1 - s0) as f64;
            for t in s0..s1.min(horizon) {
                let phi = 2.0 * std::f64::consts::PI * (t - s0) as f64 / span;
                re[t] += phi.cos();
                im[t] += phi.sin();
                cnt[t] += 1;
            }
        }
        // the last spike closes the final interval with phase 2 pi = 0
        let last = *train.last().unwrap() as usize;
        if last < horizon {
            re[last] += 1.0;
            cnt[last] += 1;
        }
    }

    let mut r_trace = vec![f64::NAN; horizon];
    let mut acc = 0.0;
    let mut defined_bins = 0usize;
    for t in 0..horizon {
        if cnt[t] >= 2 {
            let k = f64::from(cnt[t]);
            let r = (re[t] * re[t] + im[t] * im[t]).sqrt() / k;
            r_trace[t] = r;
            acc += r;
            defined_bins += 1;
        }
    }
    if defined_bins == 0 {
        return None;
    }
    Some(SynchronyReport {
        r_trace,
        r_mean: acc / defined_bins as f64,
        included_nodes: trains.len(),
        excluded_nodes,
        defined_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    #[test]
    fn periodic_train_has_zero_cv() {
        let spikes = vec![(0..50u32).map(|k| 7 * k).collect::<Vec<_>>()];
        let rep = spike_statistics(&spikes, 400, 0.005, 200, 1).unwrap();
        assert_eq!(rep.isi_cv, Some(0.0));
        assert_eq!(rep.cv_ci, Some((0.0, 0.0)));
        assert!((rep.mean_rate_hz - 50.0 / (400.0 * 0.005)).abs() < 1e-12);
        assert!(rep.rate_ci.0 <= rep.mean_rate_hz && rep.mean_rate_hz <= rep.rate_ci.1);
    }

    #[test]
    fn poisson_train_cv_is_one_within_the_interval() {
        let mut rng = rng::stream(11, Domain::Test, 0);
        let exp = Exp::new(0.01f64).unwrap(); // mean ISI 100 bins
        let mut t = 0.0f64;
        let mut train = Vec::new();
        for _ in 0..10_000 {
            t += exp.sample(&mut rng).max(1.0);
            train.push(t.round() as u32);
        }
        let horizon = *train.last().unwrap() as usize + 1;
        let rep = spike_statistics(&[train], horizon, 0.005, 400, 2).unwrap();
        let cv = rep.isi_cv.unwrap();
        assert!((cv - 1.0).abs() < 0.05, "cv {cv}");
        let (lo, hi) = rep.cv_ci.unwrap();
        assert!(lo <= 1.0 && 1.0 <= hi, "ci ({lo}, {hi})");
        assert!(lo <= cv && cv <= hi);
    }

    #[test]
    fn sparse_nodes_lose_cv_but_keep_rate() {
        let spikes = vec![vec![5u32], vec![]];
        let rep = spike_statistics(&spikes, 100, 0.005, 50, 3).unwrap();
        assert_eq!(rep.isi_cv, None);
        assert_eq!(rep.cv_ci, None);
        assert_eq!(rep.nodes_with_cv, 0);
        assert!((rep.mean_rate_hz - 1.0).abs() < 1e-12, "one spike over 0.5 s, two nodes");
    }

    #[test]
    fn rejects_out_of_range_and_degenerate_inputs() {
        assert!(matches!(
            spike_statistics(&[vec![10]], 10, 0.005, 10, 0),
            Err(StatsError::SpikeOutOfRange { node: 0, bin: 10, horizon: 10 })
        ));
        assert!(matches!(spike_statistics(&[], 10, 0.005, 0, 0), Err(StatsError::BadBootstrap)));
        assert!(matches!(spike_statistics(&[], 0, 0.005, 1, 0), Err(StatsError::BadHorizon)));
        assert!(matches!(spike_statistics(&[], 10, 0.005, 1, 0), Err(StatsError::Empty)));
        assert!(matches!(avalanche_analysis(&[1], 0.0), Err(StatsError::BadDt)));
    }

    #[test]
    fn runs_of_nonzero_bins_become_sizes() {
        assert_eq!(avalanche_sizes(&[0, 3, 2, 0, 0, 5]), vec![5, 5]);
        assert_eq!(avalanche_sizes(&[1, 1, 0, 2]), vec![2, 2]);
        assert_eq!(avalanche_sizes(&[0, 0]), Vec::<u64>::new());
        // equal sizes leave no spread for the tail MLE: fit absent
        let rep = avalanche_analysis(&[0, 3, 2, 0, 0, 5], 0.005).unwrap();
        assert_eq!(rep.sizes, vec![5, 5]);
        assert!(rep.fit.is_none());
    }

    #[test]
    fn size_mass_is_conserved() {
        let mut rng = rng::stream(21, Domain::Test, 1);
        let counts: Vec<u32> = (0..5000)
            .map(|_| if rng.gen_range(0.0..1.0) < 0.4 { rng.gen_range(0..6) } else { 0 })
            .collect();
        let sizes = avalanche_sizes(&counts);
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        assert_eq!(sizes.iter().sum::<u64>(), total);
    }

    #[test]
    fn hand_evaluated_tail_exponent() {
        let a = power_law_mle(&[2.0, 4.0, 8.0], 2.0);
        assert!((a - (1.0 + 3.0 / 8.0f64.ln())).abs() < 1e-14);
        assert!((a - 2.4427).abs() < 1e-4);
    }

    fn sample_power_law(n: usize, alpha: f64, x_min: f64, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, Domain::Test, 2);
        (0..n)
            .map(|_| x_min * (1.0 - rng.gen_range(0.0..1.0f64)).powf(1.0 / (1.0 - alpha)))
            .collect()
    }

    #[test]
    fn closed_form_mle_matches_numerical_maximum() {
        let xs = sample_power_law(2000, 2.5, 3.0, 5);
        let closed = power_law_mle(&xs, 3.0);
        // golden-section maximisation of the tail likelihood
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (1.0 + 1e-9, 50.0);
        while hi - lo > 1e-10 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if power_law_ll(&xs, 3.0, m1) < power_law_ll(&xs, 3.0, m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let numerical = (lo + hi) / 2.0;
        assert!((closed - numerical).abs() < 1e-6, "{closed} vs {numerical}");
        assert!((closed - 2.5).abs() < 0.1, "recovers the generator within noise");
    }

    #[test]
    fn truncated_normal_mle_recovers_parameters() {
        let mut rng = rng::stream(31, Domain::Test, 3);
        let mut ys = Vec::new();
        while ys.len() < 5000 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = 2.0 + 0.5 * z;
            if y >= 1.8 {
                ys.push(y);
            }
        }
        let (mu, sigma) = truncated_normal_mle(&ys, 1.8);
        assert!((mu - 2.0).abs() < 0.05, "mu {mu}");
        assert!((sigma - 0.5).abs() < 0.04, "sigma {sigma}");
    }

    #[test]
    fn aic_prefers_the_generating_family() {
        let pl = fit_tail(&sample_power_law(3000, 2.2, 1.0, 7)).unwrap();
        assert_eq!(pl.preferred, TailModel::PowerLaw);
        assert!(pl.alpha_hat > 1.0);
        assert!(pl.n_tail >= 2);

        // at a mild truncation the lognormal curvature is unmistakable
        let mut rng = rng::stream(8, Domain::Test, 4);
        let ln: Vec<f64> = (0..3000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (1.0 + 0.35 * z).exp()
            })
            .collect();
        let fit = fit_tail_at(&ln, 2.0).unwrap();
        assert_eq!(fit.preferred, TailModel::LogNormal);
        assert!(fit.aic_ln < fit.aic_pl);
        assert!((fit.mu_hat - 1.0).abs() < 0.1, "mu {}", fit.mu_hat);
        assert!((fit.sigma_hat - 0.35).abs() < 0.05, "sigma {}", fit.sigma_hat);
    }

    #[test]
    fn unison_spiking_saturates_the_order_parameter() {
        let train: Vec<u32> = (1..9u32).map(|k| 10 * k).collect();
        let spikes = vec![train.clone(), train.clone(), train];
        let rep = synchrony_order(&spikes, 100).unwrap();
        assert!((rep.r_mean - 1.0).abs() < 1e-12, "r_mean {}", rep.r_mean);
        assert_eq!(rep.included_nodes, 3);
        for t in 10..=80 {
            assert!((rep.r_trace[t] - 1.0).abs() < 1e-12);
        }
        assert!(rep.r_trace[5].is_nan());
    }

    fn random_trains(n: usize, horizon: usize, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = rng::stream(seed, Domain::Test, 5);
        let exp = Exp::new(0.1f64).unwrap();
        (0..n)
            .map(|_| {
                let mut t = rng.gen_range(0.0..10.0f64);
                let mut train = Vec::new();
                while (t as usize) < horizon {
                    train.push(t as u32);
                    t += exp.sample(&mut rng).max(1.0);
                }
                train
            })
            .collect()
    }

    #[test]
    fn independent_phases_scale_as_inverse_sqrt_n() {
        let r16 = synchrony_order(&random_trains(16, 20_000, 41), 20_000).unwrap().r_mean;
        let r64 = synchrony_order(&random_trains(64, 20_000, 42), 20_000).unwrap().r_mean;
        let expect16 = 0.886 / 4.0;
        let expect64 = 0.886 / 8.0;
        assert!((r16 / expect16 - 1.0).abs() < 0.25, "r16 {r16} vs {expect16}");
        assert!((r64 / expect64 - 1.0).abs() < 0.25, "r64 {r64} vs {expect64}");
        let ratio = r16 / r64;
        assert!(ratio > 1.5 && ratio < 2.7, "ratio {ratio}");
    }

    #[test]
    fn order_parameter_is_bounded_and_label_free() {
        let spikes = random_trains(10, 3000, 43);
        let rep = synchrony_order(&spikes, 3000).unwrap();
        for &r in &rep.r_trace {
            assert!(r.is_nan() || (0.0..=1.0 + 1e-12).contains(&r));
        }
        let mut permuted = spikes.clone();
        permuted.reverse();
        let back = synchrony_order(&permuted, 3000).unwrap();
        assert!((rep.r_mean - back.r_mean).abs() < 1e-12);
        assert_eq!(rep.defined_bins, back.defined_bins);
    }

    #[test]
    fn synchrony_absent_without_usable_trains() {
        assert!(synchrony_order(&[vec![5u32], vec![]], 100).is_none());
        // one usable node never gives a bin with two defined phases
        assert!(synchrony_order(&[vec![5u32], vec![1, 9]], 100).is_none());
        let rep = synchrony_order(&[vec![5u32], vec![1, 9], vec![2, 8]], 100).unwrap();
        assert_eq!(rep.excluded_nodes, 1);
        assert_eq!(rep.included_nodes, 2);
    }

    #[test]
    fn bootstrap_intervals_contain_the_point_estimates() {
        let spikes = random_trains(12, 4000, 44);
        let rep = spike_statistics(&spikes, 4000, 0.005, 300, 4).unwrap();
        assert!(rep.rate_ci.0 <= rep.mean_rate_hz && rep.mean_rate_hz <= rep.rate_ci.1);
        let (lo, hi) = rep.cv_ci.unwrap();
        let cv = rep.isi_cv.unwrap();
        assert!(lo <= cv && cv <= hi, "cv {cv} ci ({lo}, {hi})");
        // determinism
        let again = spike_statistics(&spikes, 4000, 0.005, 300, 4).unwrap();
        assert_eq!(rep, again);
    }
}
