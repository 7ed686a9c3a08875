//! Weighted directed coupling graph with per-link integer-bin delays,
//! optional congestion gates, spectral quantities, and fabric admission
//! checks.
//!
//! Convention: `w[i][j]` weights the influence of sender `j` on receiver
//! `i`, so the drive into node `i` is `g * sum_j w_ij * S_j(t - tau_ij)`.
//! Edge lists on disk are `src,dst,weight[,delay_ms]` (sender first).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Domain};
use rand::Rng;

/// Relative tolerance for the power-iteration spectral radius.
pub const POWER_ITER_TOL: f64 = 1e-9;
/// Iteration cap before falling back to a dense eigensolve.
pub const POWER_ITER_MAX: usize = 100_000;
/// Largest matrix the dense fallback will accept.
pub const DENSE_FALLBACK_MAX_N: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node index {0} out of range for n = {1}")]
    NodeOutOfRange(usize, usize),
    #[error("self-loop on node {0}: diagonal must stay zero")]
    SelfLoop(usize),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),
    #[error("negative or non-finite weight on edge {0} -> {1}")]
    BadWeight(usize, usize),
    #[error("negative delay")]
    NegativeDelay,
    #[error("time base must be > 0")]
    BadTimeBase,
    #[error("spectral radius is zero: cannot normalise")]
    ZeroRadius,
    #[error("power iteration did not converge and n = {0} exceeds the dense fallback limit")]
    NoConvergence(usize),
    #[error("link-queue time constant must be > 0")]
    BadTauQ,
    #[error("power gate exponent must be > 1, got {0}")]
    BadGateExponent(f64),
    #[error("link occupancy {0} outside [0, 1]")]
    BadOccupancy(f64),
    #[error("negative rate for node {0}")]
    NegativeRate(usize),
    #[error("rates length {0} does not match node count {1}")]
    RateLenMismatch(usize, usize),
    #[error("malformed edge list line {line}: {reason}")]
    ParseError { line: usize, reason: String },
}

/// One directed link, receiver-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEntry {
    /// Receiver.
    pub row: usize,
    /// Sender.
    pub col: usize,
    pub weight: f64,
    pub delay_bins: u32,
}

/// Bounded encoding applied to presynaptic drive before it feeds the link
/// queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaS {
    /// Clip to [0, 1].
    Clip01,
    /// Logistic squash `1 / (1 + e^{-S})`.
    Logistic,
}

impl SigmaS {
    pub fn apply(&self, s: f64) -> f64 {
        match self {
            SigmaS::Clip01 => s.clamp(0.0, 1.0),
            SigmaS::Logistic => 1.0 / (1.0 + (-s).exp()),
        }
    }
}

/// Congestion gate shape. Output is in [0, 1] and non-increasing in
/// occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    /// Capacity fade `(1 - q)^p`, `p > 1`.
    Power { p: f64 },
    /// `1 / (1 + e^{k (q - theta)})`.
    Logistic { k: f64, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGateSpec {
    pub kind: GateKind,
    /// Link-queue time constant in bins.
    pub tau_q: f64,
    pub sigma_s: SigmaS,
}

impl LinkGateSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.tau_q > 0.0) {
            return Err(GraphError::BadTauQ);
        }
        if let GateKind::Power { p } = self.kind {
            if !(p > 1.0) {
                return Err(GraphError::BadGateExponent(p));
            }
        }
        Ok(())
    }

    /// Gate value at occupancy `q` in [0, 1].
    pub fn gate(&self, q: f64) -> f64 {
        match self.kind {
            GateKind::Power { p } => (1.0 - q).max(0.0).powf(p),
            GateKind::Logistic { k, theta } => 1.0 / (1.0 + (k * (q - theta)).exp()),
        }
    }
}

/// Immutable weighted digraph. Entries are sorted by `(row, col)` so every
/// traversal, and therefore every simulation, is bit-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingGraph {
    n: usize,
    entries: Vec<GraphEntry>,
    /// Entry indices grouped by sender, for spike fan-out.
    out_index: Vec<Vec<usize>>,
    /// Global gain multiplying every weight at the dynamics level.
    pub g: f64,
    pub gate: Option<LinkGateSpec>,
}

impl CouplingGraph {
    /// Builds from `(src, dst, weight, delay_bins)` tuples.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64, u32)>,
    ) -> Result<Self, GraphError> {
        let mut entries = Vec::new();
        for (src, dst, w, delay) in edges {
            if src >= n {
                return Err(GraphError::NodeOutOfRange(src, n));
            }
            if dst >= n {
                return Err(GraphError::NodeOutOfRange(dst, n));
            }
            if src == dst {
                return Err(GraphError::SelfLoop(src));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::BadWeight(src, dst));
            }
            entries.push(GraphEntry { row: dst, col: src, weight: w, delay_bins: delay });
        }
        entries.sort_by_key(|e| (e.row, e.col));
        for pair in entries.windows(2) {
            if pair[0].row == pair[1].row && pair[0].col == pair[1].col {
                return Err(GraphError::DuplicateEdge(pair[0].col, pair[0].row));
            }
        }
        let mut out_index = vec![Vec::new(); n];
        for (k, e) in entries.iter().enumerate() {
            out_index[e.col].push(k);
        }
        Ok(CouplingGraph { n, entries, out_index, g: 1.0, gate: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[GraphEntry] {
        &self.entries
    }

    /// Entry indices whose sender is `node`.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_index[node]
    }

    pub fn max_delay_bins(&self) -> u32 {
        self.entries.iter().map(|e| e.delay_bins).max().unwrap_or(0)
    }

    pub fn with_gain(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_gate(mut self, gate: LinkGateSpec) -> Self {
        self.gate = Some(gate);
        self
    }

    pub fn with_uniform_delay(mut self, delay_bins: u32) -> Self {
        for e in &mut self.entries {
            e.delay_bins = delay_bins;
        }
        self
    }

    /// `y = W x` (gain not applied).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for e in &self.entries {
            y[e.row] += e.weight * x[e.col];
        }
    }

    /// `y = W^T x`.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for e in &self.entries {
            y[e.col] += e.weight * x[e.row];
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for e in &self.entries {
            m[(e.row, e.col)] = e.weight;
        }
        m
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.weight *= factor;
        }
        out
    }

    /// Serialises in the on-disk edge-list format, delays in milliseconds.
    pub fn to_edge_list_string(&self, dt_seconds: f64) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let ms = e.delay_bins as f64 * dt_seconds * 1000.0;
            s.push_str(&format!("{},{},{},{}\n", e.col, e.row, e.weight, ms));
        }
        s
    }

    /// Parses `src,dst,weight[,delay_ms]` lines. Blank lines and `#`
    /// comments are skipped; node count is one past the largest index.
    pub fn from_edge_list_str(text: &str, dt_seconds: f64) -> Result<Self, GraphError> {
        if !(dt_seconds > 0.0) {
            return Err(GraphError::BadTimeBase);
        }
        let mut raw = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 && parts.len() != 4 {
                return Err(GraphError::ParseError {
                    line: lineno + 1,
                    reason: format!("expected 3 or 4 fields, got {}", parts.len()),
                });
            }
            let field = |idx: usize, what: &str| -> Result<f64, GraphError> {
                parts[idx].parse::<f64>().map_err(|_| GraphError::ParseError {
                    line: lineno + 1,
                    reason: format!("bad {what}: {:?}", parts[idx]),
                })
            };
            let index = |idx: usize, what: &str| -> Result<usize, GraphError> {
                let v = field(idx, what)?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(GraphError::ParseError {
                        line: lineno + 1,
                        reason: format!("{what} must be a non-negative integer, got {v}"),
                    });
                }
                Ok(v as usize)
            };
            let src = index(0, "src")?;
            let dst = index(1, "dst")?;
            let w = field(2, "weight")?;
            let delay_ms = if parts.len() == 4 { field(3, "delay_ms")? } else { 0.0 };
            if delay_ms < 0.0 {
                return Err(GraphError::NegativeDelay);
            }
            let bins = quantise_delay(delay_ms * 1e-3, dt_seconds)?;
            n = n.max(src + 1).max(dst + 1);
            raw.push((src, dst, w, bins));
        }
        CouplingGraph::from_edges(n, raw)
    }
}

/// Spectral summary of the weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStats {
    pub rho: f64,
    /// Max row sum.
    pub norm_inf: f64,
    /// Largest singular value.
    pub norm_2: f64,
    /// Dominant non-negative mode, unit 2-norm.
    pub perron_vector: Vec<f64>,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Spectral radius, operator norms, and the Perron mode.
///
/// The radius comes from power iteration on the non-negative weight matrix
/// to relative tolerance [`POWER_ITER_TOL`]; spectra with several
/// equal-modulus eigenvalues (cycles) defeat it, so a dense eigensolve
/// takes over up to [`DENSE_FALLBACK_MAX_N`] nodes. The Perron mode is
/// extracted with a unit shift, which breaks those ties without moving the
/// eigenvectors.
pub fn spectral_stats(wg: &CouplingGraph) -> Result<SpectralStats, GraphError> {
    let n = wg.n();
    let norm_inf = {
        let mut row_sums = vec![0.0; n];
        for e in wg.entries() {
            row_sums[e.row] += e.weight;
        }
        row_sums.iter().cloned().fold(0.0, f64::max)
    };

    // rho: plain power iteration on W.
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut rho_est = f64::NAN;
    let mut converged = false;
    for _ in 0..POWER_ITER_MAX {
        wg.matvec(&x, &mut y);
        let norm = norm2(&y);
        if norm == 0.0 {
            // W^k 1 = 0 with W >= 0 forces W nilpotent.
            rho_est = 0.0;
            converged = true;
            break;
        }
        if rho_est.is_finite() && (norm - rho_est).abs() <= POWER_ITER_TOL * norm.max(1e-300) {
            rho_est = norm;
            converged = true;
            break;
        }
        rho_est = norm;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    let rho = if converged {
        rho_est
    } else if n <= DENSE_FALLBACK_MAX_N {
        wg.to_dense()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    } else {
        return Err(GraphError::NoConvergence(n));
    };

    // Perron mode via the shifted matrix W + I: eigenvalues move to
    // lambda + 1, making the non-negative dominant mode strictly largest
    // in modulus whenever rho > 0.
    let mut p = vec![1.0 / (n as f64).sqrt(); n];
    let mut q = vec![0.0; n];
    for _ in 0..POWER_ITER_MAX.min(20_000) {
        wg.matvec(&p, &mut q);
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += *pi;
        }
        let norm = norm2(&q);
        if norm == 0.0 {
            break;
        }
        let mut delta = 0.0;
        for (pi, qi) in p.iter_mut().zip(&q) {
            let next = qi / norm;
            delta = f64::max(delta, (next - *pi).abs());
            *pi = next;
        }
        if delta <= POWER_ITER_TOL {
            break;
        }
    }

    // norm_2 via power iteration on W^T W, which is symmetric PSD and
    // immune to the cycle problem.
    let mut s = vec![1.0 / (n as f64).sqrt(); n];
    let mut t = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut sigma2 = 0.0f64;
    for _ in 0..POWER_ITER_MAX {
        wg.matvec(&s, &mut t);
        wg.matvec_t(&t, &mut u);
        let norm = norm2(&u);
        if norm == 0.0 {
            sigma2 = 0.0;
            break;
        }
        if (norm - sigma2).abs() <= POWER_ITER_TOL * norm.max(1e-300) {
            sigma2 = norm;
            break;
        }
        sigma2 = norm;
        for (si, ui) in s.iter_mut().zip(&u) {
            *si = ui / norm;
        }
    }

    Ok(SpectralStats { rho, norm_inf, norm_2: sigma2.sqrt(), perron_vector: p })
}

/// Rescales all weights so the spectral radius hits `target`.
pub fn normalise_to_rho(wg: &CouplingGraph, target: f64) -> Result<CouplingGraph, GraphError> {
    let stats = spectral_stats(wg)?;
    if stats.rho <= 0.0 {
        return Err(GraphError::ZeroRadius);
    }
    debug_assert!(target > 0.0);
    Ok(wg.scaled(target / stats.rho))
}

/// One forward step of the per-link leaky queue plus its gate value:
/// `q' = q + (dt/tau_q)(-q + sigma_s(S))`, clipped to [0, 1].
pub fn gate_and_link_queue_step(
    q: f64,
    s_drive: f64,
    spec: &LinkGateSpec,
    dt_bins: f64,
) -> Result<(f64, f64), GraphError> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&q) {
        return Err(GraphError::BadOccupancy(q));
    }
    let q_new = (q + (dt_bins / spec.tau_q) * (-q + spec.sigma_s.apply(s_drive))).clamp(0.0, 1.0);
    Ok((q_new, spec.gate(q_new)))
}

fn quantise_delay(tau_seconds: f64, t_base: f64) -> Result<u32, GraphError> {
    if tau_seconds < 0.0 {
        return Err(GraphError::NegativeDelay);
    }
    Ok((tau_seconds / t_base).round() as u32)
}

/// Rounds physical delays onto the integer tick grid. Two delays that
/// differ by at least one tick cannot swap order under this rounding.
pub fn quantise_delays(tau_seconds: &[f64], t_base: f64) -> Result<Vec<u32>, GraphError> {
    if !(t_base > 0.0) {
        return Err(GraphError::BadTimeBase);
    }
    tau_seconds.iter().map(|&tau| quantise_delay(tau, t_base)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBudgetReport {
    pub ok: bool,
    /// Receiver with the highest fan-in event load.
    pub worst_row: usize,
    /// That row's load in events per second.
    pub load: f64,
}

/// Conservative fabric admission check: every receiver's summed
/// presynaptic event rate must stay within `r_max` (inclusive).
pub fn rate_budget_check(
    wg: &CouplingGraph,
    rates_hz: &[f64],
    r_max: f64,
) -> Result<RateBudgetReport, GraphError> {
    if rates_hz.len() != wg.n() {
        return Err(GraphError::RateLenMismatch(rates_hz.len(), wg.n()));
    }
    if let Some(i) = rates_hz.iter().position(|r| !(*r >= 0.0)) {
        return Err(GraphError::NegativeRate(i));
    }
    let mut loads = vec![0.0; wg.n()];
    for e in wg.entries() {
        if e.weight != 0.0 {
            loads[e.row] += rates_hz[e.col];
        }
    }
    let (worst_row, load) = loads
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    Ok(RateBudgetReport { ok: load <= r_max, worst_row, load })
}

/// Bidirectional path 0 - 1 - ... - n-1, unit weights, zero delay.
pub fn chain(n: usize) -> Result<CouplingGraph, GraphError> {
    let mut edges = Vec::new();
    for i in 0..n.saturating_sub(1) {
        edges.push((i, i + 1, 1.0, 0));
        edges.push((i + 1, i, 1.0, 0));
    }
    CouplingGraph::from_edges(n, edges)
}

/// Hub 0 linked both ways to every leaf, unit weights, zero delay.
pub fn star(n: usize) -> Result<CouplingGraph, GraphError> {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((0, i, 1.0, 0));
        edges.push((i, 0, 1.0, 0));
    }
    CouplingGraph::from_edges(n, edges)
}

/// Undirected preferential-attachment graph: a complete seed on `m + 1`
/// nodes, then each newcomer wires to `m` distinct targets chosen with
/// probability proportional to degree. Unit weights, zero delay.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<CouplingGraph, GraphError> {
    assert!(m >= 1, "attachment m must be >= 1");
    assert!(n > m, "need n > m");
    let mut rng = rng::stream(seed, Domain::Graph, 0);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Endpoint urn: each node appears once per incident edge.
    let mut urn: Vec<usize> = Vec::new();
    for i in 0..=m {
        for j in (i + 1)..=m {
            edges.push((i, j));
            urn.push(i);
            urn.push(j);
        }
    }
    for v in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let pick = urn[rng.gen_range(0..urn.len())];
            if !targets.contains(&pick) {
                targets.push(pick);
            }
        }
        for &t in &targets {
            edges.push((v, t));
            urn.push(v);
            urn.push(t);
        }
    }
    let mut full = Vec::with_capacity(edges.len() * 2);
    for (a, b) in edges {
        full.push((a, b, 1.0, 0));
        full.push((b, a, 1.0, 0));
    }
    CouplingGraph::from_edges(n, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_node_symmetric_ones() {
        let g = CouplingGraph::from_edges(2, [(0, 1, 1.0, 0), (1, 0, 1.0, 0)]).unwrap();
        let s = spectral_stats(&g).unwrap();
        assert_relative_eq!(s.rho, 1.0, epsilon = 1e-8);
        assert_relative_eq!(s.norm_inf, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.norm_2, 1.0, epsilon = 1e-8);
        assert_relative_eq!(s.perron_vector[0], s.perron_vector[1], epsilon = 1e-8);
        assert_relative_eq!(norm2(&s.perron_vector), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn strictly_upper_triangular_is_nilpotent() {
        let g = CouplingGraph::from_edges(4, [(1, 0, 0.8, 0), (2, 1, 0.5, 0), (3, 2, 0.9, 0)])
            .unwrap();
        let s = spectral_stats(&g).unwrap();
        assert_eq!(s.rho, 0.0);
        assert!(s.norm_inf > 0.0);
        assert!(normalise_to_rho(&g, 1.0).is_err());
    }

    #[test]
    fn cyclic_spectrum_uses_dense_fallback() {
        // Off-diagonal 2 / 0.5: power iteration oscillates, true rho = 1.
        let g = CouplingGraph::from_edges(2, [(0, 1, 2.0, 0), (1, 0, 0.5, 0)]).unwrap();
        let s = spectral_stats(&g).unwrap();
        assert_relative_eq!(s.rho, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ba_normalised_radius_roundtrip() {
        let g = barabasi_albert(250, 3, 42).unwrap();
        let unit = normalise_to_rho(&g, 1.0).unwrap();
        let s = spectral_stats(&unit).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-6, "rho after normalise = {}", s.rho);
        assert!(s.perron_vector.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert_eq!(
            CouplingGraph::from_edges(2, [(0, 0, 1.0, 0)]).unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert_eq!(
            CouplingGraph::from_edges(2, [(0, 1, 1.0, 0), (0, 1, 0.5, 0)]).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert!(matches!(
            CouplingGraph::from_edges(2, [(0, 1, -1.0, 0)]),
            Err(GraphError::BadWeight(0, 1))
        ));
        assert!(matches!(
            CouplingGraph::from_edges(2, [(0, 3, 1.0, 0)]),
            Err(GraphError::NodeOutOfRange(3, 2))
        ));
    }

    #[test]
    fn gate_examples() {
        let power = LinkGateSpec {
            kind: GateKind::Power { p: 2.0 },
            tau_q: 4.0,
            sigma_s: SigmaS::Clip01,
        };
        // zero drive decays q and leaves the gate open
        let (q1, gate1) = gate_and_link_queue_step(0.5, 0.0, &power, 1.0).unwrap();
        assert!(q1 < 0.5);
        assert_relative_eq!(power.gate(0.0), 1.0);
        assert!(gate1 > 0.0 && gate1 < 1.0);
        // full queue fades the link entirely
        assert_eq!(power.gate(1.0), 0.0);

        let logi = LinkGateSpec {
            kind: GateKind::Logistic { k: 8.0, theta: 0.5 },
            tau_q: 4.0,
            sigma_s: SigmaS::Clip01,
        };
        assert_relative_eq!(logi.gate(0.5), 0.5, epsilon = 1e-12);

        let bad = LinkGateSpec { tau_q: 0.0, ..power };
        assert_eq!(gate_and_link_queue_step(0.5, 0.0, &bad, 1.0).unwrap_err(), GraphError::BadTauQ);
        let badp = LinkGateSpec { kind: GateKind::Power { p: 1.0 }, ..power };
        assert!(badp.validate().is_err());
    }

    #[test]
    fn delay_quantisation_hand_values() {
        assert_eq!(quantise_delays(&[0.0], 0.005).unwrap(), vec![0]);
        assert_eq!(quantise_delays(&[0.012], 0.005).unwrap(), vec![2]);
        assert_eq!(quantise_delays(&[0.025], 0.005).unwrap(), vec![5]);
        assert!(quantise_delays(&[-0.001], 0.005).is_err());
        assert!(quantise_delays(&[0.01], 0.0).is_err());
    }

    #[test]
    fn rate_budget_star_hub() {
        let g = star(250).unwrap();
        let report = rate_budget_check(&g, &vec![0.0; 250], 2000.0).unwrap();
        assert!(report.ok);

        let report = rate_budget_check(&g, &vec![10.0; 250], 2000.0).unwrap();
        assert!(!report.ok);
        assert_eq!(report.worst_row, 0);
        assert_relative_eq!(report.load, 2490.0, epsilon = 1e-9);

        let single = CouplingGraph::from_edges(2, [(0, 1, 1.0, 0)]).unwrap();
        let report = rate_budget_check(&single, &[2000.0, 0.0], 2000.0).unwrap();
        assert!(report.ok, "budget boundary is inclusive");
    }

    #[test]
    fn edge_list_roundtrip() {
        let text = "# sender,receiver,weight,delay_ms\n0,1,0.5,12\n1,0,0.25\n\n2,0,1.0,25\n";
        let g = CouplingGraph::from_edge_list_str(text, 0.005).unwrap();
        assert_eq!(g.n(), 3);
        let by_pair: Vec<(usize, usize, f64, u32)> =
            g.entries().iter().map(|e| (e.col, e.row, e.weight, e.delay_bins)).collect();
        assert!(by_pair.contains(&(0, 1, 0.5, 2)));
        assert!(by_pair.contains(&(1, 0, 0.25, 0)));
        assert!(by_pair.contains(&(2, 0, 1.0, 5)));

        let dumped = g.to_edge_list_string(0.005);
        let g2 = CouplingGraph::from_edge_list_str(&dumped, 0.005).unwrap();
        assert_eq!(g.entries(), g2.entries());

        assert!(CouplingGraph::from_edge_list_str("0,1\n", 0.005).is_err());
        assert!(CouplingGraph::from_edge_list_str("0,1,x\n", 0.005).is_err());
    }

    #[test]
    fn generators_have_expected_shape() {
        let c = chain(5).unwrap();
        assert_eq!(c.entries().len(), 8);
        let s = star(5).unwrap();
        assert_eq!(s.entries().len(), 8);
        assert_eq!(s.out_edges(0).len(), 4);

        let ba1 = barabasi_albert(50, 2, 7).unwrap();
        let ba2 = barabasi_albert(50, 2, 7).unwrap();
        assert_eq!(ba1.entries(), ba2.entries(), "same seed, same graph");
        let ba3 = barabasi_albert(50, 2, 8).unwrap();
        assert_ne!(ba1.entries(), ba3.entries(), "different seed, different graph");
        // every newcomer brings m undirected edges on top of the seed clique
        let expected = (2 * 3 / 2 + (50 - 3) * 2) * 2;
        assert_eq!(ba1.entries().len(), expected);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        // rho <= norm_inf and rho <= norm_2 on random sparse matrices.
        #[test]
        fn radius_below_both_norms(
            n in 2usize..24,
            edges in prop::collection::vec((0usize..24, 0usize..24, 0.0f64..2.0), 1..60),
        ) {
            let filtered: Vec<_> = {
                let mut seen = std::collections::BTreeSet::new();
                edges.into_iter()
                    .filter(|(s, d, _)| *s % n != *d % n && seen.insert((*s % n, *d % n)))
                    .map(|(s, d, w)| (s % n, d % n, w, 0u32))
                    .collect()
            };
            prop_assume!(!filtered.is_empty());
            let g = CouplingGraph::from_edges(n, filtered).unwrap();
            let stats = spectral_stats(&g).unwrap();
            prop_assert!(stats.rho <= stats.norm_inf + 1e-7 * stats.norm_inf.max(1.0));
            prop_assert!(stats.rho <= stats.norm_2 + 1e-7 * stats.norm_2.max(1.0));
        }

        // Gates stay in [0,1] and never increase with occupancy.
        #[test]
        fn gates_bounded_and_monotone(
            p in 1.01f64..6.0,
            k in 0.5f64..20.0,
            theta in 0.0f64..1.0,
            q in 0.0f64..1.0,
            dq in 0.0f64..0.5,
        ) {
            let q2 = (q + dq).min(1.0);
            for spec in [GateKind::Power { p }, GateKind::Logistic { k, theta }] {
                let gate = LinkGateSpec { kind: spec, tau_q: 1.0, sigma_s: SigmaS::Clip01 };
                let a = gate.gate(q);
                let b = gate.gate(q2);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b <= a + 1e-12);
            }
        }

        // The link queue cannot escape [0,1] under any bounded drive.
        #[test]
        fn link_queue_stays_in_unit_interval(
            q0 in 0.0f64..1.0,
            tau_q in 0.2f64..10.0,
            drives in prop::collection::vec(-5.0f64..5.0, 1..50),
        ) {
            let spec = LinkGateSpec {
                kind: GateKind::Power { p: 2.0 },
                tau_q,
                sigma_s: SigmaS::Clip01,
            };
            let mut q = q0;
            for s in drives {
                let (q2, gate) = gate_and_link_queue_step(q, s, &spec, 1.0).unwrap();
                prop_assert!((0.0..=1.0).contains(&q2));
                prop_assert!((0.0..=1.0).contains(&gate));
                q = q2;
            }
        }

        // Normalising then re-measuring lands on the target.
        #[test]
        fn normalise_hits_target(
            seed in 0u64..1000,
            target in 0.25f64..3.0,
        ) {
            let g = barabasi_albert(40, 2, seed).unwrap();
            let scaled = normalise_to_rho(&g, target).unwrap();
            let s = spectral_stats(&scaled).unwrap();
            prop_assert!((s.rho - target).abs() <= 1e-6 * target.max(1.0));
        }
    }
}
