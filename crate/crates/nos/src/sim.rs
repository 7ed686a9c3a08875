//! Bin-synchronous network simulation: delayed spike delivery over
//! optionally gated links, forward-Euler state stepping with clamps, noisy
//! thresholds, and event or continuous resets.
//!
//! Each bin runs a fixed pipeline:
//!
//! 1. deliver spikes whose delay elapses this bin into the synaptic
//!    accumulator, attenuated by the link gate as of the previous bin;
//! 2. draw this bin's exogenous drive and thresholds;
//! 3. one forward-Euler step from the start-of-bin state, then clamp
//!    `v` to `[v_rest, v_max]` and `u` to `[u_min, u_max]`;
//! 4. threshold test: record and fan out spikes (delivery is never
//!    same-bin: a zero-delay link still takes one bin), apply the reset;
//! 5. advance the per-link queues with this bin's sender spikes and zero
//!    the accumulator.
//!
//! Everything is deterministic given `(config, seed)`: drives, thresholds,
//! and initial jitter draw from disjoint ChaCha streams.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::drive::{DriveError, DriveSampler, DriveSpec};
use crate::graph::{gate_and_link_queue_step, CouplingGraph, GraphError};
use crate::model::{
    self, ModelError, NodeParams, ResetKind, ResetSpec, ThresholdNoise, ThresholdSpec,
    DEFAULT_DT_SECONDS,
};
use crate::rng::{self, Domain};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be >= 1")]
    BadHorizon,
    #[error("dt must be > 0")]
    BadDt,
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("bad clamp bounds: {0}")]
    BadClamp(&'static str),
    #[error("adaptation window must be >= 1 bin and kappa_a finite and >= 0")]
    BadAdaptation,
    #[error("{what} has {got} entries, graph has {want} nodes")]
    LenMismatch { what: &'static str, got: usize, want: usize },
    #[error("non-finite state or input at bin {bin}, node {node}")]
    NonFinite { bin: usize, node: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One setting for every node, or one per node.
#[derive(Debug, Clone, PartialEq)]
pub enum Per<T> {
    Shared(T),
    PerNode(Vec<T>),
}

impl<T> Per<T> {
    pub fn get(&self, i: usize) -> &T {
        match self {
            Per::Shared(t) => t,
            Per::PerNode(v) => &v[i],
        }
    }

    fn check_len(&self, n: usize, what: &'static str) -> Result<(), SimError> {
        match self {
            Per::PerNode(v) if v.len() != n => {
                Err(SimError::LenMismatch { what, got: v.len(), want: n })
            }
            _ => Ok(()),
        }
    }
}

/// Hard state bounds applied after every Euler step. `v` is additionally
/// floored at each node's own `v_rest`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampSpec {
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for ClampSpec {
    fn default() -> Self {
        ClampSpec { v_max: 1.5, u_min: -10.0, u_max: 10.0 }
    }
}

/// Initial condition: `v = v_rest + v_eps (+ jitter * U[0,1))`, `u = u0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub v_eps: f64,
    pub jitter: f64,
    pub u0: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec { v_eps: 0.01, jitter: 0.0, u0: 0.0 }
    }
}

/// Activity-dependent recovery speed-up: each node's `a` becomes
/// `a + kappa_a * r` where `r` is its own spike rate (spikes per bin) over
/// the trailing `window_bins` bins, excluding the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationSpec {
    pub kappa_a: f64,
    pub window_bins: usize,
}

/// Which optional traces to keep. Spike times are always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecordSpec {
    /// End-of-bin `v` and `u` per node.
    pub states: bool,
    /// Total input (synaptic + exogenous) per node per bin.
    pub inputs: bool,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: Per<NodeParams>,
    pub graph: CouplingGraph,
    /// A `Shared` drive fans out to one independent sub-stream per node
    /// (stream `seed_stream + i`); `PerNode` specs are used verbatim.
    pub drive: Per<DriveSpec>,
    pub threshold: ThresholdSpec,
    pub reset: ResetSpec,
    pub dt_seconds: f64,
    pub horizon: usize,
    pub clamps: ClampSpec,
    pub adaptation: Option<AdaptationSpec>,
    pub record: RecordSpec,
    pub init: InitSpec,
}

impl SimConfig {
    pub fn new(
        graph: CouplingGraph,
        params: Per<NodeParams>,
        drive: Per<DriveSpec>,
        horizon: usize,
    ) -> Self {
        SimConfig {
            params,
            graph,
            drive,
            threshold: ThresholdSpec::default(),
            reset: ResetSpec::default(),
            dt_seconds: DEFAULT_DT_SECONDS,
            horizon,
            clamps: ClampSpec::default(),
            adaptation: None,
            record: RecordSpec::default(),
            init: InitSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.n();
        if n == 0 {
            return Err(SimError::EmptyGraph);
        }
        if self.horizon == 0 {
            return Err(SimError::BadHorizon);
        }
        if !(self.dt_seconds > 0.0) {
            return Err(SimError::BadDt);
        }
        self.params.check_len(n, "params")?;
        self.drive.check_len(n, "drive")?;
        for i in 0..n {
            let p = self.params.get(i);
            p.validate_structural()?;
            if !(self.clamps.v_max > p.v_rest) {
                return Err(SimError::BadClamp("v_max must exceed every v_rest"));
            }
        }
        if !(self.clamps.u_min < self.clamps.u_max) {
            return Err(SimError::BadClamp("u_min must be below u_max"));
        }
        self.threshold.validate()?;
        self.reset.validate()?;
        if let Some(ad) = &self.adaptation {
            if ad.window_bins == 0 || !ad.kappa_a.is_finite() || ad.kappa_a < 0.0 {
                return Err(SimError::BadAdaptation);
            }
        }
        if !(self.init.v_eps >= 0.0 && self.init.jitter >= 0.0 && self.init.u0.is_finite()) {
            return Err(SimError::BadClamp("init fields must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Spike bins per node, ascending.
    pub spikes: Vec<Vec<u32>>,
    /// Pre-reset `v` at each spike, aligned with `spikes`.
    pub spike_levels: Vec<Vec<f64>>,
    /// End-of-bin `v` per node, if recorded.
    pub v_trace: Option<Vec<Vec<f64>>>,
    /// End-of-bin `u` per node, if recorded.
    pub u_trace: Option<Vec<Vec<f64>>>,
    /// Per-bin total input per node, if recorded.
    pub i_trace: Option<Vec<Vec<f64>>>,
    /// Spikes across the population per bin.
    pub population_counts: Vec<u32>,
    pub seed: u64,
}

impl SimResult {
    pub fn total_spikes(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }
}

pub fn run_simulation(cfg: &SimConfig, seed: u64) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let n = cfg.graph.n();
    let horizon = cfg.horizon;

    let mut drives: Vec<DriveSampler> = (0..n)
        .map(|i| {
            let owned;
            let spec = match &cfg.drive {
                Per::Shared(s) => {
                    owned = s.clone().with_stream(s.seed_stream.wrapping_add(i as u64));
                    &owned
                }
                Per::PerNode(v) => &v[i],
            };
            DriveSampler::new(spec, horizon, cfg.dt_seconds, seed)
        })
        .collect::<Result<_, _>>()?;

    let noise_on =
        cfg.threshold.sigma > 0.0 && !matches!(cfg.threshold.noise_kind, ThresholdNoise::None);
    let mut th_rng = rng::stream(seed, Domain::Threshold, cfg.threshold.seed_stream);

    let mut v = vec![0.0; n];
    let mut u = vec![cfg.init.u0; n];
    {
        let mut init_rng = rng::stream(seed, Domain::InitState, 0);
        for i in 0..n {
            let base = cfg.params.get(i).v_rest + cfg.init.v_eps;
            v[i] = if cfg.init.jitter > 0.0 {
                base + cfg.init.jitter * init_rng.gen_range(0.0..1.0)
            } else {
                base
            };
            v[i] = v[i].min(cfg.clamps.v_max);
        }
    }

    let entries = cfg.graph.entries();
    // Effective delay is at least one bin, so a slot written at bin t is
    // always read at a strictly later bin and the ring never collides.
    let ring_len = cfg.graph.max_delay_bins().max(1) as usize + 1;
    let mut rings = vec![0u8; entries.len() * ring_len];
    let mut gate_q = vec![0.0f64; if cfg.graph.gate.is_some() { entries.len() } else { 0 }];

    let mut i_syn = vec![0.0f64; n];
    let mut th = vec![0.0f64; n];
    let mut spiked = vec![false; n];
    let mut was_above = vec![false; n];

    let (mut win, mut win_sum) = match &cfg.adaptation {
        Some(ad) => (vec![0u32; n * ad.window_bins], vec![0u32; n]),
        None => (Vec::new(), Vec::new()),
    };

    let mut spikes: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut spike_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut population_counts = vec![0u32; horizon];
    let mut v_trace =
        cfg.record.states.then(|| vec![Vec::with_capacity(horizon); n]);
    let mut u_trace =
        cfg.record.states.then(|| vec![Vec::with_capacity(horizon); n]);
    let mut i_trace =
        cfg.record.inputs.then(|| vec![Vec::with_capacity(horizon); n]);

    for t in 0..horizon {
        let slot = t % ring_len;
        for (li, e) in entries.iter().enumerate() {
            let c = rings[li * ring_len + slot];
            if c > 0 {
                rings[li * ring_len + slot] = 0;
                let gate_v = match &cfg.graph.gate {
                    Some(gs) => gs.gate(gate_q[li]),
                    None => 1.0,
                };
                i_syn[e.row] += cfg.graph.g * e.weight * gate_v * f64::from(c);
            }
        }

        for i in 0..n {
            let xi = if noise_on {
                match cfg.threshold.noise_kind {
                    ThresholdNoise::ClippedGaussian => th_rng.sample::<f64, _>(StandardNormal),
                    ThresholdNoise::Uniform => th_rng.gen_range(-1.0..1.0),
                    ThresholdNoise::None => 0.0,
                }
            } else {
                0.0
            };
            th[i] = cfg.threshold.realise(xi);
        }

        for i in 0..n {
            let base = cfg.params.get(i);
            let mut p = *base;
            if let Some(ad) = &cfg.adaptation {
                p.a += ad.kappa_a * f64::from(win_sum[i]) / ad.window_bins as f64;
            }
            let i_tot = i_syn[i] + drives[i].step();
            if !i_tot.is_finite() {
                return Err(SimError::NonFinite { bin: t, node: i });
            }
            if let Some(tr) = &mut i_trace {
                tr[i].push(i_tot);
            }
            let (mut dv, du) = model::drift(v[i], u[i], i_tot, &p)?;
            if matches!(cfg.reset.kind, ResetKind::ContinuousPullback) {
                dv += model::pullback_term(v[i], th[i], &cfg.reset);
            }
            let (v_new, u_new) = (v[i] + dv, u[i] + du);
            if !v_new.is_finite() || !u_new.is_finite() {
                return Err(SimError::NonFinite { bin: t, node: i });
            }
            v[i] = v_new.clamp(base.v_rest, cfg.clamps.v_max);
            u[i] = u_new.clamp(cfg.clamps.u_min, cfg.clamps.u_max);
        }

        for i in 0..n {
            let above = v[i] >= th[i];
            let fired = match cfg.reset.kind {
                ResetKind::EventExponential => above,
                // continuous reset has no state jump; a spike is the upward
                // crossing itself
                ResetKind::ContinuousPullback => above && !was_above[i],
            };
            if fired {
                spikes[i].push(t as u32);
                spike_levels[i].push(v[i]);
                population_counts[t] += 1;
                for &ei in cfg.graph.out_edges(i) {
                    let d = (entries[ei].delay_bins.max(1) as usize) % ring_len;
                    rings[ei * ring_len + (slot + d) % ring_len] += 1;
                }
                if matches!(cfg.reset.kind, ResetKind::EventExponential) {
                    let (nv, nu) = model::apply_reset(v[i], u[i], &cfg.reset, 1.0);
                    v[i] = nv.clamp(cfg.params.get(i).v_rest, cfg.clamps.v_max);
                    u[i] = nu.clamp(cfg.clamps.u_min, cfg.clamps.u_max);
                }
            }
            was_above[i] = above;
            spiked[i] = fired;
        }

        if let Some(gs) = &cfg.graph.gate {
            for (li, e) in entries.iter().enumerate() {
                let s = if spiked[e.col] { 1.0 } else { 0.0 };
                let (q2, _) = gate_and_link_queue_step(gate_q[li], s, gs, 1.0)?;
                gate_q[li] = q2;
            }
        }

        if let Some(ad) = &cfg.adaptation {
            let w = ad.window_bins;
            for i in 0..n {
                let cell = &mut win[i * w + t % w];
                win_sum[i] -= *cell;
                *cell = u32::from(spiked[i]);
                win_sum[i] += *cell;
            }
        }

        if let Some(tr) = &mut v_trace {
            for i in 0..n {
                tr[i].push(v[i]);
            }
        }
        if let Some(tr) = &mut u_trace {
            for i in 0..n {
                tr[i].push(u[i]);
            }
        }

        for x in &mut i_syn {
            *x = 0.0;
        }
    }

    Ok(SimResult {
        spikes,
        spike_levels,
        v_trace,
        u_trace,
        i_trace,
        population_counts,
        seed,
    })
}
