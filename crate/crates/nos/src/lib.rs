//! NOS: a two-state spiking abstraction of network congestion.
//!
//! Each node carries a normalised queue occupancy `v` and a recovery
//! resource `u`. Bounded excitability, explicit service/damping leaks, soft
//! resets, per-link delays and gates, and shot-noise arrivals combine into an
//! event-driven simulator plus an analysis toolkit: equilibrium solving,
//! Routh-Hurwitz tests, network coupling thresholds, bifurcation
//! continuation, queueing baselines, zero-shot forecasting, and spike /
//! avalanche statistics.
//!
//! Crate layout mirrors the pipeline:
//! - [`model`]: node parameters, drift, resets, scaling, quantisation
//! - [`graph`]: coupling matrices, spectral stats, link gates, generators
//! - [`drive`]: shot-noise / MMPP / trace arrival processes
//! - [`stability`]: equilibria, Jacobians, margins, certificates
//! - [`continuation`]: fold/Hopf detection and coupling-gain sweeps
//! - [`sim`]: the bin-synchronous event loop
//! - [`baselines`]: M/M/1(/K) references, calibration, marking controllers
//! - [`forecast`]: label-free forecasters and the residual event protocol
//! - [`spikestats`]: rates, ISI CV, avalanche tails, synchrony order
//!
//! All randomness flows through [`rng`], a counter-based ChaCha12 stream
//! layout, so every result in the crate is reproducible from one seed.

pub mod baselines;
pub mod continuation;
pub mod drive;
pub mod forecast;
pub mod graph;
pub mod model;
pub mod par;
pub mod rng;
pub mod sim;
pub mod spikestats;
pub mod stability;
