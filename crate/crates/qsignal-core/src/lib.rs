//! Adaptive traffic-signal control driven by quadratic unconstrained binary
//! optimization (QUBO), together with the deterministic microscopic traffic
//! simulator used to evaluate it.
//!
//! The crate is `no_std` + `alloc` so the optimization and control layers can
//! run on embedded signal hardware; all file IO, CLI handling, and report
//! formatting live in the companion `qsignal-cli` crate.
//!
//! Layout:
//! - [`qubo`]: QUBO/Ising problem types, exhaustive solver (oracle), and a
//!   single-flip Metropolis simulated annealer (workhorse).
//! - [`signal`]: halting-count objective construction, solution decoding, and
//!   green-duration rules.
//! - [`controller`]: the three signal controllers (fixed cycle, sequential
//!   fast-rolling, and two-stage fair-sharing).
//! - [`sim`]: lanes, junctions, mixed car/scooter/truck flows, and the 1 Hz
//!   update loop.
//! - [`scenario`]: the built-in intersections and demand presets.
//! - [`experiment`]: the experiment runner, speed metrics, and sweeps.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod controller;
pub mod experiment;
pub mod qubo;
pub mod rng;
pub mod scenario;
pub mod signal;
pub mod sim;
