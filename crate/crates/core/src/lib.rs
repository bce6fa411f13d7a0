//! Solver toolkit for robust charging-station siting and routing-scheduling
//! of modular electric transit units.
//!
//! The pipeline: build a discretized space-time-SoC network from a line
//! instance, prune it with per-station SoC/time bounds, aggregate travel
//! chains into super arcs, then solve the two-stage robust design problem by
//! scenario generation on the master side and column generation for unit
//! paths, with a worst-case demand subproblem over a budgeted uncertainty
//! set. Includes arc-flow and Benders-style baselines plus brute-force
//! oracles for small instances.

pub mod instance;
pub mod synth;
pub mod network;
pub mod pricing;
pub mod colgen;
pub mod robust;
pub mod ccg;
pub mod benchmarks;
pub mod report;
