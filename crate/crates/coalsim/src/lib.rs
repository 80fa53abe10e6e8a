//! Event-driven simulation of an interacting-particle coalescent on the
//! two-dimensional lattice, together with its mean-field (Kingman-type)
//! limit processes and a Monte Carlo harness that compares the two.
//!
//! Blocks perform rate-1 random walks on a large periodic box and co-located
//! pairs merge at rate γ. Alongside the plain merging dynamics the crate
//! implements a "rebirth" variant in which every merge spawns a replacement
//! singleton, a graphical look-down construction that couples all of these
//! pathwise, the pure-death limit chains with their entrance laws, and a set
//! of named experiments with CSV/JSON output.
//!
//! Replicated experiments run on a rayon pool by default; building without
//! the `parallel` feature swaps in an identical sequential path.

pub mod ctmc;
pub mod domain;
pub mod experiments;
pub mod fasthash;
pub mod kingman;
pub mod lookdown;
pub mod numeric;
pub mod par;
pub mod rebirth;
pub mod rng;
pub mod spatial;
pub mod stats;
pub mod walk;

pub use domain::{Block, Individual, LatticeBox, MarkedPartition, Site};
pub use experiments::{run_scenario, summarize, to_csv, Scenario, ScenarioConfig};
pub use spatial::{Gamma, InitKind, InitialConfig, SimParams, SpatialState};
pub use walk::WalkKernel;
