//! Monitored spontaneous decay of a chain of two-level emitters whose photons
//! pass through a linear optical network before being detected.
//!
//! Registering a click in output port `i` of the network applies the mixed
//! jump operator `c_i = Σ_j U_ij σ⁻_j` to the emitters. Sampling the resulting
//! click-ordered trajectories reproduces Fock-state boson sampling: the
//! outcome statistics are squared permanents of submatrices of `U`, while the
//! intermediate trajectory states carry bipartite entanglement that depends on
//! the network.
//!
//! Module map:
//!
//! - [`unitary`]: beam splitters, brick-wall networks and Haar unitaries.
//! - [`state`]: fixed-excitation-sector pure states, jumps and entropies.
//! - [`trajectory`]: click-ordered trajectory sampling.
//! - [`oracle`]: permanents and exact sequence/outcome probabilities.
//! - [`experiments`]: ensembles, entropy grids and distribution checks.
//! - [`cli`]: command-line configuration and execution.

pub mod basis;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod state;
pub mod stats;
pub mod trajectory;
pub mod unitary;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use oracle::{permanent_naive, permanent_ryser};
pub use state::{Bipartition, SectorState};
pub use trajectory::{ClickSequence, OutcomeCounts, TrajectoryRecord};
pub use unitary::{BeamSplitterParams, BrickwallSpec, UnitaryMatrix};
