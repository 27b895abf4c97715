//! Dense CP decomposition by alternating least squares.
//!
//! The crate provides four interchangeable ways of forming the MTTKRP
//! (matricized tensor times Khatri-Rao product) that dominates every ALS
//! sweep:
//!
//! * [`Strategy::Direct`]: literal unfolding times Khatri-Rao product, the
//!   reference oracle.
//! * [`Strategy::Dt`]: the binary dimension tree, two first-level
//!   contractions per sweep.
//! * [`Strategy::Msdt`]: the multi-sweep dimension tree, `N` first-level
//!   contractions every `N - 1` sweeps, equivalent to DT up to rounding.
//! * [`Strategy::Pp`]: pairwise perturbation, which replaces exact MTTKRPs by
//!   first- and second-order corrections while the factors move little.
//!
//! [`grid`] executes the same algorithms over a grid of virtual processors
//! inside one process and keeps exact message and word counters, and
//! [`grid::predict_costs`] evaluates the analytic cost model.
//!
//! Modes are 0-based everywhere in the API. Documentation that talks about
//! "mode 1 .. N" uses 1-based numbering and says so.

pub mod als;
pub mod bench;
pub mod dimtree;
mod error;
pub mod grid;
pub mod pp;
pub mod tensor;

pub use als::{run, write_trace_csv, AlsConfig, KruskalModel, RunOutput, Strategy, SweepPhase, SweepTrace};
pub use error::{Error, Result};
pub use tensor::{DenseTensor, FlopCounter, Matrix, Phase};
