//! Simulated distributed-memory execution on a processor grid.
//!
//! A [`VirtualGrid`] splits the tensor into blocks, one per virtual
//! processor. Collectives move data between the processors' buffers and
//! charge their standard costs to [`CommCounters`]: an all-gather or
//! reduce-scatter of `n` words over `p` processors costs `⌈log2 p⌉` messages
//! and `n δ(p)` words, an all-reduce twice that, where `δ(p)` is 1 for
//! `p > 1` and 0 otherwise.
//! [`predict_costs`] evaluates the analytic per-sweep costs of each
//! algorithm.

mod comm;
mod cost;
mod layout;
mod parallel;

#[cfg(test)]
mod tests;

pub use comm::{delta, Collective, CommCounters, CommPhase, Tally};
pub use cost::{predict_costs, CostAlgorithm, CostParams, CostPrediction};
pub use layout::VirtualGrid;
pub use parallel::{run_parallel, ParallelRunOutput, ParallelSolver};
