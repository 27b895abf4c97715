//! The CP-ALS outer loop: model, normal equations, residuals and the sweep
//! controller shared by all MTTKRP strategies.

mod driver;
mod engine;
mod model;
mod residual;
mod solve;

pub(crate) use driver::{drive, startup_check, SweepBackend};
pub use driver::{
    pp_should_enter, run, run_from, write_trace_csv, AlsConfig, RunOutput, Solver, Strategy,
    SweepOutcome, SweepPhase, SweepTrace,
};
pub use engine::{CacheStats, DirectEngine, MttkrpEngine};
pub use model::{gamma_from_grams, init_model, KruskalModel};
pub(crate) use residual::{residual_fast_clamped, residual_from_parts};
pub use residual::{residual_direct, residual_fast};
pub use solve::{solve_counted, solve_subproblem, Solution};
