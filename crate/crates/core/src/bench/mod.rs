//! Synthetic tensors and the experiment harness behind the `cpbench`
//! binary.

mod experiment;
mod generate;

pub use experiment::{
    comm_file_name, parse_dims, read_trace_csv, run_experiment, trace_file_name, ExperimentReport,
    ExperimentSpec, SummaryRow, TensorSource, TraceRow,
};
pub use generate::{column_cosine, gen_collinear, gen_known_rank, gen_known_rank_factors, CollinearTensor};
