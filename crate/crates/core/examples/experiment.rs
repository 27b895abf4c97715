//! Run a small experiment and read its CSV output back.

use cpals::bench::{read_trace_csv, run_experiment, trace_file_name, ExperimentSpec, TensorSource};
use cpals::{AlsConfig, Strategy};

fn main() -> cpals::Result<()> {
    let out_dir = std::env::temp_dir().join(format!("cpals-experiment-{}", std::process::id()));
    let spec = ExperimentSpec {
        source: TensorSource::Collinear { lo: 0.4, hi: 0.6 },
        dims: Some(vec![20, 20, 20]),
        strategies: vec![Strategy::Dt, Strategy::Msdt, Strategy::Pp],
        config: AlsConfig { rank: 5, max_sweeps: 100, ..AlsConfig::default() },
        seeds: vec![1, 2],
        grid: None,
        threads: false,
        out_dir: out_dir.clone(),
    };
    let report = run_experiment(&spec)?;
    for row in &report.summary {
        println!(
            "{:4} seed {}: {:3} regular, {:2} pp-init, {:3} pp-approx, {:.3e} flops, fitness {:.6}",
            row.strategy,
            row.seed,
            row.sweeps_regular,
            row.sweeps_pp_init,
            row.sweeps_pp_approx,
            row.total_flops as f64,
            row.final_fitness
        );
    }
    let trace = read_trace_csv(std::fs::File::open(out_dir.join(trace_file_name(Strategy::Pp, 1)))?)?;
    println!("pp trace for seed 1 has {} rows", trace.len());
    std::fs::remove_dir_all(&out_dir)?;
    Ok(())
}
