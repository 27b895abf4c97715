//! Decompose a synthetic tensor of known rank and print the convergence
//! trace.

use cpals::bench::gen_collinear;
use cpals::tensor::io;
use cpals::{run, AlsConfig, Strategy};

fn main() -> cpals::Result<()> {
    let t = gen_collinear(&[12, 10, 8], 3, 0.0, 0.2, 42)?.tensor;

    // Round-trip through the binary format.
    let dir = std::env::temp_dir().join(format!("cpals-decompose-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tensor.dten");
    io::save_binary(&t, &path)?;
    let t = io::load(&path)?;
    std::fs::remove_dir_all(&dir)?;

    let config = AlsConfig { rank: 3, strategy: Strategy::Dt, stop_delta: 1e-10, max_sweeps: 300, ..AlsConfig::default() };
    let out = run(&t, &config)?;
    for s in out.trace.iter().step_by(5) {
        println!("sweep {:4} residual {:.3e}", s.sweep, s.residual);
    }
    println!("{} sweeps, final fitness {:.8}", out.trace.len(), out.final_fitness());
    cpals::write_trace_csv(&out.trace[out.trace.len().saturating_sub(3)..], std::io::stdout())?;
    Ok(())
}
