//! CP-ALS on a simulated 2x2x2 processor grid with exact collective counts.

use cpals::bench::gen_collinear;
use cpals::grid::{run_parallel, CommPhase};
use cpals::tensor::relative_max_diff;
use cpals::{run, AlsConfig, Strategy};

fn main() -> cpals::Result<()> {
    let t = gen_collinear(&[16, 16, 16], 4, 0.2, 0.4, 5)?.tensor;
    let config = AlsConfig {
        rank: 4,
        strategy: Strategy::Pp,
        stop_delta: 1e-8,
        max_sweeps: 40,
        record_factors: true,
        ..AlsConfig::default()
    };
    let seq = run(&t, &config)?;
    let par = run_parallel(&t, &[2, 2, 2], &config, true)?;

    let worst = seq
        .factor_history
        .iter()
        .zip(&par.run.factor_history)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| relative_max_diff(x, y)))
        .fold(0.0, f64::max);
    println!("sweeps {}  max factor difference to sequential {worst:.2e}", par.run.trace.len());
    for phase in [CommPhase::Setup, CommPhase::Als, CommPhase::PpInit, CommPhase::PpApprox, CommPhase::Residual] {
        let t = par.counters.phase_total(phase);
        println!("{phase:9}: calls {:4} messages {:5} words {:7}", t.calls, t.messages, t.words);
    }
    par.counters.write_csv(std::io::stdout())?;
    Ok(())
}
