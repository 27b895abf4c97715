//! PP on a tensor with collinear factors: the cheap approximated sweeps take
//! over once the factors settle.

use cpals::bench::gen_collinear;
use cpals::{run, AlsConfig, Strategy, SweepPhase};

fn main() -> cpals::Result<()> {
    let g = gen_collinear(&[30, 30, 30], 6, 0.6, 0.8, 3)?;
    println!("collinearity C = {:.4}", g.collinearity);
    let base = AlsConfig { rank: 6, stop_delta: 1e-7, max_sweeps: 300, ..AlsConfig::default() };

    for strategy in [Strategy::Dt, Strategy::Pp] {
        let out = run(&g.tensor, &AlsConfig { strategy, pp_tolerance: 0.2, ..base.clone() })?;
        let total = out.trace.last().expect("at least one sweep").flops.total_flops();
        println!(
            "{:3}: regular {:3}  pp-init {:2}  pp-approx {:3}  flops {:.3e}  fitness {:.8}",
            strategy,
            out.sweeps_in_phase(SweepPhase::Regular),
            out.sweeps_in_phase(SweepPhase::PpInit),
            out.sweeps_in_phase(SweepPhase::PpApprox),
            total as f64,
            out.final_fitness()
        );
    }
    Ok(())
}
