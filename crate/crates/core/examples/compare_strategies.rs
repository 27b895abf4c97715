//! Direct, DT and MSDT produce the same factors; only the work differs.

use cpals::bench::gen_known_rank;
use cpals::tensor::relative_max_diff;
use cpals::{run, AlsConfig, Phase, Strategy};

fn main() -> cpals::Result<()> {
    let t = gen_known_rank(&[16, 16, 16, 16], 4, 7)?;
    let base = AlsConfig { rank: 4, stop_delta: 0.0, max_sweeps: 6, record_factors: true, ..AlsConfig::default() };

    let mut runs = Vec::new();
    for strategy in [Strategy::Direct, Strategy::Dt, Strategy::Msdt] {
        let out = run(&t, &AlsConfig { strategy, ..base.clone() })?;
        let flops = out.trace.last().expect("at least one sweep").flops;
        println!(
            "{:6}: ttm flops {:>12}  mttv flops {:>10}  peak cache words {:>7}  fitness {:.10}",
            strategy,
            flops.flops(Phase::Ttm) + flops.flops(Phase::KhatriRao),
            flops.flops(Phase::Mttv),
            out.cache_stats.peak_words,
            out.final_fitness()
        );
        runs.push(out);
    }
    let worst = runs[1..]
        .iter()
        .flat_map(|r| r.factor_history.iter().zip(&runs[0].factor_history))
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| relative_max_diff(x, y)))
        .fold(0.0, f64::max);
    println!("largest relative factor difference to direct: {worst:.2e}");
    Ok(())
}
