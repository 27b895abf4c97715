//! Analytic per-sweep costs of each algorithm as the processor count grows.

use cpals::grid::{predict_costs, CostAlgorithm, CostParams};

fn main() -> cpals::Result<()> {
    let params = CostParams::default();
    for p in [1, 8, 64, 512] {
        println!("P = {p}");
        for alg in CostAlgorithm::ALL {
            let c = predict_costs(alg, 3, 400, 100, p, &params)?;
            println!(
                "  {:14} local flops {:10.3e}  words {:>10}  memory {:10.3e}  modeled time {:.3e} s",
                alg.label(),
                c.local_flops,
                c.horizontal_words.map_or("/".into(), |w| format!("{w:.0}")),
                c.aux_memory_words,
                c.time_seconds
            );
        }
    }
    Ok(())
}
