//! Higher factor collinearity slows ALS down.

use cpals::bench::{column_cosine, gen_collinear};
use cpals::{run, AlsConfig};

fn main() -> cpals::Result<()> {
    for (lo, hi) in [(0.0, 0.2), (0.4, 0.6), (0.8, 0.9)] {
        let g = gen_collinear(&[20, 20, 20], 5, lo, hi, 11)?;
        let cos = column_cosine(&g.factors[0], 0, 1);
        let out = run(&g.tensor, &AlsConfig { rank: 5, stop_delta: 1e-9, max_sweeps: 300, ..AlsConfig::default() })?;
        println!(
            "C in [{lo}, {hi}): drawn {:.4}, cosine {:.4}, {:3} sweeps, fitness {:.6}",
            g.collinearity,
            cos,
            out.trace.len(),
            out.final_fitness()
        );
    }
    Ok(())
}
