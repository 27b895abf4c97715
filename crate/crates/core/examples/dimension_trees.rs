//! The contraction trees behind DT, MSDT and PP, and what MSDT saves.

use cpals::als::MttkrpEngine;
use cpals::bench::gen_known_rank;
use cpals::dimtree::{build_dt, DtEngine, MsdtEngine, MsdtSchedule};
use cpals::pp::pp_tree;
use cpals::{FlopCounter, KruskalModel, Phase};

fn main() -> cpals::Result<()> {
    println!("{}", build_dt(4)?.dump());
    println!("{}", MsdtSchedule::with_fusion(4, 0)?.dump());
    println!("{}", pp_tree(4)?.dump());

    // Three sweeps (one MSDT cycle for N = 4) with fixed factors.
    let t = gen_known_rank(&[10, 10, 10, 10], 3, 1)?;
    let model = KruskalModel::random(t.shape(), 3, 2)?;
    let mut engines: Vec<(&str, Box<dyn MttkrpEngine + '_>)> =
        vec![("dt", Box::new(DtEngine::new(&t)?)), ("msdt", Box::new(MsdtEngine::new(&t, 0)?))];
    for (name, engine) in &mut engines {
        let counter = FlopCounter::new();
        let mut v = model.versions().to_vec();
        for _sweep in 0..3 {
            for n in 0..4 {
                engine.mttkrp(model.factors(), &v, n, &counter)?;
                v[n] += 1;
            }
        }
        let stats = engine.stats();
        println!(
            "{name:4}: first-level contractions {:2}, ttm flops {:>9}, peak cache words {}",
            stats.first_level_contractions,
            counter.snapshot().flops(Phase::Ttm),
            stats.peak_words
        );
    }
    Ok(())
}
