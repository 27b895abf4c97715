use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cpals::bench::{parse_dims, run_experiment, ExperimentSpec, TensorSource};
use cpals::dimtree::{build_dt, MsdtSchedule};
use cpals::grid::{predict_costs, CostAlgorithm, CostParams};
use cpals::pp::pp_tree;
use cpals::{AlsConfig, Error, Strategy};

/// Runs CP-ALS experiments and writes per-sweep trace CSVs.
#[derive(Parser, Debug)]
#[command(name = "cpbench", version)]
struct Cli {
    /// Tensor file, gen:collinear:<lo>:<hi> or gen:rank[:<R>].
    #[arg(long, default_value = "gen:collinear:0.6:0.8")]
    tensor: String,
    /// Dimensions such as 50x50x50 (required for generated tensors).
    #[arg(long)]
    dims: Option<String>,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    /// Comma-separated subset of direct,dt,msdt,pp.
    #[arg(long, default_value = "dt,msdt,pp")]
    strategies: String,
    /// Stop when the residual changes by at most this much.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Relative factor change below which PP is used.
    #[arg(long = "pp-tol", default_value_t = 0.2)]
    pp_tol: f64,
    #[arg(long = "max-sweeps", default_value_t = 300)]
    max_sweeps: usize,
    /// Comma-separated seeds, one repetition each.
    #[arg(long, default_value = "0")]
    seed: String,
    /// Simulated processor grid such as 2x2x2.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value = "cpbench-out")]
    out: PathBuf,
    /// Extra tree levels contracted at once by MSDT and PP initialization.
    #[arg(long = "fuse-levels", default_value_t = 0)]
    fuse_levels: usize,
    /// Run the simulated processors on a thread pool.
    #[arg(long)]
    threads: bool,
    /// Print the DT, MSDT and PP trees for the order of --dims and exit.
    #[arg(long = "dump-tree")]
    dump_tree: bool,
    /// Print the analytic per-sweep costs for this many processors and exit
    /// (uses the first of --dims as s).
    #[arg(long = "predict-costs")]
    predict_costs: Option<usize>,
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, Error>) -> Result<Vec<T>, Error> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| f(x.trim())).collect()
}

fn dump_trees(order: usize, fuse: usize) -> Result<(), Error> {
    println!("# dimension tree");
    print!("{}", build_dt(order)?.dump());
    println!("# multi-sweep dimension tree");
    print!("{}", MsdtSchedule::with_fusion(order, fuse)?.dump());
    println!("# pairwise perturbation tree");
    print!("{}", pp_tree(order)?.dump());
    Ok(())
}

fn print_costs(dims: &[usize], rank: usize, procs: usize) -> Result<(), Error> {
    println!("algorithm,sequential_flops,local_flops,aux_memory_words,messages,horizontal_words,vertical_words");
    let opt = |v: Option<f64>| v.map_or("/".to_string(), |x| format!("{x}"));
    for alg in CostAlgorithm::ALL {
        let c = predict_costs(alg, dims.len(), dims[0], rank, procs, &CostParams::default())?;
        let words = match (c.horizontal_words, c.horizontal_words_alt) {
            (Some(a), Some(b)) => format!("{a} or {b}"),
            (a, _) => opt(a),
        };
        println!(
            "{alg},{},{},{},{},{words},{}",
            c.sequential_flops,
            c.local_flops,
            c.aux_memory_words,
            opt(c.messages),
            c.vertical_words
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    let dims = cli.dims.as_deref().map(parse_dims).transpose()?;
    if cli.dump_tree || cli.predict_costs.is_some() {
        let dims = dims.ok_or_else(|| Error::InvalidArgument("--dims is required here".into()))?;
        if cli.dump_tree {
            dump_trees(dims.len(), cli.fuse_levels)?;
        }
        if let Some(p) = cli.predict_costs {
            print_costs(&dims, cli.rank, p)?;
        }
        return Ok(());
    }
    let spec = ExperimentSpec {
        source: cli.tensor.parse::<TensorSource>()?,
        dims,
        strategies: parse_list(&cli.strategies, |s| s.parse::<Strategy>())?,
        config: AlsConfig {
            rank: cli.rank,
            stop_delta: cli.tol,
            max_sweeps: cli.max_sweeps,
            pp_tolerance: cli.pp_tol,
            fuse_levels: cli.fuse_levels,
            ..AlsConfig::default()
        },
        seeds: parse_list(&cli.seed, |s| {
            s.parse::<u64>().map_err(|_| Error::InvalidArgument(format!("bad seed {s:?}")))
        })?,
        grid: cli.grid.as_deref().map(parse_dims).transpose()?,
        threads: cli.threads,
        out_dir: cli.out,
    };
    let report = run_experiment(&spec)?;
    println!("strategy,seed,sweeps_regular,sweeps_pp_init,sweeps_pp_approx,total_flops,total_words,final_fitness");
    for r in &report.summary {
        println!(
            "{},{},{},{},{},{},{},{:.9}",
            r.strategy,
            r.seed,
            r.sweeps_regular,
            r.sweeps_pp_init,
            r.sweeps_pp_approx,
            r.total_flops,
            r.total_words,
            r.final_fitness
        );
    }
    eprintln!("wrote {} files to {}", report.files.len(), spec.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant_violation() { 2 } else { 1 })
        }
    }
}
