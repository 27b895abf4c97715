use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::als::{run, write_trace_csv, AlsConfig, Strategy, SweepPhase, SweepTrace};
use crate::error::{invalid_arg, Error, Result};
use crate::grid::run_parallel;
use crate::tensor::{io, DenseTensor, Phase};

use super::{gen_collinear, gen_known_rank};

/// Where the tensor of an experiment comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorSource {
    File(PathBuf),
    /// Collinear factors with `C` drawn from `[lo, hi)`.
    Collinear { lo: f64, hi: f64 },
    /// Uniform random factors of the given rank (the decomposition rank
    /// when `None`).
    KnownRank(Option<usize>),
}

impl FromStr for TensorSource {
    type Err = Error;

    /// `gen:collinear:<lo>:<hi>`, `gen:rank[:<R>]`, or a file path.
    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("gen:") else {
            return Ok(TensorSource::File(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        let num = |x: &str| -> Result<f64> { x.parse().map_err(|_| invalid_arg!("bad number {x:?} in {s:?}")) };
        match parts.as_slice() {
            ["collinear"] => Ok(TensorSource::Collinear { lo: 0.0, hi: 0.2 }),
            ["collinear", lo, hi] => Ok(TensorSource::Collinear { lo: num(lo)?, hi: num(hi)? }),
            ["rank"] => Ok(TensorSource::KnownRank(None)),
            ["rank", r] => Ok(TensorSource::KnownRank(Some(
                r.parse().map_err(|_| invalid_arg!("bad rank {r:?} in {s:?}"))?,
            ))),
            _ => Err(invalid_arg!("unknown generator {s:?} (expected gen:collinear:<lo>:<hi> or gen:rank[:<R>])")),
        }
    }
}

/// Parses `50x50x50` style dimension lists.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = s
        .split(['x', 'X', ','])
        .map(|d| d.trim().parse::<usize>().map_err(|_| invalid_arg!("bad dimension {d:?} in {s:?}")))
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(invalid_arg!("dimensions must be positive, got {s:?}"));
    }
    Ok(dims)
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub source: TensorSource,
    /// Required for generated tensors; checked against files.
    pub dims: Option<Vec<usize>>,
    pub strategies: Vec<Strategy>,
    /// Base configuration; `seed` and `strategy` are set per run.
    pub config: AlsConfig,
    /// One repetition per seed. The seed drives both the generated tensor
    /// and the initial model.
    pub seeds: Vec<u64>,
    /// Run on a simulated processor grid of these dimensions.
    pub grid: Option<Vec<usize>>,
    pub threads: bool,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(invalid_arg!("at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(invalid_arg!("at least one seed is required"));
        }
        if !matches!(self.source, TensorSource::File(_)) && self.dims.is_none() {
            return Err(invalid_arg!("generated tensors need dimensions"));
        }
        self.config.validate()
    }

    pub fn tensor(&self, seed: u64) -> Result<DenseTensor> {
        let dims = self.dims.as_deref();
        match &self.source {
            TensorSource::File(path) => {
                let t = io::load(path)?;
                if let Some(d) = dims {
                    if d != t.shape() {
                        return Err(invalid_arg!("{} has shape {:?}, expected {d:?}", path.display(), t.shape()));
                    }
                }
                Ok(t)
            }
            TensorSource::Collinear { lo, hi } => {
                Ok(gen_collinear(dims.expect("validated"), self.config.rank, *lo, *hi, seed)?.tensor)
            }
            TensorSource::KnownRank(r) => gen_known_rank(dims.expect("validated"), r.unwrap_or(self.config.rank), seed),
        }
    }
}

/// One trace CSV row as read back from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub phase: String,
    pub residual: f64,
    pub fitness: f64,
    pub flops_ttm: u64,
    pub flops_mttv: u64,
    pub flops_other: u64,
    pub words_comm: u64,
    pub wall_seconds: f64,
}

impl From<&SweepTrace> for TraceRow {
    fn from(t: &SweepTrace) -> Self {
        Self {
            sweep: t.sweep,
            phase: t.phase.label().to_string(),
            residual: t.residual,
            fitness: t.fitness,
            flops_ttm: t.flops.flops(Phase::Ttm),
            flops_mttv: t.flops.flops(Phase::Mttv),
            flops_other: t.flops.other_flops(),
            words_comm: t.words,
            wall_seconds: t.wall_seconds,
        }
    }
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    for row in &rows {
        row.phase.parse::<SweepPhase>()?;
    }
    Ok(rows)
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub seed: u64,
    pub sweeps_regular: usize,
    pub sweeps_pp_init: usize,
    pub sweeps_pp_approx: usize,
    pub mean_seconds_regular: f64,
    pub mean_seconds_pp_init: f64,
    pub mean_seconds_pp_approx: f64,
    pub total_flops: u64,
    pub total_words: u64,
    /// Fitness reported by the last sweep.
    pub final_fitness: f64,
}

impl SummaryRow {
    /// Aggregates a trace.
    pub fn from_trace(strategy: &str, seed: u64, rows: &[TraceRow]) -> Self {
        let stats = |phase: SweepPhase| {
            let times: Vec<f64> = rows.iter().filter(|r| r.phase == phase.label()).map(|r| r.wall_seconds).collect();
            let mean = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
            (times.len(), mean)
        };
        let (sweeps_regular, mean_seconds_regular) = stats(SweepPhase::Regular);
        let (sweeps_pp_init, mean_seconds_pp_init) = stats(SweepPhase::PpInit);
        let (sweeps_pp_approx, mean_seconds_pp_approx) = stats(SweepPhase::PpApprox);
        let last = rows.last();
        Self {
            strategy: strategy.to_string(),
            seed,
            sweeps_regular,
            sweeps_pp_init,
            sweeps_pp_approx,
            mean_seconds_regular,
            mean_seconds_pp_init,
            mean_seconds_pp_approx,
            total_flops: last.map_or(0, |r| r.flops_ttm + r.flops_mttv + r.flops_other),
            total_words: last.map_or(0, |r| r.words_comm),
            final_fitness: last.map_or(0.0, |r| r.fitness),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub summary: Vec<SummaryRow>,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

pub fn trace_file_name(strategy: Strategy, seed: u64) -> String {
    format!("trace_{}_seed{seed}.csv", strategy.label())
}

pub fn comm_file_name(strategy: Strategy, seed: u64) -> String {
    format!("comm_{}_seed{seed}.csv", strategy.label())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs every strategy on every seed and writes one trace CSV per run,
/// one communication CSV per run on a grid, and `summary.csv`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut summary = Vec::new();
    let mut files = Vec::new();
    for &seed in &spec.seeds {
        let t = spec.tensor(seed)?;
        for &strategy in &spec.strategies {
            let config = AlsConfig { seed, strategy, ..spec.config.clone() };
            let (out, counters) = match &spec.grid {
                Some(grid) => {
                    let p = run_parallel(&t, grid, &config, spec.threads)?;
                    (p.run, Some(p.counters))
                }
                None => (run(&t, &config)?, None),
            };
            let path = spec.out_dir.join(trace_file_name(strategy, seed));
            write_trace_csv(&out.trace, create(&path)?)?;
            files.push(path);
            if let Some(c) = counters {
                let path = spec.out_dir.join(comm_file_name(strategy, seed));
                c.write_csv(create(&path)?)?;
                files.push(path);
            }
            let rows: Vec<TraceRow> = out.trace.iter().map(TraceRow::from).collect();
            summary.push(SummaryRow::from_trace(strategy.label(), seed, &rows));
        }
    }
    let path = spec.out_dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    files.push(path);
    Ok(ExperimentReport { summary, files })
}
