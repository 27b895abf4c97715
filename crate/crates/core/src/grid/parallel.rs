use rayon::prelude::*;

use crate::als::{
    drive, gamma_from_grams, residual_direct, residual_from_parts, solve_counted, startup_check, AlsConfig,
    CacheStats, DirectEngine, KruskalModel, MttkrpEngine, RunOutput, Strategy, SweepBackend, SweepOutcome,
};
use crate::dimtree::{DtEngine, MsdtEngine};
use crate::error::{invalid_arg, Error, Result};
use crate::pp::PpState;
use crate::tensor::{gram, matmul_counted, DenseTensor, FlopCounter, FlopSnapshot, Matrix, Phase};

use super::comm::{CommCounters, CommPhase};
use super::layout::VirtualGrid;

/// State of one virtual processor.
struct Proc<'g> {
    block: &'g DenseTensor,
    engine: Box<dyn MttkrpEngine + 'g>,
    /// `A^(i)` rows matching the local tensor block (shared within a slice).
    factors: Vec<Matrix>,
    versions: Vec<u64>,
    /// Rows of each factor this processor updates.
    chunks: Vec<Matrix>,
    counter: FlopCounter,
    pp: Option<PpState>,
    /// Chunks at PP initialization.
    pp_snapshot: Vec<Matrix>,
}

/// Result of [`run_parallel`].
#[derive(Clone, Debug)]
pub struct ParallelRunOutput {
    pub run: RunOutput,
    pub counters: CommCounters,
    /// Flops charged to each processor.
    pub proc_flops: Vec<FlopSnapshot>,
}

/// CP-ALS on a simulated processor grid.
///
/// Every processor owns one block of the tensor and computes local
/// MTTKRPs with its own engine. Per mode, the partial MTTKRPs are summed by
/// a reduce-scatter within the processor slice sharing the mode's rows,
/// each processor solves for its chunk of rows, the Gram matrix is
/// all-reduced and the updated rows are all-gathered within the slice. PP
/// builds its operators locally and keeps the same collective pattern, with
/// `dS` travelling in the Gram all-reduce.
///
/// With a single processor the results are bitwise those of the sequential
/// [`Solver`](crate::als::Solver).
pub struct ParallelSolver<'g> {
    grid: &'g VirtualGrid,
    procs: Vec<Proc<'g>>,
    /// Assembled factors and replicated Gram matrices.
    model: KruskalModel,
    dgrams: Vec<Matrix>,
    slices: Vec<Vec<Vec<usize>>>,
    everyone: Vec<Vec<usize>>,
    comm: CommCounters,
    norm_t_sq: f64,
    regularization: f64,
    fuse_levels: usize,
    reuse: bool,
    threads: bool,
    init_flops: Vec<FlopSnapshot>,
}

fn map_procs<'g, T, F>(procs: &mut [Proc<'g>], threads: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Proc<'g>) -> Result<T> + Sync + Send,
{
    if threads {
        procs.par_iter_mut().map(f).collect()
    } else {
        procs.iter_mut().map(f).collect()
    }
}

fn to_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::from_vec(rows, cols, data).expect("collective preserves sizes")
}

impl<'g> ParallelSolver<'g> {
    /// Distributes `model` over `grid` (the setup collectives are charged to
    /// [`CommPhase::Setup`]). `threads` runs the per-processor local work on
    /// the rayon pool; results do not depend on it.
    pub fn new(grid: &'g VirtualGrid, model: KruskalModel, config: &AlsConfig, threads: bool) -> Result<Self> {
        let order = grid.shape().len();
        if model.shape() != grid.shape() {
            return Err(invalid_arg!(
                "model shape {:?} does not match tensor {:?}",
                model.shape(),
                grid.shape()
            ));
        }
        if order < 2 {
            return Err(invalid_arg!("CP-ALS needs a tensor of order at least 2"));
        }
        let r = model.rank();
        let mut procs = Vec::with_capacity(grid.procs());
        for p in 0..grid.procs() {
            let block = grid.block(p);
            let engine: Box<dyn MttkrpEngine + 'g> = match config.strategy {
                Strategy::Direct => Box::new(DirectEngine::new(block)),
                Strategy::Dt => Box::new(DtEngine::new(block)?),
                Strategy::Msdt | Strategy::Pp => Box::new(MsdtEngine::new(block, config.fuse_levels)?),
            };
            let factors: Vec<Matrix> = (0..order).map(|i| grid.factor_block(model.factor(i), i, p)).collect();
            let chunks = (0..order)
                .map(|i| {
                    let (a, b) = grid.chunk_rows(i, p);
                    factors[i].row_block(a, b)
                })
                .collect();
            procs.push(Proc {
                block,
                engine,
                factors,
                versions: vec![0; order],
                chunks,
                counter: FlopCounter::new(),
                pp: None,
                pp_snapshot: Vec::new(),
            });
        }
        let mut solver = Self {
            grid,
            procs,
            model,
            dgrams: vec![Matrix::zeros(r, r); order],
            slices: (0..order).map(|i| grid.slices(i)).collect(),
            everyone: vec![grid.all_procs()],
            comm: CommCounters::new(),
            norm_t_sq: 0.0,
            regularization: config.solve_regularization,
            fuse_levels: config.fuse_levels,
            reuse: config.pp_reuse_intermediate,
            threads,
        init_flops: Vec::new(),
        };
        solver.setup()?;
        Ok(solver)
    }

    /// Replicates `S^(i)` and the factor rows of every mode but the first,
    /// and `‖T‖²`.
    fn setup(&mut self) -> Result<()> {
        let norms: Vec<Vec<f64>> = self.procs.iter().map(|p| vec![p.block.frobenius_norm_sq()]).collect();
        self.norm_t_sq = self.comm.all_reduce(CommPhase::Setup, &self.everyone, &norms)?[0][0];
        if self.norm_t_sq == 0.0 {
            return Err(invalid_arg!("the input tensor is zero"));
        }
        for i in 1..self.model.order() {
            let (s, blocks) = self.share_update(CommPhase::Setup, i, false)?;
            let a = self.assemble(i, &blocks);
            self.model.set_factor_with_gram(i, a, s);
        }
        Ok(())
    }

    pub fn grid(&self) -> &VirtualGrid {
        self.grid
    }

    pub fn model(&self) -> &KruskalModel {
        &self.model
    }

    pub fn counters(&self) -> &CommCounters {
        &self.comm
    }

    pub fn proc_flops(&self) -> Vec<FlopSnapshot> {
        self.procs.iter().map(|p| p.counter.snapshot()).collect()
    }

    /// Charges replicated work (done identically by every processor).
    fn charge_all(&self, s: &FlopSnapshot) {
        for p in &self.procs {
            p.counter.add_snapshot(s);
        }
    }

    fn replicated<T>(&self, f: impl FnOnce(&FlopCounter) -> T) -> T {
        let scratch = FlopCounter::new();
        let out = f(&scratch);
        self.charge_all(&scratch.snapshot());
        out
    }

    /// All-reduces the Gram matrix of the updated chunks of mode `n` (and,
    /// with `with_delta`, `dS^(n)` in the same call), then all-gathers the
    /// chunks within each slice. Returns `S^(n)` and the gathered blocks.
    fn share_update(&mut self, phase: CommPhase, n: usize, with_delta: bool) -> Result<(Matrix, Vec<Matrix>)> {
        let r = self.model.rank();
        let local: Vec<Vec<f64>> = map_procs(&mut self.procs, self.threads, |p| {
            let mut v = gram(&p.chunks[n], &p.counter).into_vec();
            if with_delta {
                let d = p.chunks[n].sub(&p.pp_snapshot[n])?;
                p.counter.add(Phase::Other, (d.rows() * d.cols()) as u64);
                v.extend(matmul_counted(&p.chunks[n].transpose(), &d, &p.counter, Phase::Other)?.into_vec());
            }
            Ok(v)
        })?;
        let mut reduced = self.comm.all_reduce(phase, &self.everyone, &local)?.swap_remove(0);
        if with_delta {
            self.dgrams[n] = to_matrix(r, r, reduced.split_off(r * r));
        }
        let s = to_matrix(r, r, reduced);

        let parts: Vec<Vec<f64>> = self.procs.iter().map(|p| p.chunks[n].data().to_vec()).collect();
        let gathered = self.comm.all_gather(phase, &self.slices[n], &parts)?;
        let b = self.grid.block_shape()[n];
        let mut blocks = Vec::with_capacity(self.procs.len());
        for (p, data) in self.procs.iter_mut().zip(gathered) {
            let block = to_matrix(b, r, data);
            p.factors[n] = block.clone();
            p.versions[n] += 1;
            blocks.push(block);
        }
        Ok((s, blocks))
    }

    fn assemble(&self, n: usize, blocks: &[Matrix]) -> Matrix {
        let by_coord: Vec<Matrix> = self.slices[n].iter().map(|g| blocks[g[0]].clone()).collect();
        self.grid.assemble_factor(n, &by_coord)
    }

    /// Reduce-scatters per-processor partial MTTKRPs of mode `n`.
    fn scatter(&mut self, phase: CommPhase, n: usize, partial: Vec<Matrix>) -> Result<Vec<Matrix>> {
        let r = self.model.rank();
        let data: Vec<Vec<f64>> = partial.into_iter().map(Matrix::into_vec).collect();
        let chunks = self.comm.reduce_scatter(phase, &self.slices[n], &data, r)?;
        Ok(chunks.into_iter().map(|c| to_matrix(c.len() / r, r, c)).collect())
    }

    /// Solves for every processor's chunk of mode `n`, shares the result and
    /// returns solver warnings.
    fn update(&mut self, phase: CommPhase, n: usize, m: &[Matrix], gamma: &Matrix) -> Result<Vec<String>> {
        let reg = self.regularization;
        let mut warnings = Vec::new();
        for (p, mp) in self.procs.iter_mut().zip(m) {
            let sol = solve_counted(mp, gamma, reg, &p.counter)?;
            if let Some(w) = sol.warning {
                let w = format!("mode {n}: {w}");
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            p.chunks[n] = sol.x;
        }
        let pp = self.procs[0].pp.is_some();
        let (s, blocks) = self.share_update(phase, n, pp)?;
        let a = self.assemble(n, &blocks);
        self.model.set_factor_with_gram(n, a, s);
        Ok(warnings)
    }

    /// Fast residual after the last mode from reduced `⟨M, A⟩`.
    fn residual(&mut self, gamma: &Matrix, m: &[Matrix], clamp: bool) -> Result<f64> {
        let last = self.model.order() - 1;
        let local: Vec<Vec<f64>> = self
            .procs
            .iter()
            .zip(m)
            .map(|(p, mp)| Ok(vec![mp.inner(&p.chunks[last])?]))
            .collect::<Result<_>>()?;
        let m_a = self.comm.all_reduce(CommPhase::Residual, &self.everyone, &local)?[0][0];
        let gamma_s = gamma.inner(self.model.gram(last))?;
        residual_from_parts(self.norm_t_sq, gamma_s, m_a, clamp)
    }

    /// One exact sweep.
    pub fn regular_sweep(&mut self) -> Result<SweepOutcome> {
        let mut warnings = Vec::new();
        let mut last = None;
        for n in 0..self.model.order() {
            let gamma = self.replicated(|c| gamma_from_grams(self.model.grams(), n, c));
            let partial = map_procs(&mut self.procs, self.threads, |p| {
                p.engine.mttkrp(&p.factors, &p.versions, n, &p.counter)
            })?;
            let m = self.scatter(CommPhase::Als, n, partial)?;
            warnings.extend(self.update(CommPhase::Als, n, &m, &gamma)?);
            last = Some((gamma, m));
        }
        let (gamma, m) = last.expect("order >= 2");
        let residual = self.residual(&gamma, &m, false)?;
        Ok(SweepOutcome { residual, warnings })
    }

    /// Builds the PP operators on every processor from its own block; no
    /// communication is needed.
    pub fn pp_begin(&mut self) -> Result<()> {
        let before: Vec<FlopSnapshot> = self.proc_flops();
        let (reuse, fuse) = (self.reuse, self.fuse_levels);
        map_procs(&mut self.procs, self.threads, |p| {
            let first = if reuse { p.engine.reusable_first_level(&p.versions) } else { None };
            p.pp = Some(PpState::initialize(p.block, &p.factors, &p.versions, first, fuse, &p.counter)?);
            p.pp_snapshot = p.chunks.clone();
            Ok(())
        })?;
        let r = self.model.rank();
        self.dgrams = vec![Matrix::zeros(r, r); self.model.order()];
        let spent = self
            .proc_flops()
            .iter()
            .zip(&before)
            .fold(FlopSnapshot::default(), |acc, (now, then)| acc.plus(&now.since(then)));
        self.init_flops.push(spent);
        Ok(())
    }

    /// One sweep with approximated MTTKRPs.
    pub fn pp_sweep(&mut self) -> Result<SweepOutcome> {
        if self.procs[0].pp.is_none() {
            return Err(Error::InvalidState("PP sweep without initialized operators".into()));
        }
        let mut warnings = Vec::new();
        let mut last = None;
        for n in 0..self.model.order() {
            let gamma = self.replicated(|c| gamma_from_grams(self.model.grams(), n, c));
            let partial = map_procs(&mut self.procs, self.threads, |p| {
                p.pp.as_ref().expect("checked above").first_order_sum(&p.factors, n, &p.counter)
            })?;
            let mut m = self.scatter(CommPhase::PpApprox, n, partial)?;
            let dgrams: Vec<Option<Matrix>> = self
                .dgrams
                .iter()
                .enumerate()
                .map(|(i, d)| (i != n).then(|| d.clone()))
                .collect();
            let w = self.replicated(|c| PpState::second_order_core(&dgrams, self.model.grams(), n, c))?;
            for (p, mp) in self.procs.iter().zip(m.iter_mut()) {
                mp.add_assign(&matmul_counted(&p.chunks[n], &w, &p.counter, Phase::Other)?)?;
            }
            warnings.extend(self.update(CommPhase::PpApprox, n, &m, &gamma)?);
            last = Some((gamma, m));
        }
        let (gamma, m) = last.expect("order >= 2");
        let residual = self.residual(&gamma, &m, true)?;
        Ok(SweepOutcome { residual, warnings })
    }

    pub fn pp_end(&mut self) {
        for p in &mut self.procs {
            p.pp = None;
            p.pp_snapshot.clear();
            p.engine.reset();
        }
    }

    /// Largest per-processor cache footprint.
    pub fn cache_stats(&self) -> CacheStats {
        self.procs.iter().map(|p| p.engine.stats()).fold(CacheStats::default(), |acc, s| CacheStats {
            live_words: acc.live_words.max(s.live_words),
            peak_words: acc.peak_words.max(s.peak_words),
            first_level_contractions: acc.first_level_contractions.max(s.first_level_contractions),
        })
    }
}

/// [`ParallelSolver`] with the reference tensor kept for the final exact
/// residual.
struct Backend<'g> {
    solver: ParallelSolver<'g>,
    t: &'g DenseTensor,
}

impl SweepBackend for Backend<'_> {
    fn model(&self) -> &KruskalModel {
        &self.solver.model
    }

    fn regular_sweep(&mut self) -> Result<SweepOutcome> {
        self.solver.regular_sweep()
    }

    fn pp_begin(&mut self) -> Result<()> {
        self.solver.pp_begin()
    }

    fn pp_sweep(&mut self) -> Result<SweepOutcome> {
        self.solver.pp_sweep()
    }

    fn pp_end(&mut self) {
        self.solver.pp_end()
    }

    fn flops(&self) -> FlopSnapshot {
        self.solver
            .proc_flops()
            .iter()
            .fold(FlopSnapshot::default(), |acc, s| acc.plus(s))
    }

    fn words(&self) -> u64 {
        self.solver.comm.total().words
    }

    fn final_residual(&self) -> Result<f64> {
        residual_direct(self.t, &self.solver.model)
    }

    fn pp_init_flops(&self) -> Vec<FlopSnapshot> {
        self.solver.init_flops.clone()
    }

    fn cache_stats(&self) -> CacheStats {
        self.solver.cache_stats()
    }
}

/// Runs CP-ALS on an `I_1 x ... x I_N` grid of simulated processors from
/// the same random model as [`run`](crate::als::run).
///
/// Trace flops are summed over processors; trace words are per processor.
pub fn run_parallel(t: &DenseTensor, grid_dims: &[usize], config: &AlsConfig, threads: bool) -> Result<ParallelRunOutput> {
    config.validate()?;
    startup_check()?;
    let grid = VirtualGrid::distribute(t, grid_dims)?;
    let model = KruskalModel::random(t.shape(), config.rank, config.seed)?;
    let solver = ParallelSolver::new(&grid, model, config, threads)?;
    let mut backend = Backend { solver, t };
    let run = drive(config, &mut backend)?;
    Ok(ParallelRunOutput {
        run,
        counters: backend.solver.comm.clone(),
        proc_flops: backend.solver.proc_flops(),
    })
}
