use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use crate::dimtree::{DtEngine, MsdtEngine};
use crate::error::{invalid_arg, Error, Result};
use crate::pp::PpState;
use crate::tensor::{self, DenseTensor, FlopCounter, FlopSnapshot, Matrix, Phase};

use super::residual_fast_clamped;
use super::{
    residual_direct, residual_fast, solve_counted, CacheStats, DirectEngine, KruskalModel,
    MttkrpEngine,
};

/// How the MTTKRP of each factor update is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Direct,
    Dt,
    Msdt,
    Pp,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Dt => "dt",
            Strategy::Msdt => "msdt",
            Strategy::Pp => "pp",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Strategy::Direct),
            "dt" => Ok(Strategy::Dt),
            "msdt" => Ok(Strategy::Msdt),
            "pp" => Ok(Strategy::Pp),
            other => Err(invalid_arg!("unknown strategy {other:?} (expected direct, dt, msdt or pp)")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlsConfig {
    pub rank: usize,
    /// Stop once the residual changes by at most this much between sweeps.
    pub stop_delta: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// PP is entered while every factor moved by less than this fraction of
    /// its norm. Only read when `strategy` is [`Strategy::Pp`].
    pub pp_tolerance: f64,
    pub solve_regularization: f64,
    /// Extra upper tree levels contracted in one pass (MSDT and PP
    /// initialization). 0 is the unfused tree.
    pub fuse_levels: usize,
    /// Let PP initialization take over the valid first-level contraction
    /// left by the preceding regular sweep.
    pub pp_reuse_intermediate: bool,
    /// Keep a copy of all factors after every sweep in
    /// [`RunOutput::factor_history`].
    pub record_factors: bool,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            stop_delta: 1e-5,
            max_sweeps: 300,
            seed: 0,
            strategy: Strategy::Dt,
            pp_tolerance: 0.2,
            solve_regularization: 0.0,
            fuse_levels: 0,
            pp_reuse_intermediate: true,
            record_factors: false,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid_arg!("rank must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid_arg!("max_sweeps must be at least 1"));
        }
        if !(self.stop_delta >= 0.0) {
            return Err(invalid_arg!("stop_delta must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.pp_tolerance) {
            return Err(invalid_arg!("PP tolerance must lie in [0, 1)"));
        }
        if !(self.solve_regularization >= 0.0 && self.solve_regularization.is_finite()) {
            return Err(invalid_arg!("solve_regularization must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepPhase {
    Regular,
    /// First approximated sweep after building the PP operators; its flops
    /// include the operator construction.
    PpInit,
    PpApprox,
}

impl SweepPhase {
    pub fn label(self) -> &'static str {
        match self {
            SweepPhase::Regular => "regular",
            SweepPhase::PpInit => "pp-init",
            SweepPhase::PpApprox => "pp-approx",
        }
    }
}

impl std::str::FromStr for SweepPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(SweepPhase::Regular),
            "pp-init" => Ok(SweepPhase::PpInit),
            "pp-approx" => Ok(SweepPhase::PpApprox),
            other => Err(Error::Format(format!("unknown sweep phase {other:?}"))),
        }
    }
}

/// One row of the convergence trace.
#[derive(Clone, Debug)]
pub struct SweepTrace {
    /// 1-based sweep number.
    pub sweep: usize,
    pub phase: SweepPhase,
    pub residual: f64,
    pub fitness: f64,
    /// Cumulative since the start of the run.
    pub flops: FlopSnapshot,
    /// Cumulative words moved per processor by collectives (0 for
    /// sequential runs).
    pub words: u64,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub model: KruskalModel,
    pub trace: Vec<SweepTrace>,
    /// `residual_direct` of the final model.
    pub final_residual: f64,
    /// Factors after each sweep, when [`AlsConfig::record_factors`] is set.
    pub factor_history: Vec<Vec<Matrix>>,
    /// Flops of each PP operator construction.
    pub pp_init_flops: Vec<FlopSnapshot>,
    pub cache_stats: CacheStats,
}

impl RunOutput {
    pub fn final_fitness(&self) -> f64 {
        1.0 - self.final_residual
    }

    pub fn sweeps_in_phase(&self, phase: SweepPhase) -> usize {
        self.trace.iter().filter(|t| t.phase == phase).count()
    }
}

/// Residual of one sweep plus any solver warnings.
pub struct SweepOutcome {
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// What the ALS controller needs from an executor (sequential or grid).
pub(crate) trait SweepBackend {
    fn model(&self) -> &KruskalModel;
    fn regular_sweep(&mut self) -> Result<SweepOutcome>;
    fn pp_begin(&mut self) -> Result<()>;
    fn pp_sweep(&mut self) -> Result<SweepOutcome>;
    fn pp_end(&mut self);
    fn flops(&self) -> FlopSnapshot;
    fn words(&self) -> u64;
    fn final_residual(&self) -> Result<f64>;
    fn pp_init_flops(&self) -> Vec<FlopSnapshot>;
    fn cache_stats(&self) -> CacheStats;
}

fn relative_moves(now: &[Matrix], before: &[Matrix]) -> Vec<f64> {
    now.iter()
        .zip(before)
        .map(|(a, b)| {
            let d = a.sub(b).expect("factor shapes are fixed").frobenius_norm();
            let n = a.frobenius_norm();
            if n > 0.0 {
                d / n
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// True iff `‖dA^(i)‖ < ε ‖A^(i)‖` for every mode.
pub fn pp_should_enter(relative_moves: &[f64], tolerance: f64) -> bool {
    relative_moves.iter().all(|&m| m < tolerance)
}

/// Runs the ALS outer loop (with the PP regime switch when requested).
pub(crate) fn drive(config: &AlsConfig, backend: &mut dyn SweepBackend) -> Result<RunOutput> {
    let mut trace = Vec::new();
    let mut history = Vec::new();
    // dA starts as A itself, so the first sweep is always regular.
    let mut moves = vec![1.0; backend.model().order()];
    let mut r_old = 1.0;
    let mut done = false;

    let mut record = |backend: &dyn SweepBackend,
                      trace: &mut Vec<SweepTrace>,
                      phase: SweepPhase,
                      outcome: SweepOutcome,
                      started: Instant| {
        trace.push(SweepTrace {
            sweep: trace.len() + 1,
            phase,
            residual: outcome.residual,
            fitness: 1.0 - outcome.residual,
            flops: backend.flops(),
            words: backend.words(),
            wall_seconds: started.elapsed().as_secs_f64(),
            warnings: outcome.warnings,
        });
        if config.record_factors {
            history.push(backend.model().factors().to_vec());
        }
    };

    while !done {
        if config.strategy == Strategy::Pp && pp_should_enter(&moves, config.pp_tolerance) {
            let started = Instant::now();
            backend.pp_begin()?;
            let snapshot = backend.model().factors().to_vec();
            let mut phase = SweepPhase::PpInit;
            loop {
                let outcome = backend.pp_sweep()?;
                let r = outcome.residual;
                record(backend, &mut trace, phase, outcome, started);
                phase = SweepPhase::PpApprox;
                let converged = (r - r_old).abs() <= config.stop_delta;
                r_old = r;
                if trace.len() >= config.max_sweeps {
                    done = true;
                    break;
                }
                moves = relative_moves(backend.model().factors(), &snapshot);
                // Leaving on convergence hands the last word to an exact sweep.
                if converged || !pp_should_enter(&moves, config.pp_tolerance) {
                    break;
                }
            }
            backend.pp_end();
            if done {
                break;
            }
        }
        let started = Instant::now();
        let before = backend.model().factors().to_vec();
        let outcome = backend.regular_sweep()?;
        let r = outcome.residual;
        record(backend, &mut trace, SweepPhase::Regular, outcome, started);
        moves = relative_moves(backend.model().factors(), &before);
        done = (r - r_old).abs() <= config.stop_delta || trace.len() >= config.max_sweeps;
        r_old = r;
    }

    let final_residual = backend.final_residual()?;
    let pp_init_flops = backend.pp_init_flops();
    let cache_stats = backend.cache_stats();
    Ok(RunOutput {
        model: backend.model().clone(),
        trace,
        final_residual,
        factor_history: history,
        pp_init_flops,
        cache_stats,
    })
}

pub(crate) fn startup_check() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    CHECK
        .get_or_init(|| tensor::self_test().map_err(|e| e.to_string()))
        .clone()
        .map_err(Error::InternalLogic)
}

/// Decomposes `t` with CP-ALS from a random model seeded by `config.seed`.
pub fn run(t: &DenseTensor, config: &AlsConfig) -> Result<RunOutput> {
    let model = KruskalModel::random(t.shape(), config.rank, config.seed)?;
    run_from(t, model, config)
}

/// [`run`] starting from a given model.
pub fn run_from(t: &DenseTensor, model: KruskalModel, config: &AlsConfig) -> Result<RunOutput> {
    config.validate()?;
    startup_check()?;
    let mut solver = Solver::new(t, model, config)?;
    drive(config, &mut solver)
}

/// Sequential ALS state: the tensor, the model, the MTTKRP engine and, while
/// the PP regime is active, the PP operators.
///
/// [`run`] drives it; it is public so that individual sweeps can be
/// executed and inspected.
pub struct Solver<'a> {
    t: &'a DenseTensor,
    norm_t_sq: f64,
    model: KruskalModel,
    engine: Box<dyn MttkrpEngine + 'a>,
    pp: Option<PpState>,
    counter: FlopCounter,
    regularization: f64,
    fuse_levels: usize,
    reuse: bool,
    init_flops: Vec<FlopSnapshot>,
}

impl<'a> Solver<'a> {
    pub fn new(t: &'a DenseTensor, model: KruskalModel, config: &AlsConfig) -> Result<Self> {
        if model.shape() != t.shape() {
            return Err(invalid_arg!(
                "model shape {:?} does not match tensor {:?}",
                model.shape(),
                t.shape()
            ));
        }
        if t.order() < 2 {
            return Err(invalid_arg!("CP-ALS needs a tensor of order at least 2"));
        }
        let norm_t_sq = t.frobenius_norm_sq();
        if norm_t_sq == 0.0 {
            return Err(invalid_arg!("the input tensor is zero"));
        }
        let engine: Box<dyn MttkrpEngine + 'a> = match config.strategy {
            Strategy::Direct => Box::new(DirectEngine::new(t)),
            Strategy::Dt => Box::new(DtEngine::new(t)?),
            Strategy::Msdt | Strategy::Pp => Box::new(MsdtEngine::new(t, config.fuse_levels)?),
        };
        Ok(Self {
            t,
            norm_t_sq,
            model,
            engine,
            pp: None,
            counter: FlopCounter::new(),
            regularization: config.solve_regularization,
            fuse_levels: config.fuse_levels,
            reuse: config.pp_reuse_intermediate,
            init_flops: Vec::new(),
        })
    }

    pub fn model(&self) -> &KruskalModel {
        &self.model
    }

    pub fn counter(&self) -> &FlopCounter {
        &self.counter
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.engine.stats()
    }

    pub fn pp_state(&self) -> Option<&PpState> {
        self.pp.as_ref()
    }

    fn update(&mut self, n: usize, m: &Matrix, gamma: &Matrix, warnings: &mut Vec<String>) -> Result<()> {
        let sol = solve_counted(m, gamma, self.regularization, &self.counter)?;
        if let Some(w) = sol.warning {
            warnings.push(format!("mode {n}: {w}"));
        }
        self.model.set_factor(n, sol.x, &self.counter)
    }

    /// One exact sweep over all modes; returns the fast residual.
    pub fn regular_sweep(&mut self) -> Result<SweepOutcome> {
        let n_modes = self.model.order();
        let mut warnings = Vec::new();
        let mut last = None;
        for n in 0..n_modes {
            let gamma = self.model.gamma(n, &self.counter);
            let m = self
                .engine
                .mttkrp(self.model.factors(), self.model.versions(), n, &self.counter)?;
            self.update(n, &m, &gamma, &mut warnings)?;
            last = Some((gamma, m));
        }
        let (gamma, m) = last.expect("order >= 2");
        let k = n_modes - 1;
        let residual = residual_fast(self.norm_t_sq, &gamma, self.model.gram(k), &m, self.model.factor(k))?;
        Ok(SweepOutcome { residual, warnings })
    }

    /// Snapshots the factors and builds the PP operators.
    pub fn pp_begin(&mut self) -> Result<()> {
        let before = self.counter.snapshot();
        let reuse = if self.reuse {
            self.engine.reusable_first_level(self.model.versions())
        } else {
            None
        };
        let state = PpState::initialize(
            self.t,
            self.model.factors(),
            self.model.versions(),
            reuse,
            self.fuse_levels,
            &self.counter,
        )?;
        self.pp = Some(state);
        self.init_flops.push(self.counter.snapshot().since(&before));
        Ok(())
    }

    /// One sweep with approximated MTTKRPs.
    pub fn pp_sweep(&mut self) -> Result<SweepOutcome> {
        if self.pp.is_none() {
            return Err(Error::InvalidState("PP sweep without initialized operators".into()));
        }
        let n_modes = self.model.order();
        let mut warnings = Vec::new();
        let mut last = None;
        for n in 0..n_modes {
            let gamma = self.model.gamma(n, &self.counter);
            let state = self.pp.as_ref().expect("checked above");
            let m = state.approx_mttkrp(self.model.factors(), self.model.grams(), n, &self.counter)?;
            self.update(n, &m, &gamma, &mut warnings)?;
            last = Some((gamma, m));
        }
        let (gamma, m) = last.expect("order >= 2");
        let k = n_modes - 1;
        let residual =
            residual_fast_clamped(self.norm_t_sq, &gamma, self.model.gram(k), &m, self.model.factor(k))?;
        Ok(SweepOutcome { residual, warnings })
    }

    /// Drops the PP operators; the exact engine restarts its schedule.
    pub fn pp_end(&mut self) {
        self.pp = None;
        self.engine.reset();
    }

    pub fn into_model(self) -> KruskalModel {
        self.model
    }
}

impl SweepBackend for Solver<'_> {
    fn model(&self) -> &KruskalModel {
        &self.model
    }

    fn regular_sweep(&mut self) -> Result<SweepOutcome> {
        Solver::regular_sweep(self)
    }

    fn pp_begin(&mut self) -> Result<()> {
        Solver::pp_begin(self)
    }

    fn pp_sweep(&mut self) -> Result<SweepOutcome> {
        Solver::pp_sweep(self)
    }

    fn pp_end(&mut self) {
        Solver::pp_end(self)
    }

    fn flops(&self) -> FlopSnapshot {
        self.counter.snapshot()
    }

    fn words(&self) -> u64 {
        0
    }

    fn final_residual(&self) -> Result<f64> {
        residual_direct(self.t, &self.model)
    }

    fn pp_init_flops(&self) -> Vec<FlopSnapshot> {
        self.init_flops.clone()
    }

    fn cache_stats(&self) -> CacheStats {
        self.engine.stats()
    }
}

/// Writes the trace as CSV with columns
/// `sweep,phase,residual,fitness,flops_ttm,flops_mttv,flops_other,words_comm,wall_seconds`.
pub fn write_trace_csv<W: Write>(trace: &[SweepTrace], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "sweep",
        "phase",
        "residual",
        "fitness",
        "flops_ttm",
        "flops_mttv",
        "flops_other",
        "words_comm",
        "wall_seconds",
    ])?;
    for row in trace {
        out.write_record([
            row.sweep.to_string(),
            row.phase.label().to_string(),
            format!("{:e}", row.residual),
            format!("{:e}", row.fitness),
            row.flops.flops(Phase::Ttm).to_string(),
            row.flops.flops(Phase::Mttv).to_string(),
            row.flops.other_flops().to_string(),
            row.words.to_string(),
            format!("{:.6}", row.wall_seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}
