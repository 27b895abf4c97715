use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::als::{run, AlsConfig, KruskalModel, Strategy, SweepPhase};
use crate::tensor::{reconstruct, relative_max_diff, DenseTensor};

fn noisy_low_rank(shape: &[usize], rank: usize, noise: f64, seed: u64) -> DenseTensor {
    let m = KruskalModel::random(shape, rank, seed + 1000).unwrap();
    let mut t = reconstruct(m.factors()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in t.data_mut() {
        *x += noise * (rng.random::<f64>() - 0.5);
    }
    t
}

fn config(strategy: Strategy, sweeps: usize) -> AlsConfig {
    AlsConfig {
        rank: 3,
        stop_delta: 0.0,
        max_sweeps: sweeps,
        seed: 7,
        strategy,
        pp_tolerance: 0.5,
        record_factors: true,
        ..AlsConfig::default()
    }
}

/// Words one exact sweep moves per processor: for each mode a
/// reduce-scatter and an all-gather of the `⌈s_i/I_i⌉ x R` block within the
/// slice, and an all-reduce of the `R x R` Gram matrix over all processors.
fn reference_sweep_words(shape: &[usize], grid: &[usize], r: usize, gram_payload: usize) -> u64 {
    let p: usize = grid.iter().product();
    let d = |q: usize| usize::from(q > 1);
    let mut w = 0;
    for (&s, &i) in shape.iter().zip(grid) {
        let block = s.div_ceil(i) * r;
        w += 2 * block * d(p / i);
        w += 2 * gram_payload * r * r * d(p);
    }
    w as u64
}

#[test]
fn single_processor_is_bitwise_sequential() {
    let t = noisy_low_rank(&[6, 5, 4], 3, 0.05, 1);
    for strategy in [Strategy::Dt, Strategy::Msdt, Strategy::Pp] {
        let cfg = config(strategy, 12);
        let seq = run(&t, &cfg).unwrap();
        let par = run_parallel(&t, &[1, 1, 1], &cfg, false).unwrap();
        assert_eq!(seq.trace.len(), par.run.trace.len());
        for (a, b) in seq.trace.iter().zip(&par.run.trace) {
            assert_eq!(a.phase, b.phase);
            assert_eq!(a.residual.to_bits(), b.residual.to_bits(), "{strategy} sweep {}", a.sweep);
        }
        for (fa, fb) in seq.factor_history.iter().zip(&par.run.factor_history) {
            assert_eq!(fa, fb);
        }
        if strategy == Strategy::Pp {
            assert!(seq.sweeps_in_phase(SweepPhase::PpApprox) > 0);
        }
        assert_eq!(par.counters.total().words, 0);
    }
}

#[test]
fn grid_runs_match_sequential() {
    let t = noisy_low_rank(&[8, 8, 8], 3, 0.05, 2);
    for strategy in [Strategy::Dt, Strategy::Msdt, Strategy::Pp] {
        let cfg = config(strategy, 10);
        let seq = run(&t, &cfg).unwrap();
        let par = run_parallel(&t, &[2, 2, 2], &cfg, false).unwrap();
        let phases: Vec<_> = seq.trace.iter().map(|s| s.phase).collect();
        let par_phases: Vec<_> = par.run.trace.iter().map(|s| s.phase).collect();
        assert_eq!(phases, par_phases);
        for (fa, fb) in seq.factor_history.iter().zip(&par.run.factor_history) {
            for (a, b) in fa.iter().zip(fb) {
                assert!(relative_max_diff(a, b) <= 1e-10, "{strategy}: {}", relative_max_diff(a, b));
            }
        }
    }
}

#[test]
fn uneven_grid_with_padding_matches_sequential() {
    let t = noisy_low_rank(&[7, 5, 6], 3, 0.05, 3);
    let cfg = config(Strategy::Dt, 6);
    let seq = run(&t, &cfg).unwrap();
    let par = run_parallel(&t, &[2, 3, 4], &cfg, true).unwrap();
    for (fa, fb) in seq.factor_history.iter().zip(&par.run.factor_history) {
        for (a, b) in fa.iter().zip(fb) {
            assert!(relative_max_diff(a, b) <= 1e-10);
        }
    }
    assert!((seq.final_residual - par.run.final_residual).abs() <= 1e-10);
}

#[test]
fn threading_does_not_change_results() {
    let t = noisy_low_rank(&[6, 6, 6, 4], 2, 0.1, 4);
    let cfg = AlsConfig { rank: 2, ..config(Strategy::Pp, 8) };
    let a = run_parallel(&t, &[2, 1, 3, 2], &cfg, false).unwrap();
    let b = run_parallel(&t, &[2, 1, 3, 2], &cfg, true).unwrap();
    assert_eq!(a.run.factor_history, b.run.factor_history);
    assert_eq!(a.proc_flops, b.proc_flops);
}

#[test]
fn exact_sweep_words_follow_the_collective_formulas() {
    let t = noisy_low_rank(&[8, 6, 9], 3, 0.05, 5);
    for grid in [[2, 2, 2], [1, 2, 3], [4, 1, 1]] {
        let cfg = config(Strategy::Dt, 5);
        let par = run_parallel(&t, &grid, &cfg, false).unwrap();
        let als = par.counters.phase_total(CommPhase::Als);
        let want = reference_sweep_words(t.shape(), &grid, 3, 1);
        assert_eq!(als.words, 5 * want, "{grid:?}");
        // residual: one scalar all-reduce per sweep
        let res = par.counters.get(CommPhase::Residual, Collective::AllReduce);
        assert_eq!(res.calls, 5);
    }
}

#[test]
fn pp_operators_need_no_communication() {
    let t = noisy_low_rank(&[8, 8, 8], 3, 0.01, 6);
    let cfg = config(Strategy::Pp, 10);
    let par = run_parallel(&t, &[2, 2, 2], &cfg, false).unwrap();
    let approx = par.run.sweeps_in_phase(SweepPhase::PpApprox) + par.run.sweeps_in_phase(SweepPhase::PpInit);
    assert!(approx > 0);
    assert_eq!(par.counters.phase_total(CommPhase::PpInit).calls, 0);
    let words = par.counters.phase_total(CommPhase::PpApprox).words;
    let want = reference_sweep_words(t.shape(), &[2, 2, 2], 3, 2);
    assert_eq!(words, approx as u64 * want);
}

#[test]
fn pp_approximation_matches_sequential_operator_sums() {
    // M̃ of the first approximated mode: compare the distributed and
    // sequential factors right after one PP sweep.
    let t = noisy_low_rank(&[6, 8, 4], 3, 0.02, 8);
    let cfg = config(Strategy::Pp, 3);
    let model = KruskalModel::random(t.shape(), 3, 9).unwrap();
    let grid = VirtualGrid::distribute(&t, &[3, 2, 2]).unwrap();
    let mut par = ParallelSolver::new(&grid, model.clone(), &cfg, false).unwrap();
    let mut seq = crate::als::Solver::new(&t, model, &cfg).unwrap();
    for _ in 0..2 {
        par.regular_sweep().unwrap();
        seq.regular_sweep().unwrap();
    }
    par.pp_begin().unwrap();
    seq.pp_begin().unwrap();
    for _ in 0..2 {
        let a = par.pp_sweep().unwrap();
        let b = seq.pp_sweep().unwrap();
        assert!((a.residual - b.residual).abs() < 1e-10);
    }
    for (a, b) in par.model().factors().iter().zip(seq.model().factors()) {
        assert!(relative_max_diff(a, b) <= 1e-10);
    }
    par.pp_end();
    assert!(par.pp_sweep().is_err());
}

#[test]
fn setup_charges_one_gather_and_reduce_per_later_mode() {
    let t = noisy_low_rank(&[4, 4, 4, 4], 2, 0.0, 10);
    let grid = VirtualGrid::distribute(&t, &[2, 2, 1, 2]).unwrap();
    let cfg = AlsConfig { rank: 2, ..AlsConfig::default() };
    let model = KruskalModel::random(t.shape(), 2, 0).unwrap();
    let s = ParallelSolver::new(&grid, model, &cfg, false).unwrap();
    assert_eq!(s.counters().get(CommPhase::Setup, Collective::AllGather).calls, 3);
    // three Gram matrices plus ‖T‖²
    assert_eq!(s.counters().get(CommPhase::Setup, Collective::AllReduce).calls, 4);
}

#[test]
fn rejects_mismatched_grid() {
    let t = noisy_low_rank(&[4, 4, 4], 2, 0.0, 11);
    assert!(run_parallel(&t, &[2, 2], &config(Strategy::Dt, 2), false).is_err());
    assert!(run_parallel(&t, &[2, 0, 1], &config(Strategy::Dt, 2), false).is_err());
}
