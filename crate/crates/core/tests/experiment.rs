use cpals::bench::{read_trace_csv, run_experiment, trace_file_name, ExperimentSpec, SummaryRow, TensorSource};
use cpals::{AlsConfig, Strategy};

fn spec(out_dir: &std::path::Path, grid: Option<Vec<usize>>) -> ExperimentSpec {
    ExperimentSpec {
        source: TensorSource::Collinear { lo: 0.2, hi: 0.4 },
        dims: Some(vec![9, 8, 7]),
        strategies: vec![Strategy::Dt, Strategy::Msdt, Strategy::Pp],
        config: AlsConfig { rank: 3, max_sweeps: 40, ..AlsConfig::default() },
        seeds: vec![3, 4],
        grid,
        threads: false,
        out_dir: out_dir.to_path_buf(),
    }
}

fn without_time(rows: &mut [cpals::bench::TraceRow]) {
    rows.iter_mut().for_each(|r| r.wall_seconds = 0.0);
}

#[test]
fn reruns_reproduce_every_trace() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&spec(a.path(), None)).unwrap();
    run_experiment(&spec(b.path(), None)).unwrap();
    for strategy in [Strategy::Dt, Strategy::Msdt, Strategy::Pp] {
        for seed in [3, 4] {
            let name = trace_file_name(strategy, seed);
            let mut x = read_trace_csv(std::fs::File::open(a.path().join(&name)).unwrap()).unwrap();
            let mut y = read_trace_csv(std::fs::File::open(b.path().join(&name)).unwrap()).unwrap();
            without_time(&mut x);
            without_time(&mut y);
            assert_eq!(x, y, "{name}");
        }
    }
}

#[test]
fn summary_matches_the_traces_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&spec(dir.path(), Some(vec![2, 2, 1]))).unwrap();
    let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let on_disk: Vec<SummaryRow> = rd.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(on_disk.len(), 6);
    for (row, reported) in on_disk.iter().zip(&report.summary) {
        let strategy: Strategy = row.strategy.parse().unwrap();
        let trace = std::fs::File::open(dir.path().join(trace_file_name(strategy, row.seed))).unwrap();
        let recomputed = SummaryRow::from_trace(&row.strategy, row.seed, &read_trace_csv(trace).unwrap());
        assert_eq!(row.total_flops, recomputed.total_flops);
        assert_eq!(row.total_words, recomputed.total_words);
        assert_eq!(row.sweeps_pp_approx, recomputed.sweeps_pp_approx);
        assert!((row.final_fitness - recomputed.final_fitness).abs() <= 1e-12);
        assert_eq!(row.strategy, reported.strategy);
        assert!(row.total_words > 0);
    }
}
