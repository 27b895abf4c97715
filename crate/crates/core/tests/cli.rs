use std::process::Command;

fn cpbench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cpbench")).args(args).output().expect("spawn cpbench")
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(cpbench(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(cpbench(&["--dims", "4x0x4", "--dump-tree"]).status.code(), Some(1));
    assert_eq!(cpbench(&["--strategies", "bogus", "--dims", "4x4x4"]).status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let out = cpbench(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--tensor", "--dims", "--rank", "--strategies", "--tol", "--pp-tol", "--max-sweeps", "--seed", "--grid", "--out", "--fuse-levels", "--threads", "--dump-tree", "--predict-costs"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn dump_tree_lists_pp_levels() {
    let out = cpbench(&["--dims", "5x5x5x5", "--dump-tree"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("level 1 node 0 kept {1,2,3,4} parent -"), "{text}");
    assert!(text.contains("level 3"), "{text}");
}

#[test]
fn predict_costs_prints_every_algorithm() {
    let out = cpbench(&["--dims", "16x16x16", "--rank", "4", "--predict-costs", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for alg in ["dt", "msdt", "pp_init", "pp_approx"] {
        assert!(text.contains(alg), "missing {alg} in {text}");
    }
}

#[test]
fn small_run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = cpbench(&[
        "--tensor", "gen:rank", "--dims", "8x7x6", "--rank", "3", "--strategies", "dt,pp",
        "--max-sweeps", "20", "--seed", "1,2", "--grid", "2x1x1", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("dt,") || l.starts_with("pp,")).count(), 4, "{stdout}");
    for name in ["summary.csv", "trace_dt_seed1.csv", "trace_pp_seed2.csv", "comm_dt_seed1.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
}

#[test]
fn missing_tensor_file_is_an_error() {
    let out = cpbench(&["--tensor", "/nonexistent/tensor.bin", "--max-sweeps", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
