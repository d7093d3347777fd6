use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fedalloc-bench");

fn bench(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 11\nn_devices = 4\n");
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let run = bench(&["run", "--config", &config, "--out", out_s, "--seeds", "3"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let comparison = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = comparison.lines();
    assert_eq!(lines.next(), Some("seed,proposed,random_pf,random_theta,random_all,flags"));
    let seeds: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["11", "12", "13"]);
    for name in ["convergence.csv", "energy_sweep.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }

    let report = bench(&["report", "--in", out_s]);
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.starts_with("rows: 3\n"), "{text}");
    assert!(text.contains("proposed win rate: "), "{text}");
}

#[test]
fn same_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 5\nn_devices = 3\nseeds = 2\n");
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bench(&["run", "--config", &config, "--out", out.to_str().unwrap()]).status;
        assert!(status.success());
        tables.push(
            ["convergence.csv", "comparison.csv", "energy_sweep.csv"].map(|n| std::fs::read(out.join(n)).unwrap()),
        );
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn method_subset_leaves_other_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 2\nn_devices = 2\n");
    let out = dir.path().join("out");
    let run = bench(&[
        "run",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--methods",
        "random_pf,random_all",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let comparison = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let row: Vec<&str> = comparison.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert!(row[1].is_empty() && row[3].is_empty());
    assert!(!row[2].is_empty() && !row[4].is_empty());
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 1\nt_max = -4\n");
    let run = bench(&["run", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("t_max"));

    let missing = bench(&["report", "--in", dir.path().join("nowhere").to_str().unwrap()]);
    assert!(!missing.status.success());

    let unknown = bench(&["run", "--config", &config, "--out", "x", "--methods", "greedy"]);
    assert!(!unknown.status.success());
}

#[test]
fn oracle_check_single() {
    let out = bench(&["oracle-check", "--check", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[PASS] 8. "), "{text}");
    assert_eq!(text.lines().count(), 1);
}
