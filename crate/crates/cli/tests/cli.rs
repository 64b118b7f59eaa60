use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wy")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Response row of labels, then one row per feature: the first two
/// features separate the groups completely.
fn write_data(dir: &Path) -> String {
    let text = "\
a,a,a,a,b,b,b,b
1,2,3,4,11,12,13,14
5,6,7,8,21,22,23,24
3.1,9.4,2.2,7.7,5.3,1.8,8.6,4.9
";
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn adjust_writes_one_row_per_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let o = wy(&["adjust", "--data", &data, "--exhaustive", "--alpha", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "hypothesis,raw_p,adjusted_p,rejected");
    assert_eq!(lines.len(), 4);
    // Complete separation at 4/4 gives the smallest two-sided value 2/70.
    let raw: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((raw - 2.0 / 70.0).abs() < 1e-12);
    assert!(lines[3].ends_with("false"));
}

#[test]
fn adjust_json_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let o = wy(&["--format", "json", "adjust", "--data", &data, "--stepdown", "--permutations", "200"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["summary"]["method"], "wy_step_down");
    assert_eq!(v["hypotheses"].as_array().unwrap().len(), 3);

    let out = dir.path().join("out");
    let o = wy(&["--out", out.to_str().unwrap(), "adjust", "--data", &data]);
    assert!(o.status.success());
    assert!(out.join("adjusted.csv").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn seeds_make_runs_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let a = wy(&["--seed", "9", "adjust", "--data", &data, "--permutations", "50"]);
    let b = wy(&["--seed", "9", "adjust", "--data", &data, "--permutations", "50"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn lattice_lists_exact_values() {
    let o = wy(&["lattice", "--n", "6"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let fractions: Vec<String> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{}/{}", f[1], f[2])
        })
        .collect();
    assert_eq!(fractions, ["1/10", "1/5", "2/5", "7/10", "1/1"]);
}

#[test]
fn verify_passes() {
    let o = wy(&["verify"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn oracle_and_simulate_from_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(
        &scenario,
        "m = 40\nn1 = 8\nn2 = 8\nstructure = \"block\"\nrho = 0.6\nblock_size = 10\nalternatives = 3\nalternative_pool = 10\nshift = 1.0\nseed = 4\n",
    )
    .unwrap();
    let s = scenario.to_str().unwrap();

    let o = wy(&["--format", "json", "oracle", "--scenario", s, "--sims", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = v["threshold"].as_f64().unwrap();
    assert!(c > 0.0 && c < 0.05);
    assert!(v["effective_level"].as_f64().unwrap() <= 0.05);

    let out = dir.path().join("sim");
    let o = wy(&[
        "--out",
        out.to_str().unwrap(),
        "simulate",
        "--scenario",
        s,
        "--runs",
        "4",
        "--permutations",
        "49",
        "--oracle-sims",
        "100",
        "--methods",
        "bonferroni,wy_single_step",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    for f in ["summary.csv", "report.json", "timing.json", "power.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn benchmark_reports_timings() {
    let o = wy(&["--format", "json", "benchmark", "--m", "50", "--permutations", "20"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["m"], 50);
    assert!(v["total_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(wy(&["adjust"]).status.code(), Some(2));
    assert_eq!(wy(&["adjust", "--data", "/nonexistent/x.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    assert_eq!(wy(&["adjust", "--data", &data, "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(wy(&["simulate", "--methods", "nope", "--preset", "desk"]).status.code(), Some(2));
}

#[test]
fn tied_data_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ties.csv");
    fs::write(&path, "0,0,1,1\n1,1,2,3\n").unwrap();
    let o = wy(&["adjust", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let ok = wy(&["adjust", "--data", path.to_str().unwrap(), "--permissive-ties"]);
    assert!(ok.status.success());
}
