use wy_core::experiment::{run_experiment, ExperimentConfig};
use wy_core::report::{emit_outputs, parse_summary_csv, summary_rows};
use wy_core::sim::Structure;
use wy_core::{Method, SimulationScenario};

const SCENARIO: &str = r#"
m = 120
n1 = 12
n2 = 12
structure = "toeplitz"
rho = 0.9
alternatives = 6
alternative_pool = 30
shift = 1.5
seed = 17
"#;

fn config() -> ExperimentConfig {
    let scenario = SimulationScenario::from_toml(SCENARIO).unwrap();
    ExperimentConfig {
        oracle_sims: 200,
        ..ExperimentConfig::study(scenario, 17).with_runs(8).with_permutations(99)
    }
}

#[test]
fn scenario_file_to_outputs() {
    let cfg = config();
    assert_eq!(cfg.scenario.structure, Structure::Toeplitz { rho: 0.9 });
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.runs.len(), 8);
    assert!(report.always_nested());
    assert!(report
        .runs
        .iter()
        .all(|r| r.false_positives.len() == Method::ALL.len() && r.true_positives.len() == Method::ALL.len()));

    let dir = tempfile::tempdir().unwrap();
    let paths = emit_outputs(std::slice::from_ref(&report), dir.path()).unwrap();
    let rows = parse_summary_csv(&std::fs::read_to_string(&paths.csv).unwrap()).unwrap();
    assert_eq!(rows, summary_rows(std::slice::from_ref(&report)));
    assert_eq!(rows.len(), Method::ALL.len());
    assert!(rows.iter().all(|r| r.structure == "toeplitz" && r.m == 120 && r.runs == 8));

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths.json).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn reports_are_deterministic() {
    let a = run_experiment(&config()).unwrap();
    let b = run_experiment(&config()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn strong_signal_is_found() {
    let report = run_experiment(&config()).unwrap();
    let tp = |m| report.summary(m).unwrap().mean_true_positives;
    assert!(tp(Method::WyStepDown) >= tp(Method::WySingleStep));
    assert!(tp(Method::Holm) >= tp(Method::Bonferroni));
    assert!(tp(Method::OracleStepDown) >= tp(Method::OracleSingleStep));
    assert!(tp(Method::WySingleStep) > 0.0);
}
