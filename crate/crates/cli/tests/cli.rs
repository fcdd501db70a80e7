use std::path::{Path, PathBuf};

use proptest::prelude::*;

use phrom_cli::config::{load_config, ConfigError};
use phrom_cli::output::{format_real, write_csv, Field, Table};
use phrom_cli::run_cli;

const SMALL: &str = r#"{
  "model": { "type": "linear_msd", "n_masses": 6, "mass": 2.0, "stiffness": 1.0, "damping": 1.0 },
  "time": { "t0": 0.0, "t_end": 5.0, "dt": 0.1 },
  "input": { "type": "sine", "amplitude": 0.1, "frequency": 1.0 },
  "rom": { "methods": ["SP1", "GMG-POD", "GMG-QM"], "r_min": 3, "r_max": 5, "r_n": 2, "lambda_reg": 1e-3, "energy_r": 4 }
  ,"newton": { "tol": 1e-10, "max_iter": 10 }
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let mut argv: Vec<String> = vec!["phrom".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend([
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]);
    run_cli(argv)
}

#[test]
fn run_experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(run(&["run-experiment"], &config, &a), 0);
    assert_eq!(run(&["run-experiment"], &config, &b), 0);
    assert_eq!(run(&["run-experiment", "--jobs", "3"], &config, &c), 0);
    for name in ["errors.csv", "energy.csv"] {
        let first = std::fs::read(a.join(name)).unwrap();
        assert_eq!(first, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(
            first,
            std::fs::read(c.join(name)).unwrap(),
            "{name} with --jobs 3"
        );
    }
    assert!(!a.join("failures.csv").exists());

    let errors = std::fs::read_to_string(a.join("errors.csv")).unwrap();
    let mut lines = errors.lines();
    assert_eq!(
        lines.next(),
        Some("method,r,e_x_red,e_x_proj,e_x_lowerbound,e_y")
    );
    assert_eq!(lines.count(), 9);
    let energy = std::fs::read_to_string(a.join("energy.csv")).unwrap();
    assert_eq!(
        energy.lines().next(),
        Some("t,error_energy_fom,error_energy_SP1,error_energy_GMG-POD,error_energy_GMG-QM")
    );
    assert_eq!(energy.lines().count(), 52);
}

#[test]
fn failed_cells_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"r_max\": 5", "\"r_max\": 13");
    let config = write_config(dir.path(), &text);
    assert_eq!(run(&["run-experiment"], &config, dir.path()), 0);
    let failures = std::fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert!(failures.lines().count() > 1);
    // N = 12: r = 13 is out of reach, and GMG-QM also needs r − 1 + r_n ≤ 12
    assert!(failures
        .lines()
        .skip(1)
        .all(|l| l.contains(",13,") || l.starts_with("GMG-QM,11,") || l.starts_with("GMG-QM,12,")));
    let errors = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(errors.lines().any(|l| l.ends_with(",13,,,,")));
}

#[test]
fn missing_config_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["run-experiment"], &missing, dir.path()), 1);
    let err = load_config(&missing).unwrap_err();
    assert!(matches!(err, ConfigError::Unreadable { .. }));
    assert!(err.to_string().contains("nope.json"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &SMALL.replace("\"dt\": 0.1", "\"dt\": 0.1, \"dtt\": 0.2"),
    );
    let err = load_config(&config).unwrap_err();
    assert!(matches!(err, ConfigError::Schema { .. }));
    assert!(err.to_string().contains("dtt"));
    assert_eq!(run(&["validate"], &config, dir.path()), 1);
}

#[test]
fn invalid_values_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (from, to, field) in [
        ("\"dt\": 0.1", "\"dt\": -0.1", "time.dt"),
        ("\"mass\": 2.0", "\"mass\": 0.0", "model.mass"),
        ("\"lambda_reg\": 1e-3,", "", "rom.lambda_reg"),
        ("\"GMG-QM\"", "\"GMG-XX\"", "rom.methods"),
    ] {
        let config = write_config(dir.path(), &SMALL.replace(from, to));
        let err = load_config(&config).unwrap_err();
        assert!(err.to_string().contains(field), "{err}");
    }
}

#[test]
fn validate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    assert_eq!(run(&["validate"], &config, dir.path()), 0);
    assert_eq!(
        run(&["export-embedding", "--r", "4"], &config, dir.path()),
        0
    );
    for name in [
        "sp1_r4_basis.csv",
        "gmg_pod_r4_j.csv",
        "gmg_qm_r4_m.csv",
        "gmg_qm_r4_b.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(run(&["simulate-fom"], &config, dir.path()), 0);
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,y_1,H,x_1,"));
    assert_eq!(traj.lines().count(), 52);
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(run_cli(["phrom", "frobnicate"]), 1);
    assert_eq!(run_cli(["phrom", "run-experiment"]), 1);
    assert_eq!(run_cli(["phrom", "--help"]), 0);
}

proptest! {
    #[test]
    fn csv_reals_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = Table {
            header: vec!["k".into(), "v".into()],
            rows: values.iter().enumerate().map(|(i, &v)| vec![Field::Int(i), Field::Real(v)]).collect(),
        };
        write_csv(&table, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        for (rec, &v) in reader.records().zip(&values) {
            let back: f64 = rec.unwrap()[1].parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
        prop_assert_eq!(format_real(1.0), "1.0000000000000000e0");
    }
}
