use std::path::Path;
use std::process::{Command, Output};

use picard_nls::experiments::read_field;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_picard-nls"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env_remove("PICARD_NLS_THREADS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_TAU: &str = r#"
[scheme]
scheme = "nqs"
p = 5
d = 1
order = 3
eps = 1.0
tau = 0.05
final_time = 0.2
scale = 0.25
modes = 64

[sweep]
case = "quintic1d"
taus = [0.05, 0.025]
channels = ["U0", "U1", "U2"]
oracle_tau0 = 1e-3

[[checks]]
channel = "U1"
min_slope = 1.5
max_slope = 2.5

[[checks]]
channel = "U2"
min_slope = 5.0
"#;

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate-trees", "--q", "3"], dir.path()).status.code(), Some(2));
}

#[test]
fn validate_trees_matches_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate-trees", "--p", "3", "--n-max", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text, include_str!("golden/validate_trees_p3_n3.txt"));
    for needle in ["T_1: 1 trees", "T_2: 2 trees", "T_3: 6 trees", "weight identity (316 trees): PASS"] {
        assert!(text.contains(needle), "{needle}");
    }
}

#[test]
fn weight_identity_for_quintic_trees() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate-trees", "--p", "5", "--n-max", "3", "--beta-max", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("T_2: 2 trees"));
}

#[test]
fn tau_sweep_writes_csv_and_sidecar_and_asserts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_TAU).unwrap();
    let args = ["convergence-tau", "--config", "small.toml", "--output", "out/a.csv"];
    let o = run(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("U1: slope"));
    let csv = std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("abscissa,channel,error"));
    assert_eq!(lines.count(), 6);
    let meta = std::fs::read_to_string(dir.path().join("out/a.meta.toml")).unwrap();
    for key in ["command = \"convergence-tau\"", "version = ", "cutoff = \"SharpIndicator\"", "scheme = \"nqs\"", "taus = "] {
        assert!(meta.contains(key), "{key}\n{meta}");
    }

    // the U2 check asks for an impossible slope
    let mut asserted = args.to_vec();
    asserted.push("--assert");
    assert_eq!(run(&asserted, dir.path()).status.code(), Some(3));
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_TAU).unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = run(&["convergence-tau", "--config", "small.toml", "--output", out], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), SMALL_TAU.replace("tau = 0.05", "tau = 0.03")).unwrap();
    assert_eq!(run(&["convergence-tau", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), SMALL_TAU.replace("modes", "mode")).unwrap();
    assert_eq!(run(&["convergence-tau", "--config", "typo.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["convergence-tau", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    let o = bin()
        .args(["validate-trees"])
        .current_dir(dir.path())
        .env("PICARD_NLS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_TAU).unwrap();
    let o = bin()
        .args(["convergence-tau", "--config", "small.toml", "--output", "t.csv"])
        .current_dir(dir.path())
        .env("PICARD_NLS_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn eps_sweep_reports_both_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "convergence-eps",
            "--case",
            "quintic1d",
            "--epsilons",
            "0.5,0.1",
            "--tau",
            "0.05",
            "--reference-tau",
            "0.005",
            "--modes",
            "64",
            "--final-time",
            "0.2",
            "--output",
            "eps.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eps.csv")).unwrap();
    assert!(csv.contains(",E_LS,") && csv.contains(",E_NQS,"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn turbulence_writes_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["turbulence", "--modes", "32", "--final-time", "0.4", "--record-every", "2", "--seed", "7", "--output", "s.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("t,k_shell,n_rad\n"));
    let times: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times.len(), 3);
    let meta = std::fs::read_to_string(dir.path().join("s.meta.toml")).unwrap();
    assert!(meta.contains("seed = 7"));
    assert!(meta.contains("max_diagnostic"));
}

#[test]
fn turbulence_memory_guard_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["turbulence", "--preset", "full", "--memory-limit-mb", "64"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MiB"));
}

#[test]
fn cross_validation_passes_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cross-validate-nts", "--modes", "32", "--steps", "3", "--assert"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let o = run(&["cross-validate-nts", "--modes", "32", "--steps", "3", "--variant", "as-printed", "--assert"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["oracle-dump", "--case", "quintic1d", "--final-time", "0.1", "--modes", "64", "--scale", "0.25", "--tau0", "0.01", "--out-dir", "dump"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let index = std::fs::read_to_string(dir.path().join("dump/oracle-quintic1d.csv")).unwrap();
    assert_eq!(index.lines().count(), 4);
    let mut file = std::fs::File::open(dir.path().join("dump/quintic1d_U0.fld")).unwrap();
    let f = read_field(&mut file).unwrap();
    assert_eq!(f.grid().modes(), 64);
    assert!((f.data()[32].norm() - 1.0).abs() < 0.1);
}
