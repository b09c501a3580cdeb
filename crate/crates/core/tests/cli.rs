use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use css_lattice::fieldio::{read_complex_field, read_real_field};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_css-lattice"));
    cmd.env_remove("CSS_LATTICE_OUT");
    cmd
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stationary_writes_state_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["stationary", "--h", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let state = read_real_field(&dir.path().join("state.csv")).unwrap();
    assert_eq!(state.window().h, 5.0);
    let meta = json(&dir.path().join("state.json"));
    assert_eq!(meta["converged"], true);
    assert!(meta["residual_linf"].as_f64().unwrap() <= 1e-12);
    assert!((meta["mass"].as_f64().unwrap() - state.mass()).abs() < 1e-12);
    assert!(dir.path().join("state_g.csv").exists());
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["stationary"], dir.path())), 1, "missing h");
    assert_eq!(code(&run(&["stationary", "--h", "-1"], dir.path())), 1, "negative h");
    assert_eq!(
        code(&run(&["stationary", "--h", "2", "--p", "abc"], dir.path())),
        1,
        "bad number"
    );
    assert_eq!(
        code(&run(&["roots", "--h-min", "1"], dir.path())),
        1,
        "incomplete sweep"
    );

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "h = 2\nbogus = 1\n").unwrap();
    let o = run(&["stationary", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn newton_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["stationary", "--h", "2", "--max-iter", "1"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["verify"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(json(&dir.path().join("verify.json"))["passed"], true);

    let strict = tempfile::tempdir().unwrap();
    let bad = run(&["verify", "--tolerance", "1e-16"], strict.path());
    assert_eq!(code(&bad), 3);
    assert_eq!(json(&strict.path().join("verify.json"))["passed"], false);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = bin()
        .args(["roots", "--h-min", "1", "--h-max", "100", "--h-steps", "5"])
        .env("CSS_LATTICE_OUT", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(target.join("roots.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("h,u_single,w_double,single_residual,double_residual,ratio"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# stationary at h = 3\nh = 3\nomega = 2\n").unwrap();
    let o = run(
        &["stationary", "--config", cfg.to_str().unwrap(), "--h", "4"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let meta = json(&dir.path().join("state.json"));
    assert_eq!(meta["h"], 4.0);
    assert_eq!(meta["omega"], 2.0);
}

#[test]
fn identical_config_gives_identical_files() {
    let args = [
        "evolve",
        "--h",
        "1",
        "--sites",
        "31",
        "--t-end",
        "0.5",
        "--rng-seed",
        "7",
        "--write-snapshots",
        "true",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&args, a.path())), 0);
    assert_eq!(code(&run(&args, b.path())), 0);
    let mut names = Vec::new();
    for entry in walk(a.path()) {
        let rel = entry.strip_prefix(a.path()).unwrap().to_path_buf();
        assert_eq!(
            fs::read(&entry).unwrap(),
            fs::read(b.path().join(&rel)).unwrap(),
            "{rel:?}"
        );
        names.push(rel);
    }
    assert!(names.iter().any(|n| n.ends_with("trace.csv")));
    assert!(names.len() > 3);

    let last = read_complex_field(&a.path().join("final.csv")).unwrap();
    assert_eq!(last.len(), 31);
    let summary = json(&a.path().join("summary.json"));
    assert!(summary["mass_drift"].as_f64().unwrap() < 1e-8);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn continue_reports_connected_folds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "continue",
            "--h",
            "5",
            "--seed",
            "both",
            "--h-max",
            "40",
            "--max-folds",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&dir.path().join("branches.json"));
    let branches = summary["branches"].as_array().unwrap();
    assert_eq!(branches.len(), 2);
    let folds: Vec<f64> = branches.iter().map(|b| b["fold_h"].as_f64().unwrap()).collect();
    assert!((folds[0] - folds[1]).abs() < 1e-6 * folds[0]);
    let lower = &summary["connections"][0]["folds"][0];
    assert_eq!(lower["side"], "lower");
    assert_eq!(lower["matched"], true);

    let csv = fs::read_to_string(dir.path().join("branch_0_single_site.csv")).unwrap();
    assert!(csv.starts_with("arc,h,mass,residual,iterations,tangent_dh,fold_flag"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 1);
    assert!(dir.path().join("branch_1_double_site.csv").exists());
}

#[test]
fn seed_file_round_trips_through_stationary() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["stationary", "--h", "5"], dir.path())), 0);
    let seed = dir.path().join("state.csv");
    let again = tempfile::tempdir().unwrap();
    let o = run(
        &["stationary", "--h", "5", "--seed", seed.to_str().unwrap()],
        again.path(),
    );
    assert_eq!(code(&o), 0);
    let a = read_real_field(&seed).unwrap();
    let b = read_real_field(&again.path().join("state.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn help_exits_zero() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("continue"));
}

#[test]
fn no_branches_still_give_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let written = css_lattice::cli::emit_branch_figure_data(&[], dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    let summary = json(&dir.path().join("branches.json"));
    assert_eq!(summary["branches"].as_array().unwrap().len(), 0);
    assert_eq!(summary["connections"].as_array().unwrap().len(), 0);
}
