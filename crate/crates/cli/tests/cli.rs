use std::path::Path;
use std::process::{Command, Output};

fn heatbem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatbem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn uniform_study_writes_tables_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatbem(&["study-uniform", "--levels", "2", "--out", &out(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["table1.csv", "table1.md", "mesh_L0.txt", "mesh_L2.txt", "meta.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("L,N,"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,2,"));
}

#[test]
fn uniform_study_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(heatbem(&["study-uniform", "--levels", "2", "--out", &out(d.path())]).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("table1.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn adaptive_study_writes_second_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatbem(&["study-adaptive", "--levels", "2", "--precond", "calderon", "--out", &out(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("table2.csv").exists());
    assert!(dir.path().join("table2.md").exists());
}

#[test]
fn solve_writes_flux_and_interior_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatbem(&["solve", "--level", "3", "--point", "0.25,0.1", "--dump-matrices", "--out", &out(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let flux = std::fs::read_to_string(dir.path().join("flux.csv")).unwrap();
    assert_eq!(flux.lines().count(), 1 + 16);
    let interior = std::fs::read_to_string(dir.path().join("interior.csv")).unwrap();
    assert_eq!(interior.lines().count(), 2);
}

#[test]
fn check_invariants_passes() {
    let o = heatbem(&["check-invariants", "--levels", "2"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["study-uniform", "--alpha", "-1"],
        vec!["study-uniform", "--example", "3"],
        vec!["study-uniform", "--precond", "ilu"],
        vec!["study-adaptive", "--theta", "1.5"],
        vec!["solve", "--point", "2.0,0.1"],
        vec!["study-uniform", "--config", "/nonexistent/heatbem.cfg"],
    ] {
        let mut a = args.clone();
        let o = out(dir.path());
        a.extend(["--out", o.as_str()]);
        assert_eq!(heatbem(&a).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_is_applied_before_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nlevels = 1\nalpha = 2\n").unwrap();
    let o = heatbem(&["study-uniform", "--config", cfg.to_str().unwrap(), "--alpha", "3", "--out", &out(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(csv.contains("# alpha: 3"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
}
