use std::process::Command;

use magafem::io::read_history;

fn magafem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magafem"))
}

fn run_ok(args: &[&str]) -> String {
    let out = magafem().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "magafem {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn uniform_run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("uniform");
    let out_s = out.to_str().unwrap();
    run_ok(&["run", "--mode", "uniform", "--n", "3", "--steps", "3", "--kappa", "1", "--out", out_s]);
    let rows = read_history(&out.join("history.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1].dof > w[0].dof));
    assert!(rows[2].total < rows[0].total, "uniform refinement must reduce the error");
    assert!(rows.iter().all(|r| r.m_h.is_some_and(|m| r.total <= m)));
    for i in 0..3 {
        let vtk = std::fs::read_to_string(out.join(format!("iter{i:03}.vtk"))).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version"));
        assert!(vtk.contains("SCALARS M_T double 1"));
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("mode = uniform"));
    assert!(manifest.contains("bound_holds = true"));
}

#[test]
fn adaptive_run_has_monotone_dof_and_compare_merges() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("adaptive");
    let u = dir.path().join("uniform");
    run_ok(&[
        "run", "--mode", "adaptive", "--n", "3", "--theta", "0.5", "--max-dof", "3000", "--out",
        a.to_str().unwrap(), "--no-vtk",
    ]);
    let rows = read_history(&a.join("history.csv")).unwrap();
    assert!(rows.len() >= 2);
    assert!(rows.windows(2).all(|w| w[1].dof > w[0].dof));
    assert!(rows.iter().all(|r| r.dof <= 3000));
    assert!(!a.join("iter000.vtk").exists());

    // the same run from a config file
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "mode = \"uniform\"\nn = 3\nmax_iters = 2\nvtk = false\n").unwrap();
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", u.to_str().unwrap()]);
    assert_eq!(read_history(&u.join("history.csv")).unwrap().len(), 2);

    let table = dir.path().join("plot.csv");
    run_ok(&["compare", "--runs", a.to_str().unwrap(), u.to_str().unwrap(), "--out", table.to_str().unwrap()]);
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run,DoF,total,M_h"));
    assert_eq!(lines.clone().filter(|l| l.starts_with("adaptive,")).count(), rows.len());
    assert_eq!(lines.filter(|l| l.starts_with("uniform,")).count(), 2);
}

fn fails(args: &[&str], needle: &str) {
    let out = magafem().args(args).output().unwrap();
    assert!(!out.status.success(), "magafem {args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "stderr of {args:?} lacks `{needle}`:\n{err}");
}

#[test]
fn bad_input_gives_nonzero_exit() {
    fails(&["run", "--theta", "1.5"], "theta");
    fails(&["run", "--mode", "fast"], "unknown mode");
    fails(&["run", "--bogus"], "--bogus");
    fails(&["frobnicate"], "frobnicate");
    // the control box is not aligned with a 4-grid of the domain
    fails(&["run", "--n", "4", "--max-iters", "1"], "aligned");
    fails(&["run", "--config", "/nonexistent/run.toml"], "run.toml");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n = 3\nspeed = 2\n").unwrap();
    fails(&["run", "--config", cfg.to_str().unwrap()], ":2:");
    fails(&["compare", "--runs", "/nonexistent", "--out", dir.path().join("x.csv").to_str().unwrap()], "history.csv");
}

#[test]
fn violated_bound_gives_nonzero_exit() {
    // a deliberately wrong Maxwell constant breaks the guarantee
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wrong.toml");
    std::fs::write(&cfg, "n = 3\nmax_iters = 1\nc_m = 1e-6\nc_p_omega = 1e-6\n").unwrap();
    fails(&["run", "--config", cfg.to_str().unwrap()], "bound");
}
