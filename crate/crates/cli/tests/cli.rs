use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heteroclinic"))
}

fn template() -> String {
    let out = bin().arg("emit-template").output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

/// Template with a smaller window, after applying `edits` as (from, to) replacements.
fn config(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = template()
        .replace("r = 50.0", "r = 20.0")
        .replace("rhos = [10.0, 20.0, 40.0]", "rhos = [4.0, 8.0, 16.0]");
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let out = dir.path().join("run");
    let o = run(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in ["profile.csv", "ledger.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("lo,hi,kinetic,potential,total,"));
    assert_eq!(ledger.lines().count(), 2);
    assert!(stdout(&o).contains("PASS converged"));
}

#[test]
fn repeated_solves_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &[(
            "family = \"fractional_laplacian\"",
            "family = \"piecewise_power\"\ntheta = 2.0\nrho = 1.0",
        )],
    );
    let mut profiles = Vec::new();
    for (i, workers) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = bin()
            .args(["solve", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        profiles.push(std::fs::read(out.join("profile.csv")).unwrap());
    }
    assert_eq!(profiles[0], profiles[1]);
    assert_eq!(profiles[0], profiles[2]);
}

#[test]
fn non_convergence_exits_2_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("max_iter = 50000", "max_iter = 3")]);
    let out = dir.path().join("run");
    let o = run(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("profile.csv").is_file());
    assert!(stdout(&o).contains("FAIL converged"));
}

#[test]
fn invalid_configs_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config(dir.path(), &[("h = 0.1", "h = 0.3")]);
    let o = run(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divide"));

    let cfg = config(dir.path(), &[("tau = 2.0", "tau = 0.5")]);
    assert_eq!(run(&["asymptotics"], &cfg, &out).status.code(), Some(64));

    let missing = bin().arg("solve").output().unwrap();
    assert_eq!(missing.status.code(), Some(64));
    let unknown = bin().args(["solve", "--bogus"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(64));
}

#[test]
fn kernel_check_separates_admissible_and_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let o = run(&["kernel-check", "--seed", "5"], &cfg, &dir.path().join("fl"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for k in ["PASS K1", "PASS K2", "PASS K4", "PASS min/max inequality"] {
        assert!(stdout(&o).contains(k), "{k}");
    }

    let cfg = config(
        dir.path(),
        &[(
            "family = \"fractional_laplacian\"",
            "family = \"truncated_indicator\"\nr0 = 1.0",
        )],
    );
    let out = dir.path().join("ti");
    let o = run(&["kernel-check"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains("PASS K1") && text.contains("PASS K2"));
    assert!(text.contains("FAIL K4: sup ratio is infinite"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("K4"));
    let k4 = std::fs::read_to_string(out.join("k4.csv")).unwrap();
    assert!(k4.starts_with("sigma,sup_ratio,value\n"));
    assert!(k4.contains("inf"));
}

#[test]
fn barrier_certifies_for_the_quadratic_well() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let out = dir.path().join("run");
    let o = run(&["barrier"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rows = std::fs::read_to_string(out.join("barrier.csv")).unwrap();
    assert!(rows.starts_with("x,w,lw,bound,margin\n"));
    assert!(rows.lines().count() > 4096);
    assert!(out.join("barrier_constants.csv").is_file());
}

#[test]
fn analysis_subcommands_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("sides = [\"right\"]", "sides = [\"left\", \"right\"]")]);
    let o = run(&["decay"], &cfg, &dir.path().join("decay"));
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("left tail exponent") && text.contains("right derivative exponent"));
    assert!(text.contains("PASS convexity"));
    let decay = std::fs::read_to_string(dir.path().join("decay/decay.csv")).unwrap();
    assert_eq!(decay.lines().count(), 5);

    let o = run(&["energy-growth"], &cfg, &dir.path().join("energy"));
    assert!(matches!(o.status.code(), Some(0 | 3)));
    let rows = std::fs::read_to_string(dir.path().join("energy/energy.csv")).unwrap();
    assert!(rows.starts_with("rho,energy,psi,ratio\n"));

    let o = run(&["asymptotics"], &cfg, &dir.path().join("asym"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS pinch"));
}
