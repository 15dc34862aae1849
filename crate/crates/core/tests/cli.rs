use std::path::Path;
use std::process::{Command, Output};

fn fkbridge(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkbridge"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FKBRIDGE_THREADS")
        .output()
        .expect("run fkbridge")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses the number after `label:` on the first matching line.
fn value_after(text: &str, label: &str) -> f64 {
    let line = text
        .lines()
        .find(|l| l.starts_with(label))
        .unwrap_or_else(|| panic!("no `{label}` in:\n{text}"));
    line[label.len()..]
        .trim_start_matches(':')
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn zero_potential_parametrix_and_heat_write_identical_values() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, h) = (tmp.path().join("p"), tmp.path().join("h"));
    let a = fkbridge(&["kernel", "--potential", "zero", "--method", "parametrix"], &p);
    let b = fkbridge(&["kernel", "--potential", "zero", "--method", "heat"], &h);
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    let va = std::fs::read(p.join("kernel.csv")).unwrap();
    let vb = std::fs::read(h.join("kernel.csv")).unwrap();
    assert!(!va.is_empty());
    assert!(va == vb, "value files differ");
    let header = String::from_utf8_lossy(&va[..40]).into_owned();
    assert!(header.starts_with("y_index,x_index,s,t,value\n"), "{header}");
    assert!(p.join("kernel.json").is_file() && p.join("manifest.json").is_file());
}

#[test]
fn heat_chapman_kolmogorov_check_is_printed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fkbridge(
        &["kernel", "--method", "heat", "--grid-lo", "-10", "--grid-hi", "10", "--grid-n", "401", "--check-ck", "--check-reversal"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(value_after(&text, "chapman-kolmogorov residual") < 1e-6, "{text}");
    assert_eq!(value_after(&text, "time-reversal residual"), 0.0, "{text}");
    let checks: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("checks.json")).unwrap()).unwrap();
    assert!(checks["chapman_kolmogorov_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn monte_carlo_kernel_writes_stderr_column() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fkbridge(
        &["kernel", "--method", "monte_carlo", "--grid-lo", "-1", "--grid-hi", "1", "--grid-n", "3", "--mc-paths", "500", "--mc-steps", "16", "--seed", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("kernel.csv")).unwrap();
    assert!(csv.starts_with("y_index,x_index,s,t,value,stderr\n"));
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn invalid_grid_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fkbridge(&["kernel", "--grid-n", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.n"), "{}", stderr(&o));
}

#[test]
fn config_file_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[time]\nmesh_step = 0.3\n").unwrap();
    let o = fkbridge(&["bridge", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("time.mesh_step"), "{}", stderr(&o));

    std::fs::write(&cfg, "[grid]\nsize = 3\n").unwrap();
    let o = fkbridge(&["bridge", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config"), "{}", stderr(&o));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[grid]\nn = 1\n[kernel]\nmethod = \"heat\"\n").unwrap();
    let o = fkbridge(&["kernel", "--config", cfg.to_str().unwrap(), "--grid-n", "21"], &tmp.path().join("o"));
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config"]["grid"]["n"], 21);
    assert!(m["version"].as_str().unwrap().starts_with('v'));
    assert!(m["artifacts"].as_array().unwrap().iter().any(|a| a == "kernel.csv"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fkbridge"))
        .args(["kernel", "--method", "heat", "--grid-n", "11", "--out"])
        .arg(tmp.path())
        .env("FKBRIDGE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threads"), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_fkbridge"))
        .args(["kernel", "--method", "heat", "--grid-n", "11", "--out"])
        .arg(tmp.path())
        .env("FKBRIDGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn quantum_bridge_reaches_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fkbridge(&["bridge", "--example", "quantum"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(value_after(&text, "marginal residual") < 1e-10, "{text}");
    let fields = std::fs::read_to_string(tmp.path().join("bridge_fields.csv")).unwrap();
    assert!(fields.starts_with("t,x,f,g,rho\n"));
    assert!(tmp.path().join("bridge.json").is_file());
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let o = fkbridge(&["simulate", "--example", "quantum", "--paths", "100000", "--seed", "7"], &dir);
        assert!(o.status.success(), "{}", stderr(&o));
        dir
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "paths.csv"));
    for n in names {
        let x = std::fs::read(a.join(&n)).unwrap();
        let y = std::fs::read(b.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("paths.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
}
