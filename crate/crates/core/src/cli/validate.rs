//! `fkbridge validate`: the quantum-example acceptance suite with a
//! pass/fail table and deterministic artifacts.

use std::path::PathBuf;

use serde_json::json;

use super::config::{DensitySpec, RunConfig};
use crate::diffusion::{fit_gaussian_lower_bound, PathEnsemble};
use crate::error::Result;
use crate::io::{
    fmt_f64, write_bridge, write_drift, write_json, write_ladder, write_local_characteristics,
    write_paths, Manifest,
};
use crate::suite::{self, Row, SuiteOptions};

/// Forces the quantum example; every other setting comes from the config.
pub fn prepare(cfg: &mut RunConfig) {
    cfg.potential.name = "quantum".into();
    cfg.potential.value = None;
    cfg.boundary.rho0 = DensitySpec::Quantum;
    cfg.boundary.rho_t = DensitySpec::Quantum;
}

pub fn suite_options(cfg: &RunConfig) -> Result<SuiteOptions> {
    let d = &cfg.diagnostics;
    Ok(SuiteOptions {
        seed: cfg.seed,
        scenario: cfg.scenario_options()?,
        n_paths: cfg.simulate.n_paths,
        dt: cfg.simulate.dt,
        mc_paths: cfg.kernel.n_paths,
        mc_steps: cfg.kernel.n_steps,
        epsilon: d.epsilon,
        dt_ladder: d.dt_ladder.clone(),
        ladder_s: d.s,
        probes: d.probes.clone(),
        dynkin_epsilon: d.dynkin_epsilon,
        dynkin_set: [d.dynkin_lo, d.dynkin_hi],
        ..SuiteOptions::default()
    })
}

fn print_rows(rows: &[Row]) {
    for r in rows {
        println!(
            "{:<4} {:<4} {:>13.6e}  expected {:<10} tol {:<22} {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.measured,
            r.expected,
            r.tolerance,
            r.check
        );
    }
}

/// Initial and final states only, to keep the artifact small.
fn endpoints(ens: &PathEnsemble) -> PathEnsemble {
    let last = ens.time_mesh.len() - 1;
    PathEnsemble {
        time_mesh: vec![ens.time_mesh[0], ens.time_mesh[last]],
        states: ens.states.iter().map(|p| vec![p[0], p[last]]).collect(),
        ..ens.clone()
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<bool> {
    let dir = &cfg.output_dir;
    let o = suite_options(cfg)?;
    let mut rows: Vec<Row> = Vec::new();
    let mut artifacts: Vec<PathBuf> = Vec::new();
    let section = |r: Vec<Row>, rows: &mut Vec<Row>| {
        print_rows(&r);
        rows.extend(r);
    };

    section(suite::zero_potential(&o)?, &mut rows);
    section(suite::constant_potential(&o)?, &mut rows);
    section(suite::chapman_kolmogorov(&o)?, &mut rows);
    section(suite::time_reversal(&o)?, &mut rows);

    let sc = suite::quantum_scenario(&o)?;
    let sol = &sc.solution;
    let mid = sol.time_mesh.len() / 2;
    let fits = [
        ("f", fit_gaussian_lower_bound(&sc.grid, &sol.f_field[mid], sol.time_mesh[mid])?),
        ("g", fit_gaussian_lower_bound(&sc.grid, &sol.g_field[mid], sol.time_mesh[mid])?),
    ];
    for (name, fit) in &fits {
        println!(
            "lower bound {name}(y, {}) >= c1 exp(-c2 y^2): c1={:.6e} c2={:.6e}",
            fit.t, fit.c1, fit.c2
        );
    }
    artifacts.extend(write_bridge(
        dir,
        "bridge",
        sol,
        json!({
            "potential": sc.potential.name(),
            "kernel": sc.options.kernel,
            "lower_bounds": { "f": fits[0].1, "g": fits[1].1 },
        }),
    )?);
    let drift_path = dir.join("drift.csv");
    write_drift(&drift_path, &sc.drift)?;
    artifacts.push(drift_path);
    section(suite::bridge_rows(&sc)?, &mut rows);
    section(suite::drift_rows(&sc)?, &mut rows);

    let (r, lcs) = suite::local_characteristics(&sc, &o)?;
    for (k, lc) in lcs.iter().enumerate() {
        artifacts.extend(write_local_characteristics(dir, &format!("local_{k}"), lc)?);
    }
    section(r, &mut rows);

    let (r, dynkin, cont) = suite::generator_ladders(&sc, &o)?;
    for (name, ladder) in [("dynkin.csv", &dynkin), ("continuity.csv", &cont)] {
        let path = dir.join(name);
        write_ladder(&path, &o.dt_ladder, ladder)?;
        artifacts.push(path);
    }
    section(r, &mut rows);

    let (r, ens) = suite::path_rows(&sc, &o)?;
    artifacts.extend(write_paths(dir, "paths", &endpoints(&ens))?);
    section(r, &mut rows);
    section(suite::compatibility(&o), &mut rows);
    section(suite::reproducibility(&sc, &o)?, &mut rows);

    let report_csv = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&report_csv)?;
    w.write_record(["id", "check", "measured", "expected", "tolerance", "pass"])?;
    for r in &rows {
        w.write_record([
            r.id.as_str(),
            r.check.as_str(),
            &fmt_f64(r.measured),
            r.expected.as_str(),
            r.tolerance.as_str(),
            if r.pass { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    artifacts.push(report_csv);
    let report_json = dir.join("report.json");
    write_json(&report_json, &rows)?;
    artifacts.push(report_json);

    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} checks, {} failed", rows.len(), failed);
    super::finish(Manifest::new("validate", cfg.seed, cfg.echo()), dir, &artifacts)?;
    Ok(failed == 0)
}
