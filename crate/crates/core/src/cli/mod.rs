//! Command-line front end: `kernel | bridge | simulate | validate`.
//!
//! Exit codes: 0 success, 1 numeric or consistency failure (including a
//! failed validation row), 2 configuration error.

pub mod config;
pub mod validate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bridge::marginal_residual;
use crate::bridge::BoundaryData;
use crate::diffusion::{
    dynkin_diagnostic, estimate_local_characteristics, sample_paths, stochastic_continuity_diagnostic,
    SamplerOptions,
};
use crate::error::{FkError, Result};
use crate::io::{
    write_bridge, write_drift, write_json, write_kernel, write_ladder, write_local_characteristics,
    write_paths, Manifest, VERSION,
};
use crate::kernels::{
    chapman_kolmogorov_residual, kernel_matrix, time_reversal_residual, Potential,
};
use crate::numerics::{make_uniform_grid, RngStream};
use crate::scenario::BridgeScenario;

pub use config::{DensitySpec, RunConfig, Stage};

#[derive(Debug, Parser)]
#[command(name = "fkbridge", version = VERSION, about = "Feynman-Kac kernels, Schrödinger bridges and their diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one kernel matrix and optionally check it.
    Kernel(KernelArgs),
    /// Solve the Schrödinger system and write the factor fields.
    Bridge(BridgeArgs),
    /// Sample paths of the bridge diffusion and write diagnostic ladders.
    Simulate(SimulateArgs),
    /// Run the quantum-example acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    /// Free Gaussian wave packet: quantum potential, closed-form marginals.
    Quantum,
}

/// Overrides shared by every subcommand; each replaces the matching field
/// of the TOML configuration.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for kernel assembly and path sampling.
    #[arg(long, env = "FKBRIDGE_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub mesh_step: Option<f64>,
    /// zero | constant | quantum
    #[arg(long)]
    pub potential: Option<String>,
    /// Value of a constant potential.
    #[arg(long)]
    pub potential_value: Option<f64>,
    /// heat | parametrix | monte_carlo
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub n_terms: Option<usize>,
    #[arg(long)]
    pub quad_steps: Option<usize>,
    /// Longest parametrix sub-interval.
    #[arg(long)]
    pub split: Option<f64>,
    /// Monte Carlo paths per kernel entry.
    #[arg(long)]
    pub mc_paths: Option<usize>,
    /// Monte Carlo bridge steps.
    #[arg(long)]
    pub mc_steps: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Compose k(s,r) k(r,t) at the midpoint r and print the residual
    /// against k(s,t).
    #[arg(long)]
    pub check_ck: bool,
    /// Compare with the kernel of the time-reversed potential on [0, T].
    #[arg(long)]
    pub check_reversal: bool,
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub example: Option<Example>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub example: Option<Example>,
    /// Number of sample paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Euler-Maruyama step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Warn instead of failing when many paths touch the grid boundary.
    #[arg(long)]
    pub lax: bool,
    /// Skip the per-path state table.
    #[arg(long)]
    pub no_path_file: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.out, cfg.output_dir);
        set!(self.seed, cfg.seed);
        set!(self.grid_lo, cfg.grid.lo);
        set!(self.grid_hi, cfg.grid.hi);
        set!(self.grid_n, cfg.grid.n);
        set!(self.horizon, cfg.time.horizon);
        set!(self.mesh_step, cfg.time.mesh_step);
        set!(self.potential, cfg.potential.name);
        set!(self.method, cfg.kernel.method);
        set!(self.n_terms, cfg.kernel.n_terms);
        set!(self.quad_steps, cfg.kernel.quad_steps);
        set!(self.split, cfg.kernel.max_split);
        set!(self.mc_paths, cfg.kernel.n_paths);
        set!(self.mc_steps, cfg.kernel.n_steps);
        set!(self.tol, cfg.solver.tol);
        set!(self.max_iter, cfg.solver.max_iter);
        if self.potential_value.is_some() {
            cfg.potential.value = self.potential_value;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
    }

    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }
}

fn apply_example(cfg: &mut RunConfig, example: Option<Example>) {
    if let Some(Example::Quantum) = example {
        cfg.potential.name = "quantum".into();
        cfg.potential.value = None;
        cfg.boundary.rho0 = DensitySpec::Quantum;
        cfg.boundary.rho_t = DensitySpec::Quantum;
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `Ok(false)` means it ran but a check failed.
pub fn execute(cli: Cli) -> Result<bool> {
    let (mut cfg, name) = match &cli.command {
        Command::Kernel(a) => {
            let mut cfg = a.common.load()?;
            if let Some(s) = a.s {
                cfg.time.s = s;
            }
            if let Some(t) = a.t {
                cfg.time.t = t;
            }
            (cfg, "kernel")
        }
        Command::Bridge(a) => {
            let mut cfg = a.common.load()?;
            apply_example(&mut cfg, a.example);
            (cfg, "bridge")
        }
        Command::Simulate(a) => {
            let mut cfg = a.common.load()?;
            apply_example(&mut cfg, a.example);
            if let Some(p) = a.paths {
                cfg.simulate.n_paths = p;
            }
            if let Some(dt) = a.dt {
                cfg.simulate.dt = dt;
            }
            if a.lax {
                cfg.simulate.strict = false;
            }
            if a.no_path_file {
                cfg.simulate.write_paths = false;
            }
            (cfg, "simulate")
        }
        Command::Validate(a) => (a.common.load()?, "validate"),
    };
    let stage = match name {
        "kernel" => Stage::Kernel,
        "bridge" => Stage::Bridge,
        _ => Stage::Simulate,
    };
    if name == "validate" {
        validate::prepare(&mut cfg);
    }
    cfg.validate_for(stage)?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| FkError::config("threads", e.to_string()))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    pool.install(|| match &cli.command {
        Command::Kernel(a) => cmd_kernel(&cfg, a),
        Command::Bridge(_) => cmd_bridge(&cfg),
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Validate(_) => validate::cmd_validate(&cfg),
    })
}

fn finish(mut manifest: Manifest, dir: &Path, artifacts: &[PathBuf]) -> Result<()> {
    manifest.add(dir, artifacts);
    let path = manifest.write(dir)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn cmd_kernel(cfg: &RunConfig, args: &KernelArgs) -> Result<bool> {
    let dir = &cfg.output_dir;
    let pot = cfg.potential_spec()?.build();
    let spec = cfg.kernel_spec()?;
    let grid = make_uniform_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.n)?;
    let (s, t) = (cfg.time.s, cfg.time.t);
    let k = kernel_matrix(pot.as_ref(), &grid, s, t, &spec)?;
    let mut artifacts = write_kernel(dir, "kernel", &k)?;
    println!(
        "kernel {} / {} on {} points, s={s}, t={t}",
        pot.name(),
        spec.method(),
        grid.n()
    );

    let mut checks = serde_json::Map::new();
    if args.check_ck {
        let r = 0.5 * (s + t);
        let a = kernel_matrix(pot.as_ref(), &grid, s, r, &spec)?;
        let b = kernel_matrix(pot.as_ref(), &grid, r, t, &spec)?;
        let res = chapman_kolmogorov_residual(&a, &b, &k)?;
        println!("chapman-kolmogorov residual: {res:.6e}");
        checks.insert("chapman_kolmogorov_residual".into(), json!(res));
    }
    if args.check_reversal {
        let rep = time_reversal_residual(Arc::clone(&pot), &grid, cfg.time.horizon, &spec)?;
        println!("time-reversal residual: {:.6e}", rep.max_relative);
        checks.insert("time_reversal_residual".into(), json!(rep.max_relative));
        if let Some(z) = rep.max_z {
            println!("time-reversal max z-score: {z:.6e}");
            checks.insert("time_reversal_max_z".into(), json!(z));
        }
    }
    if !checks.is_empty() {
        let path = dir.join("checks.json");
        write_json(&path, &checks)?;
        artifacts.push(path);
    }
    finish(Manifest::new("kernel", cfg.seed, cfg.echo()), dir, &artifacts)?;
    Ok(true)
}

fn build_scenario(cfg: &RunConfig) -> Result<BridgeScenario> {
    let grid = make_uniform_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.n)?;
    let rho0 = cfg.density(&cfg.boundary.rho0, &grid, 0.0)?;
    let rho_t = cfg.density(&cfg.boundary.rho_t, &grid, cfg.time.horizon)?;
    // validates positivity before any kernel is assembled
    BoundaryData::new(&grid, rho0.clone(), rho_t.clone(), cfg.time.horizon)?;
    let pot: Arc<dyn Potential> = cfg.potential_spec()?.build();
    let lookup = |values: Vec<f64>| {
        let g = grid.clone();
        move |x: f64| values[g.nearest_index(x)]
    };
    BridgeScenario::build(cfg.scenario_options()?, pot, &lookup(rho0), &lookup(rho_t))
}

fn cmd_bridge(cfg: &RunConfig) -> Result<bool> {
    let dir = &cfg.output_dir;
    let sc = build_scenario(cfg)?;
    let sol = &sc.solution;
    let data = BoundaryData::new(&sc.grid, sol.density(0), sol.density(sol.time_mesh.len() - 1), sol.horizon)?;
    println!(
        "marginal residual: {:.6e} after {} iterations",
        sol.final_residual, sol.iterations
    );
    // the boundary data as solved, re-checked against the stored fields
    let recheck = marginal_residual(&sc.full_kernel, &data, &sol.f0, &sol.g_t)?;
    let mut artifacts = write_bridge(
        dir,
        "bridge",
        sol,
        json!({
            "potential": sc.potential.name(),
            "kernel": sc.options.kernel,
            "marginal_residual": sol.final_residual,
            "field_marginal_residual": recheck,
        }),
    )?;
    let drift_path = dir.join("drift.csv");
    write_drift(&drift_path, &sc.drift)?;
    artifacts.push(drift_path);
    finish(Manifest::new("bridge", cfg.seed, cfg.echo()), dir, &artifacts)?;
    Ok(true)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<bool> {
    let dir = &cfg.output_dir;
    let sc = build_scenario(cfg)?;
    let sol = &sc.solution;
    let sim = &cfg.simulate;
    let ens = sample_paths(
        &sc.drift,
        &sol.density(0),
        sim.n_paths,
        sim.dt,
        RngStream::new(cfg.seed, 1),
        SamplerOptions { strict: sim.strict },
    )?;
    for w in &ens.warnings {
        eprintln!("warning: {w}");
    }
    let mut artifacts = Vec::new();
    if sim.write_paths {
        artifacts.extend(write_paths(dir, "paths", &ens)?);
    }
    let last = sol.time_mesh.len() - 1;
    let ks = crate::suite::ks_against_grid_density(&sc.grid, &sol.density(last), &ens.final_states())?;
    println!(
        "{} paths, dt={}, boundary hits {}, KS distance at T vs bridge marginal {ks:.4e}",
        ens.n_paths, ens.dt, ens.boundary_hits
    );

    let d = &cfg.diagnostics;
    for (k, [x0, s]) in d.probes.iter().enumerate() {
        let lc = estimate_local_characteristics(&sc.transitions, *x0, *s, d.epsilon, &d.dt_ladder)?;
        artifacts.extend(write_local_characteristics(dir, &format!("local_{k}"), &lc)?);
    }
    let dynkin = dynkin_diagnostic(&sc.transitions, d.s, d.dynkin_lo, d.dynkin_hi, d.dynkin_epsilon, &d.dt_ladder)?;
    let path = dir.join("dynkin.csv");
    write_ladder(&path, &d.dt_ladder, &dynkin)?;
    artifacts.push(path);
    let k = sol
        .mesh_index(d.s)
        .ok_or_else(|| FkError::config("diagnostics.s", format!("{} is not a time-mesh point", d.s)))?;
    let rho_s = sol.density(k);
    let cont = stochastic_continuity_diagnostic(&sc.transitions, d.s, &rho_s, d.epsilon, &d.dt_ladder)?;
    let path = dir.join("continuity.csv");
    write_ladder(&path, &d.dt_ladder, &cont)?;
    artifacts.push(path);

    let summary = dir.join("simulate_summary.json");
    write_json(
        &summary,
        &json!({
            "n_paths": ens.n_paths,
            "dt": ens.dt,
            "seed": cfg.seed,
            "boundary_hits": ens.boundary_hits,
            "ks_final": ks,
            "drift": ens.drift_provenance,
        }),
    )?;
    artifacts.push(summary);
    finish(Manifest::new("simulate", cfg.seed, cfg.echo()), dir, &artifacts)?;
    Ok(true)
}
