//! Run configuration: TOML file, then command-line overrides, then
//! validation of every field before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{DEFAULT_DT_LADDER, DEFAULT_EPSILON};
use crate::error::{FkError, Result};
use crate::example::rho_exact;
use crate::io::read_density_csv;
use crate::kernels::{
    KernelMethod, KernelSpec, MonteCarloOptions, ParametrixOptions, PotentialSpec,
};
use crate::numerics::{Grid, GridSpec};
use crate::scenario::{uniform_mesh, ScenarioOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub potential: PotentialConfig,
    pub kernel: KernelConfig,
    pub boundary: BoundaryConfig,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("fkbridge-out"),
            threads: None,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            potential: PotentialConfig::default(),
            kernel: KernelConfig::default(),
            boundary: BoundaryConfig::default(),
            solver: SolverConfig::default(),
            simulate: SimulateConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lo: -8.0,
            hi: 8.0,
            n: 401,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Bridge horizon `T`.
    pub horizon: f64,
    /// Spacing of the mesh carrying fields and drift.
    pub mesh_step: f64,
    /// Time pair of the `kernel` command.
    pub s: f64,
    pub t: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            mesh_step: 0.0625,
            s: 0.0,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub name: String,
    pub value: Option<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            name: "quantum".into(),
            value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub method: String,
    pub n_terms: usize,
    pub quad_steps: usize,
    pub max_split: f64,
    pub series_budget: f64,
    pub n_paths: usize,
    pub n_steps: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        let p = ParametrixOptions::default();
        let m = MonteCarloOptions::default();
        Self {
            method: "parametrix".into(),
            n_terms: p.n_terms,
            quad_steps: p.quad_steps,
            max_split: p.max_split,
            series_budget: p.series_budget,
            n_paths: m.n_paths,
            n_steps: m.n_steps,
        }
    }
}

/// A boundary density: a closed form or a two-column CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// The wave-packet density at the given end (`0` or the horizon).
    Quantum,
    Gaussian { mean: f64, var: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub rho0: DensitySpec,
    pub rho_t: DensitySpec,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            rho0: DensitySpec::Quantum,
            rho_t: DensitySpec::Quantum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub strict: bool,
    /// Write every recorded state (`path_id,t,x`); large for many paths.
    pub write_paths: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dt: 1e-3,
            strict: true,
            write_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub epsilon: f64,
    pub dt_ladder: Vec<f64>,
    /// Start time of the Dynkin and stochastic-continuity ladders.
    pub s: f64,
    /// `(x0, s)` start points of the local-characteristic ladders.
    pub probes: Vec<[f64; 2]>,
    pub dynkin_epsilon: f64,
    pub dynkin_lo: f64,
    pub dynkin_hi: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            dt_ladder: DEFAULT_DT_LADDER.to_vec(),
            s: 0.25,
            probes: vec![[0.0, 0.25], [1.0, 0.25], [-1.0, 0.5]],
            dynkin_epsilon: 1.0,
            dynkin_lo: -2.0,
            dynkin_hi: 2.0,
        }
    }
}

/// How much of the configuration a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// grid, time, potential, kernel
    Kernel,
    /// plus boundary and solver
    Bridge,
    /// plus simulate and diagnostics
    Simulate,
}

fn bad(field: &str, message: impl Into<String>) -> FkError {
    FkError::config(field, message)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Reads a TOML file; unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad("config", e.message().to_string() + &span_hint(&e)))
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        self.validate_for(Stage::Simulate)
    }

    /// Checks the fields read by commands up to `stage`.
    pub fn validate_for(&self, stage: Stage) -> Result<()> {
        let g = &self.grid;
        if !(g.lo.is_finite() && g.hi.is_finite()) {
            return Err(bad("grid.lo", "grid bounds must be finite"));
        }
        if !(g.hi > g.lo) {
            return Err(bad("grid.hi", format!("must exceed grid.lo ({} <= {})", g.hi, g.lo)));
        }
        if g.n < 3 {
            return Err(bad("grid.n", format!("need at least 3 grid points, got {}", g.n)));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(bad("threads", "must be at least 1"));
            }
        }

        let tm = &self.time;
        positive("time.horizon", tm.horizon)?;
        positive("time.mesh_step", tm.mesh_step)?;
        uniform_mesh(tm.horizon, tm.mesh_step)?;
        if !(tm.s.is_finite() && tm.s >= 0.0) {
            return Err(bad("time.s", format!("must be finite and nonnegative, got {}", tm.s)));
        }
        if !(tm.t > tm.s && tm.t.is_finite()) {
            return Err(bad("time.t", format!("must exceed time.s ({} <= {})", tm.t, tm.s)));
        }

        self.potential_spec()?;
        self.kernel_spec()?;
        if stage == Stage::Kernel {
            return Ok(());
        }

        for (field, spec) in [("boundary.rho0", &self.boundary.rho0), ("boundary.rho_t", &self.boundary.rho_t)] {
            match spec {
                DensitySpec::Quantum => {}
                DensitySpec::Gaussian { mean, var } => {
                    if !mean.is_finite() {
                        return Err(bad(&format!("{field}.mean"), "must be finite"));
                    }
                    positive(&format!("{field}.var"), *var)?;
                }
                DensitySpec::Csv { path } => {
                    if !path.is_file() {
                        return Err(bad(&format!("{field}.path"), format!("{} is not a file", path.display())));
                    }
                }
            }
        }

        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be at least 1"));
        }
        if stage == Stage::Bridge {
            return Ok(());
        }

        let sim = &self.simulate;
        if sim.n_paths == 0 {
            return Err(bad("simulate.n_paths", "must be at least 1"));
        }
        positive("simulate.dt", sim.dt)?;
        if sim.dt > tm.mesh_step * (1.0 + 1e-9) {
            return Err(bad(
                "simulate.dt",
                format!("must not exceed time.mesh_step ({} > {})", sim.dt, tm.mesh_step),
            ));
        }
        let steps = tm.horizon / sim.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(bad("simulate.dt", format!("must divide the horizon {}", tm.horizon)));
        }

        let d = &self.diagnostics;
        positive("diagnostics.epsilon", d.epsilon)?;
        positive("diagnostics.dynkin_epsilon", d.dynkin_epsilon)?;
        if d.dt_ladder.is_empty() {
            return Err(bad("diagnostics.dt_ladder", "must not be empty"));
        }
        if d.dt_ladder.iter().any(|&v| !(v > 0.0)) || d.dt_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(bad("diagnostics.dt_ladder", "must be positive and strictly decreasing"));
        }
        let longest = d.dt_ladder[0];
        if !(d.s >= 0.0 && d.s + longest <= tm.horizon) {
            return Err(bad("diagnostics.s", format!("s + {longest} must lie in [0, {}]", tm.horizon)));
        }
        for (k, [x0, s]) in d.probes.iter().enumerate() {
            if !(*x0 >= g.lo && *x0 <= g.hi) {
                return Err(bad(&format!("diagnostics.probes[{k}]"), format!("x0={x0} is outside the grid")));
            }
            if !(*s >= 0.0 && s + longest <= tm.horizon) {
                return Err(bad(&format!("diagnostics.probes[{k}]"), format!("s={s} leaves no room for dt={longest}")));
            }
        }
        if !(d.dynkin_lo <= d.dynkin_hi && d.dynkin_lo >= g.lo && d.dynkin_hi <= g.hi) {
            return Err(bad("diagnostics.dynkin_lo", "the compact set must lie inside the grid"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            lo: self.grid.lo,
            hi: self.grid.hi,
            n: self.grid.n,
        }
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        PotentialSpec::parse(&self.potential.name, self.potential.value)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let method: KernelMethod = k.method.parse()?;
        let spec = match method {
            KernelMethod::Heat => KernelSpec::Heat,
            KernelMethod::Parametrix => {
                let opts = ParametrixOptions {
                    n_terms: k.n_terms,
                    max_split: k.max_split,
                    quad_steps: k.quad_steps,
                    series_budget: k.series_budget,
                };
                opts.validate()?;
                KernelSpec::Parametrix(opts)
            }
            KernelMethod::MonteCarlo => {
                let opts = MonteCarloOptions {
                    n_paths: k.n_paths,
                    n_steps: k.n_steps,
                    seed: self.seed,
                    stream_id: 0,
                };
                opts.validate()?;
                KernelSpec::MonteCarlo(opts)
            }
        };
        Ok(spec)
    }

    pub fn scenario_options(&self) -> Result<ScenarioOptions> {
        Ok(ScenarioOptions {
            grid: self.grid_spec(),
            horizon: self.time.horizon,
            mesh_step: self.time.mesh_step,
            kernel: self.kernel_spec()?,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        })
    }

    /// Samples a boundary density on the grid; `at` is `0` or the horizon.
    pub fn density(&self, spec: &DensitySpec, grid: &Grid, at: f64) -> Result<Vec<f64>> {
        Ok(match spec {
            DensitySpec::Quantum => grid.points().iter().map(|&x| rho_exact(x, at)).collect(),
            DensitySpec::Gaussian { mean, var } => grid
                .points()
                .iter()
                .map(|&x| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
                .collect(),
            DensitySpec::Csv { path } => read_density_csv(path, grid)?,
        })
    }

    /// The configuration as JSON, echoed into manifests.
    /// The output directory is left out so that artifacts do not depend
    /// on where they are written.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => format!(" (at byte {})", span.start),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: FkError) -> String {
        match err {
            FkError::Config { field, .. } => field,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_overrides_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            [grid]
            n = 201
            [kernel]
            method = "heat"
            [boundary.rho0]
            kind = "gaussian"
            mean = 0.5
            var = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid.n, 201);
        assert_eq!(cfg.grid.lo, -8.0);
        assert_eq!(cfg.kernel_spec().unwrap(), KernelSpec::Heat);
        assert_eq!(cfg.boundary.rho0, DensitySpec::Gaussian { mean: 0.5, var: 2.0 });
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = RunConfig::default();
        cfg.grid.n = 1;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "grid.n");

        let mut cfg = RunConfig::default();
        cfg.time.mesh_step = 0.3;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "time.mesh_step");

        let mut cfg = RunConfig::default();
        cfg.kernel.method = "magic".into();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "kernel.method");

        let mut cfg = RunConfig::default();
        cfg.potential.name = "constant".into();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "potential.value");

        let mut cfg = RunConfig::default();
        cfg.simulate.dt = 0.1;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "simulate.dt");

        let mut cfg = RunConfig::default();
        cfg.diagnostics.dt_ladder = vec![0.01, 0.1];
        assert_eq!(field_of(cfg.validate().unwrap_err()), "diagnostics.dt_ladder");

        let mut cfg = RunConfig::default();
        cfg.boundary.rho_t = DensitySpec::Csv { path: "/no/such/file.csv".into() };
        assert_eq!(field_of(cfg.validate().unwrap_err()), "boundary.rho_t.path");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[grid]\npoints = 5\n").unwrap_err();
        assert_eq!(field_of(err), "config");
    }

    #[test]
    fn stages_check_only_what_they_read() {
        let mut cfg = RunConfig::default();
        cfg.grid.lo = -1.0;
        cfg.grid.hi = 1.0;
        cfg.validate_for(Stage::Kernel).unwrap();
        cfg.validate_for(Stage::Bridge).unwrap();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "diagnostics.dynkin_lo");
    }

    #[test]
    fn echo_omits_the_output_directory() {
        let mut cfg = RunConfig::default();
        let a = cfg.echo();
        cfg.output_dir = "elsewhere".into();
        assert_eq!(a, cfg.echo());
        assert!(a.get("output_dir").is_none());
    }
}
