//! The free Gaussian wave packet as a bridge problem: boundary densities,
//! kernels, solution, fields and drift built in one place so that the CLI,
//! the FFI layer and the tests share exactly the same construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bridge::{
    propagate_fields, solve_schroedinger_system, BoundaryData, BridgeSolution, TransitionBuilder,
};
use crate::diffusion::{drift_field, CachedTransitions, DriftField};
use crate::error::{FkError, Result};
use crate::example::rho_exact;
use crate::kernels::{
    compose_chain, kernel_chain, KernelMatrix, KernelSpec, ParametrixOptions, Potential,
    QuantumPotential,
};
use crate::numerics::{make_uniform_grid, Grid, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub grid: GridSpec,
    pub horizon: f64,
    /// Spacing of the time mesh on which fields and drift are stored.
    pub mesh_step: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                lo: -8.0,
                hi: 8.0,
                n: 401,
            },
            horizon: 1.0,
            mesh_step: 0.0625,
            kernel: KernelSpec::Parametrix(ParametrixOptions::default()),
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Uniform mesh `0, step, ..., horizon`; the step must divide the horizon.
pub fn uniform_mesh(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && horizon > 0.0) {
        return Err(FkError::config("time.mesh_step", "mesh step and horizon must be positive"));
    }
    let n = (horizon / step).round() as usize;
    if n == 0 || (n as f64 * step - horizon).abs() > 1e-9 * horizon {
        return Err(FkError::config(
            "time.mesh_step",
            format!("mesh step {step} does not divide the horizon {horizon}"),
        ));
    }
    Ok((0..=n)
        .map(|k| if k == n { horizon } else { k as f64 * step })
        .collect())
}

/// Everything derived from one bridge solve.
pub struct BridgeScenario {
    pub options: ScenarioOptions,
    pub grid: Grid,
    pub potential: Arc<dyn Potential>,
    pub chain: Vec<KernelMatrix>,
    pub full_kernel: KernelMatrix,
    pub solution: BridgeSolution,
    pub drift: DriftField,
    pub transitions: CachedTransitions,
}

impl BridgeScenario {
    /// Solves the bridge between `rho_0` and `rho_T` for `potential`.
    pub fn build(
        options: ScenarioOptions,
        potential: Arc<dyn Potential>,
        rho0: &dyn Fn(f64) -> f64,
        rho_t: &dyn Fn(f64) -> f64,
    ) -> Result<Self> {
        let grid = make_uniform_grid(options.grid.lo, options.grid.hi, options.grid.n)?;
        let mesh = uniform_mesh(options.horizon, options.mesh_step)?;
        let chain = kernel_chain(potential.as_ref(), &grid, &mesh, &options.kernel)?;
        let full_kernel = compose_chain(&chain)?;
        let data = BoundaryData::from_fns(&grid, rho0, rho_t, options.horizon)?;
        let solution = solve_schroedinger_system(&full_kernel, &data, options.tol, options.max_iter)?;
        let solution = propagate_fields(&solution, &chain)?;
        let mut drift = drift_field(&solution)?;
        drift.provenance = format!(
            "bridge:{}/{}",
            potential.name(),
            options.kernel.method().as_str()
        );
        let transitions = CachedTransitions::new(TransitionBuilder::new(
            Arc::clone(&potential),
            options.kernel,
            solution.clone(),
        )?);
        Ok(Self {
            options,
            grid,
            potential,
            chain,
            full_kernel,
            solution,
            drift,
            transitions,
        })
    }

    /// The quantum example: `rho(., 0)` and `rho(., T)` from the closed form
    /// with the potential `c = 2 Laplacian(sqrt rho) / sqrt rho`.
    pub fn quantum(options: ScenarioOptions) -> Result<Self> {
        let horizon = options.horizon;
        Self::build(
            options,
            Arc::new(QuantumPotential),
            &|x| rho_exact(x, 0.0),
            &move |x| rho_exact(x, horizon),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_must_divide_horizon() {
        assert_eq!(uniform_mesh(1.0, 0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(matches!(uniform_mesh(1.0, 0.3), Err(FkError::Config { .. })));
        assert!(uniform_mesh(1.0, 0.0).is_err());
    }

    #[test]
    fn small_quantum_scenario_runs() {
        let opts = ScenarioOptions {
            grid: GridSpec {
                lo: -6.0,
                hi: 6.0,
                n: 61,
            },
            mesh_step: 0.25,
            ..Default::default()
        };
        let sc = BridgeScenario::quantum(opts).unwrap();
        assert_eq!(sc.solution.time_mesh.len(), 5);
        assert!(sc.solution.final_residual < 1e-10);
        assert!(sc.drift.provenance.starts_with("bridge:quantum/"));
    }
}
