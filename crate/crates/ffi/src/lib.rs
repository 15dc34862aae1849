//! C ABI over `fkbridge`.
//!
//! Objects are opaque handles created by `fk_*_new` and released by the
//! matching `fk_*_free`. Every fallible call returns an [`FkStatus`]; on
//! failure [`fk_last_error`] gives a message for the calling thread.
//! Array outputs are copied into caller buffers whose length is passed in
//! and checked.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use fkbridge::diffusion::{sample_paths, SamplerOptions};
use fkbridge::kernels::{
    chapman_kolmogorov_residual, kernel_matrix, KernelMatrix, KernelSpec, MonteCarloOptions,
    ParametrixOptions, Potential, PotentialSpec,
};
use fkbridge::numerics::{make_uniform_grid, Grid, GridSpec, RngStream};
use fkbridge::scenario::{BridgeScenario, ScenarioOptions};
use fkbridge::FkError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkStatus {
    Ok = 0,
    /// Argument outside the domain of the operation.
    Domain = 1,
    /// Non-finite or non-positive value where one was required.
    Numeric = 2,
    /// An iteration did not reach its tolerance.
    Convergence = 3,
    /// Two computations that must agree do not.
    Consistency = 4,
    /// Invalid option value.
    Config = 5,
    Io = 6,
    /// A required pointer was null.
    NullPointer = 7,
    /// An output buffer is shorter than the data.
    BufferTooSmall = 8,
    /// Internal failure; the library caught a panic.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkPotentialKind {
    Zero = 0,
    /// Uses the `value` argument.
    Constant = 1,
    Quantum = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkMethod {
    Heat = 0,
    Parametrix = 1,
    MonteCarlo = 2,
}

/// Uniform spatial grid.
pub struct FkGrid {
    grid: Grid,
}

/// Kernel matrix `k(y_i, s, x_j, t)`.
pub struct FkKernel {
    kernel: KernelMatrix,
}

/// Solved quantum-example bridge with its fields and drift.
pub struct FkBridge {
    scenario: BridgeScenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &FkError) -> FkStatus {
    match err {
        FkError::Domain(_) => FkStatus::Domain,
        FkError::Numeric(_) => FkStatus::Numeric,
        FkError::Convergence { .. } => FkStatus::Convergence,
        FkError::Consistency(_) => FkStatus::Consistency,
        FkError::Config { .. } => FkStatus::Config,
        FkError::Io(_) | FkError::Serde(_) => FkStatus::Io,
    }
}

enum Failure {
    Lib(FkError),
    Null(&'static str),
    Buffer { needed: usize, given: usize },
}

impl From<FkError> for Failure {
    fn from(e: FkError) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any failure and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FkStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            FkStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, given })) => {
            set_error(format!("buffer holds {given} values, {needed} needed"));
            FkStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal error".into());
            FkStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(Failure::Null("out"));
    }
    if len < src.len() {
        return Err(Failure::Buffer {
            needed: src.len(),
            given: len,
        });
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn potential(kind: FkPotentialKind, value: f64) -> Result<Arc<dyn Potential>, Failure> {
    let spec = match kind {
        FkPotentialKind::Zero => PotentialSpec::parse("zero", None)?,
        FkPotentialKind::Constant => PotentialSpec::parse("constant", Some(value))?,
        FkPotentialKind::Quantum => PotentialSpec::parse("quantum", None)?,
    };
    Ok(spec.build())
}

fn kernel_spec(method: FkMethod, seed: u64) -> KernelSpec {
    match method {
        FkMethod::Heat => KernelSpec::Heat,
        FkMethod::Parametrix => KernelSpec::Parametrix(ParametrixOptions::default()),
        FkMethod::MonteCarlo => KernelSpec::MonteCarlo(MonteCarloOptions {
            seed,
            ..Default::default()
        }),
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fk_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Creates a uniform grid of `n` points on `[lo, hi]`.
#[no_mangle]
pub unsafe extern "C" fn fk_grid_new(lo: f64, hi: f64, n: usize, grid: *mut *mut FkGrid) -> FkStatus {
    guard(|| {
        let slot = out(grid, "grid")?;
        let g = make_uniform_grid(lo, hi, n)?;
        *slot = Box::into_raw(Box::new(FkGrid { grid: g }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fk_grid_free(grid: *mut FkGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of grid points, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fk_grid_len(grid: *const FkGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.n())
}

#[no_mangle]
pub unsafe extern "C" fn fk_grid_points(grid: *const FkGrid, points: *mut f64, len: usize) -> FkStatus {
    guard(|| copy_out(get(grid, "grid")?.grid.points(), points, len))
}

/// Builds `k(., s, ., t)` with default options; `value` is read only for
/// a constant potential and `seed` only for Monte Carlo.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fk_kernel_new(
    grid: *const FkGrid,
    potential_kind: FkPotentialKind,
    value: f64,
    method: FkMethod,
    s: f64,
    t: f64,
    seed: u64,
    kernel: *mut *mut FkKernel,
) -> FkStatus {
    guard(|| {
        let g = get(grid, "grid")?;
        let slot = out(kernel, "kernel")?;
        let pot = potential(potential_kind, value)?;
        let k = kernel_matrix(pot.as_ref(), &g.grid, s, t, &kernel_spec(method, seed))?;
        *slot = Box::into_raw(Box::new(FkKernel { kernel: k }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fk_kernel_free(kernel: *mut FkKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Side length of the square matrix, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_dim(kernel: *const FkKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.kernel.n())
}

/// Copies the values in row-major order (`y` index major).
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_values(kernel: *const FkKernel, values: *mut f64, len: usize) -> FkStatus {
    guard(|| {
        let k = get(kernel, "kernel")?;
        let flat: Vec<f64> = k.kernel.values.iter().copied().collect();
        copy_out(&flat, values, len)
    })
}

/// Copies standard errors (row-major); `Domain` if the kernel has none.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_stderr(kernel: *const FkKernel, values: *mut f64, len: usize) -> FkStatus {
    guard(|| {
        let k = get(kernel, "kernel")?;
        let se = k
            .kernel
            .stderr
            .as_ref()
            .ok_or_else(|| FkError::domain("kernel has no standard errors"))?;
        let flat: Vec<f64> = se.iter().copied().collect();
        copy_out(&flat, values, len)
    })
}

/// Relative Chapman-Kolmogorov residual of `k_sr * k_rt` against `k_st`
/// on the interior window.
#[no_mangle]
pub unsafe extern "C" fn fk_chapman_kolmogorov(
    k_sr: *const FkKernel,
    k_rt: *const FkKernel,
    k_st: *const FkKernel,
    residual: *mut f64,
) -> FkStatus {
    guard(|| {
        let r = chapman_kolmogorov_residual(
            &get(k_sr, "k_sr")?.kernel,
            &get(k_rt, "k_rt")?.kernel,
            &get(k_st, "k_st")?.kernel,
        )?;
        *out(residual, "residual")? = r;
        Ok(())
    })
}

/// Solves the quantum example on `[lo, hi]` with `n` points and fields on
/// a time mesh of spacing `mesh_step` over `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_quantum_new(
    lo: f64,
    hi: f64,
    n: usize,
    mesh_step: f64,
    bridge: *mut *mut FkBridge,
) -> FkStatus {
    guard(|| {
        let slot = out(bridge, "bridge")?;
        let opts = ScenarioOptions {
            grid: GridSpec { lo, hi, n },
            mesh_step,
            ..Default::default()
        };
        let sc = BridgeScenario::quantum(opts)?;
        *slot = Box::into_raw(Box::new(FkBridge { scenario: sc }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fk_bridge_free(bridge: *mut FkBridge) {
    if !bridge.is_null() {
        drop(Box::from_raw(bridge));
    }
}

/// Final marginal residual and iteration count of the solver.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_residual(
    bridge: *const FkBridge,
    residual: *mut f64,
    iterations: *mut usize,
) -> FkStatus {
    guard(|| {
        let sol = &get(bridge, "bridge")?.scenario.solution;
        *out(residual, "residual")? = sol.final_residual;
        *out(iterations, "iterations")? = sol.iterations;
        Ok(())
    })
}

/// Number of time-mesh points, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_mesh_len(bridge: *const FkBridge) -> usize {
    bridge.as_ref().map_or(0, |b| b.scenario.solution.time_mesh.len())
}

/// Copies `rho(., t_k)` at time-mesh index `k`.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_density(bridge: *const FkBridge, k: usize, rho: *mut f64, len: usize) -> FkStatus {
    guard(|| {
        let sol = &get(bridge, "bridge")?.scenario.solution;
        if k >= sol.time_mesh.len() {
            return Err(FkError::domain(format!("mesh index {k} out of range")).into());
        }
        copy_out(&sol.density(k), rho, len)
    })
}

/// Drift `b(x, t)` of the bridge diffusion.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_drift(bridge: *const FkBridge, x: f64, t: f64, drift: *mut f64) -> FkStatus {
    guard(|| {
        let d = &get(bridge, "bridge")?.scenario.drift;
        if !(x.is_finite() && t.is_finite()) {
            return Err(FkError::domain("x and t must be finite").into());
        }
        *out(drift, "drift")? = d.eval(x, t);
        Ok(())
    })
}

/// Samples `n_paths` paths from `rho(., 0)` with step `dt` and copies the
/// states at the horizon.
#[no_mangle]
pub unsafe extern "C" fn fk_bridge_sample_final(
    bridge: *const FkBridge,
    n_paths: usize,
    dt: f64,
    seed: u64,
    states: *mut f64,
    len: usize,
) -> FkStatus {
    guard(|| {
        let sc = &get(bridge, "bridge")?.scenario;
        let ens = sample_paths(
            &sc.drift,
            &sc.solution.density(0),
            n_paths,
            dt,
            RngStream::new(seed, 1),
            SamplerOptions::default(),
        )?;
        copy_out(&ens.final_states(), states, len)
    })
}
