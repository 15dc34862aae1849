//! Strictly positive Feynman-Kac kernels `k(y,s,x,t)` on a grid.
//!
//! Three constructions share one matrix type: the free heat kernel, the
//! alternating parametrix series built from it, and a Monte Carlo average
//! over rescaled Brownian bridges. Matrices follow the convention
//! `values[[i, j]] = k(y_i, s, x_j, t)`, so forward propagation of a field
//! `f` is `f_t = K^T (w * f_s)` and backward propagation is
//! `g_s = K (w * g_t)`, with `w` the trapezoid weights.

mod checks;
mod monte_carlo;
mod parametrix;
mod potential;

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::numerics::Grid;

pub use checks::{
    chapman_kolmogorov_residual, chapman_kolmogorov_residual_in, positivity_bound_check,
    time_reversal_residual, time_reversal_residual_in, ReversalReport,
};
pub use monte_carlo::{fk_kernel_mc, monte_carlo_matrix, MonteCarloOptions};
pub use parametrix::{fk_kernel_parametrix, parametrix_matrix, ParametrixOptions};
pub use potential::{
    check_potential, ConstantPotential, Potential, PotentialSpec, QuantumPotential, TimeReversed,
    ZeroPotential,
};

/// Entries whose heat-kernel baseline falls below this value are beyond
/// the resolution of `f64` (the Gaussian factor underflows for short
/// intervals on wide grids) and are exempt from positivity checks.
pub const UNDERFLOW_FLOOR: f64 = 1e-250;

/// Free heat kernel `[4 pi (t-s)]^{-1/2} exp(-(x-y)^2 / 4(t-s))`.
pub fn heat_kernel(y: f64, s: f64, x: f64, t: f64) -> Result<f64> {
    if !(t > s) {
        return Err(FkError::domain(format!(
            "heat kernel needs t > s, got s={s}, t={t}"
        )));
    }
    Ok(heat_unchecked(y, x, t - s))
}

#[inline]
pub(crate) fn heat_unchecked(y: f64, x: f64, dt: f64) -> f64 {
    let d = x - y;
    (4.0 * PI * dt).powf(-0.5) * (-d * d / (4.0 * dt)).exp()
}

/// Heat kernel sampled on `grid x grid` for the time step `dt`.
pub(crate) fn heat_matrix(grid: &Grid, dt: f64) -> Array2<f64> {
    let n = grid.n();
    let pts = grid.points();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| pts.iter().map(move |&x| heat_unchecked(pts[i], x, dt)))
        .collect();
    Array2::from_shape_vec((n, n), rows).expect("n*n entries")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    Heat,
    Parametrix,
    MonteCarlo,
}

impl KernelMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelMethod::Heat => "heat",
            KernelMethod::Parametrix => "parametrix",
            KernelMethod::MonteCarlo => "monte_carlo",
        }
    }
}

impl std::fmt::Display for KernelMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelMethod {
    type Err = FkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(KernelMethod::Heat),
            "parametrix" => Ok(KernelMethod::Parametrix),
            "monte_carlo" | "mc" => Ok(KernelMethod::MonteCarlo),
            other => Err(FkError::config(
                "kernel.method",
                format!("unknown method `{other}` (expected heat, parametrix, monte_carlo)"),
            )),
        }
    }
}

/// Construction method together with its options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum KernelSpec {
    Heat,
    Parametrix(ParametrixOptions),
    MonteCarlo(MonteCarloOptions),
}

impl KernelSpec {
    pub fn method(&self) -> KernelMethod {
        match self {
            KernelSpec::Heat => KernelMethod::Heat,
            KernelSpec::Parametrix(_) => KernelMethod::Parametrix,
            KernelSpec::MonteCarlo(_) => KernelMethod::MonteCarlo,
        }
    }
}

/// Discretized kernel `k(y_i, s, x_j, t)` for one time pair.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub grid: Grid,
    pub s: f64,
    pub t: f64,
    pub values: Array2<f64>,
    pub method: KernelMethod,
    pub stderr: Option<Array2<f64>>,
    /// How the matrix was built; written to the JSON sidecar.
    pub spec: KernelSpec,
    pub potential: String,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn dt(&self) -> f64 {
        self.t - self.s
    }

    /// `(K (w * g))_i = int k(y_i, s, x, t) g(x) dx`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let wg: Vec<f64> = self.grid.weights().iter().zip(g).map(|(w, v)| w * v).collect();
        let v = ndarray::ArrayView1::from(&wg[..]);
        self.values.dot(&v).to_vec()
    }

    /// `(K^T (w * f))_j = int k(y, s, x_j, t) f(y) dy`.
    pub fn apply_transpose(&self, f: &[f64]) -> Vec<f64> {
        let wf: Vec<f64> = self.grid.weights().iter().zip(f).map(|(w, v)| w * v).collect();
        let v = ndarray::ArrayView1::from(&wf[..]);
        v.dot(&self.values).to_vec()
    }

    /// Whether the heat baseline of entry `(i, j)` is representable.
    pub(crate) fn resolvable(&self, i: usize, j: usize) -> bool {
        let p = self.grid.points();
        heat_unchecked(p[i], p[j], self.dt()) >= UNDERFLOW_FLOOR
    }

    /// First entry that violates strict positivity, if any.
    pub fn first_nonpositive(&self) -> Option<(usize, usize, f64)> {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                let v = self.values[[i, j]];
                if !(v > 0.0) && (self.resolvable(i, j) || !v.is_finite()) {
                    return Some((i, j, v));
                }
            }
        }
        None
    }

    pub fn ensure_positive(&self) -> Result<()> {
        if let Some((i, j, v)) = self.first_nonpositive() {
            let p = self.grid.points();
            return Err(FkError::numeric(format!(
                "kernel entry k(y={}, s={}, x={}, t={}) = {v} is not strictly positive",
                p[i], self.s, p[j], self.t
            )));
        }
        Ok(())
    }

    /// Indices of grid points at least `margin` away from both grid ends.
    pub fn interior_indices(&self, margin: f64) -> Vec<usize> {
        let (lo, hi) = (self.grid.lo() + margin, self.grid.hi() - margin);
        self.grid
            .points()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo - 1e-12 && x <= hi + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Distance from the grid ends beyond which truncation of the real line
/// no longer affects a kernel over `dt`: four standard deviations of the
/// free displacement `sqrt(2 dt)`.
pub fn default_margin(dt: f64) -> f64 {
    4.0 * (2.0 * dt).sqrt()
}

/// `K(s,t) = K(s,r) W K(r,t)`: composition by quadrature over the grid.
pub fn compose(first: &KernelMatrix, second: &KernelMatrix) -> Result<KernelMatrix> {
    if !first.grid.same_as(&second.grid) {
        return Err(FkError::domain("cannot compose kernels on different grids"));
    }
    if (first.t - second.s).abs() > 1e-12 * (1.0 + first.t.abs()) {
        return Err(FkError::domain(format!(
            "cannot compose kernels on [{}, {}] and [{}, {}]",
            first.s, first.t, second.s, second.t
        )));
    }
    let mut scaled = second.values.clone();
    for (mut row, w) in scaled.rows_mut().into_iter().zip(second.grid.weights()) {
        row *= *w;
    }
    let values = first.values.dot(&scaled);
    Ok(KernelMatrix {
        grid: first.grid.clone(),
        s: first.s,
        t: second.t,
        values,
        method: first.method,
        stderr: None,
        spec: first.spec,
        potential: first.potential.clone(),
    })
}

/// Composes a chain of kernels tiling `[s_0, t_last]`.
pub fn compose_chain(chain: &[KernelMatrix]) -> Result<KernelMatrix> {
    let (first, rest) = chain
        .split_first()
        .ok_or_else(|| FkError::domain("empty kernel chain"))?;
    rest.iter().try_fold(first.clone(), |acc, k| compose(&acc, k))
}

/// Builds the kernel for `pot` over `(s, t)` with the selected construction.
pub fn kernel_matrix(
    pot: &dyn Potential,
    grid: &Grid,
    s: f64,
    t: f64,
    spec: &KernelSpec,
) -> Result<KernelMatrix> {
    if !(t > s) {
        return Err(FkError::domain(format!("kernel needs t > s, got s={s}, t={t}")));
    }
    match spec {
        KernelSpec::Heat => Ok(KernelMatrix {
            grid: grid.clone(),
            s,
            t,
            values: heat_matrix(grid, t - s),
            method: KernelMethod::Heat,
            stderr: None,
            spec: *spec,
            potential: pot.name(),
        }),
        KernelSpec::Parametrix(opts) => parametrix_matrix(pot, grid, s, t, opts),
        KernelSpec::MonteCarlo(opts) => monte_carlo_matrix(pot, grid, s, t, opts),
    }
}

/// Kernels for consecutive pairs of `mesh`, i.e. a tiling of
/// `[mesh[0], mesh[last]]`.
pub fn kernel_chain(
    pot: &dyn Potential,
    grid: &Grid,
    mesh: &[f64],
    spec: &KernelSpec,
) -> Result<Vec<KernelMatrix>> {
    if mesh.len() < 2 {
        return Err(FkError::domain("time mesh needs at least two points"));
    }
    mesh.windows(2)
        .map(|w| kernel_matrix(pot, grid, w[0], w[1], spec))
        .collect()
}

/// Elementwise maximum relative deviation over the index set `idx x idx`.
pub(crate) fn max_relative_deviation(a: &Array2<f64>, b: &Array2<f64>, idx: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for &i in idx {
        for &j in idx {
            let d = (a[[i, j]] - b[[i, j]]).abs() / b[[i, j]].abs();
            worst = worst.max(d);
        }
    }
    worst
}
