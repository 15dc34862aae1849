//! Schrödinger system, propagated factor fields and the Markov transition
//! density of the interpolating process.
//!
//! Given a kernel `k(x,0,y,T)` and strictly positive boundary densities,
//! the pair `(f, g)` with
//! `rho_0(x) = f(x) int k(x,0,y,T) g(y) dy` and
//! `rho_T(y) = g(y) int k(x,0,y,T) f(x) dx`
//! is found by iterative proportional fitting. The fields
//! `f(x,t) = int k(y,0,x,t) f(y) dy` and `g(x,t) = int k(x,t,y,T) g(y) dy`
//! factor the density as `rho(x,t) = f(x,t) g(x,t)`, and
//! `p(y,s,x,t) = k(y,s,x,t) g(x,t) / g(y,s)` is the transition density.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::kernels::{compose, kernel_matrix, KernelMatrix, KernelSpec, Potential};
use crate::numerics::{quad, quad_interval, Grid};

/// Divisions by values below this are treated as a corrupted kernel.
const DIVISION_FLOOR: f64 = 1e-300;

/// Boundary densities at `t = 0` and `t = T`, renormalized on the grid.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub grid: Grid,
    pub rho0: Vec<f64>,
    pub rho_t: Vec<f64>,
    pub horizon: f64,
}

impl BoundaryData {
    /// Validates strict positivity and renormalizes both densities to unit
    /// mass on `[lo, hi]` (the grid truncates the real line).
    pub fn new(grid: &Grid, rho0: Vec<f64>, rho_t: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FkError::domain(format!("horizon must be positive, got {horizon}")));
        }
        let rho0 = normalized(grid, rho0, "rho0")?;
        let rho_t = normalized(grid, rho_t, "rhoT")?;
        Ok(Self {
            grid: grid.clone(),
            rho0,
            rho_t,
            horizon,
        })
    }

    /// Samples two density functions on the grid.
    pub fn from_fns(
        grid: &Grid,
        rho0: impl Fn(f64) -> f64,
        rho_t: impl Fn(f64) -> f64,
        horizon: f64,
    ) -> Result<Self> {
        let a = grid.points().iter().map(|&x| rho0(x)).collect();
        let b = grid.points().iter().map(|&x| rho_t(x)).collect();
        Self::new(grid, a, b, horizon)
    }
}

fn normalized(grid: &Grid, rho: Vec<f64>, name: &str) -> Result<Vec<f64>> {
    if rho.len() != grid.n() {
        return Err(FkError::domain(format!(
            "{name} has {} values, grid has {}",
            rho.len(),
            grid.n()
        )));
    }
    if let Some(i) = rho.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(FkError::domain(format!(
            "{name} must be strictly positive and finite; got {} at x={}",
            rho[i],
            grid.points()[i]
        )));
    }
    let mass = quad(grid, &rho)?;
    Ok(rho.into_iter().map(|v| v / mass).collect())
}

/// Solution of the Schrödinger system and, once propagated, its fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeSolution {
    pub grid: Grid,
    pub horizon: f64,
    /// `f(x)` at `t = 0`, gauge-fixed to unit mass.
    pub f0: Vec<f64>,
    /// `g(y)` at `t = T`.
    pub g_t: Vec<f64>,
    pub time_mesh: Vec<f64>,
    pub f_field: Vec<Vec<f64>>,
    pub g_field: Vec<Vec<f64>>,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
}

impl BridgeSolution {
    /// Index of `t` in the time mesh.
    pub fn mesh_index(&self, t: f64) -> Option<usize> {
        self.time_mesh
            .iter()
            .position(|&m| (m - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// `rho(x, t_k) = f(x, t_k) g(x, t_k)` at mesh index `k`.
    pub fn density(&self, k: usize) -> Vec<f64> {
        self.f_field[k]
            .iter()
            .zip(&self.g_field[k])
            .map(|(f, g)| f * g)
            .collect()
    }

    pub fn has_fields(&self) -> bool {
        !self.time_mesh.is_empty()
    }

    /// Rescales `f` by `lambda` and `g` by `1/lambda` everywhere.
    pub fn regauged(&self, lambda: f64) -> BridgeSolution {
        let scale = |v: &[f64], c: f64| v.iter().map(|x| x * c).collect::<Vec<_>>();
        BridgeSolution {
            f0: scale(&self.f0, lambda),
            g_t: scale(&self.g_t, 1.0 / lambda),
            f_field: self.f_field.iter().map(|f| scale(f, lambda)).collect(),
            g_field: self.g_field.iter().map(|g| scale(g, 1.0 / lambda)).collect(),
            ..self.clone()
        }
    }
}

/// Iterative proportional fitting for `(f, g)` starting from `f = 1`.
pub fn solve_schroedinger_system(
    kernel_0t: &KernelMatrix,
    data: &BoundaryData,
    tol: f64,
    max_iter: usize,
) -> Result<BridgeSolution> {
    let init = vec![1.0; data.grid.n()];
    solve_schroedinger_system_from(kernel_0t, data, tol, max_iter, &init)
}

/// As [`solve_schroedinger_system`] from a given positive initial `f`.
pub fn solve_schroedinger_system_from(
    kernel_0t: &KernelMatrix,
    data: &BoundaryData,
    tol: f64,
    max_iter: usize,
    f_init: &[f64],
) -> Result<BridgeSolution> {
    if !kernel_0t.grid.same_as(&data.grid) {
        return Err(FkError::domain("kernel and boundary data live on different grids"));
    }
    if kernel_0t.s.abs() > 1e-12 || (kernel_0t.t - data.horizon).abs() > 1e-9 * data.horizon {
        return Err(FkError::domain(format!(
            "kernel spans ({}, {}), boundary data need (0, {})",
            kernel_0t.s, kernel_0t.t, data.horizon
        )));
    }
    if !(tol > 0.0) {
        return Err(FkError::domain(format!("tolerance must be positive, got {tol}")));
    }
    if f_init.len() != data.grid.n() || f_init.iter().any(|&v| !(v > 0.0)) {
        return Err(FkError::domain("initial f must be positive on every grid point"));
    }
    kernel_0t.ensure_positive()?;

    let grid = &data.grid;
    let mut f = f_init.to_vec();
    let mut g = vec![1.0; grid.n()];
    let mut history = Vec::new();
    for iter in 1..=max_iter {
        // g <- rho_T / K^T f
        let kt_f = kernel_0t.apply_transpose(&f);
        divide_into(&mut g, &data.rho_t, &kt_f, grid, "int k(x,0,y,T) f(x) dx")?;
        // f <- rho_0 / K g
        let k_g = kernel_0t.apply(&g);
        divide_into(&mut f, &data.rho0, &k_g, grid, "int k(x,0,y,T) g(y) dy")?;

        let residual = marginal_residual(kernel_0t, data, &f, &g)?;
        history.push(residual);
        if residual < tol {
            let lambda = quad(grid, &f)?;
            f.iter_mut().for_each(|v| *v /= lambda);
            g.iter_mut().for_each(|v| *v *= lambda);
            return Ok(BridgeSolution {
                grid: grid.clone(),
                horizon: data.horizon,
                f0: f,
                g_t: g,
                time_mesh: Vec::new(),
                f_field: Vec::new(),
                g_field: Vec::new(),
                iterations: iter,
                final_residual: residual,
                residual_history: history,
            });
        }
    }
    Err(FkError::Convergence {
        message: format!(
            "Schrödinger system did not reach tolerance {tol} in {max_iter} iterations (last residual {:e})",
            history.last().copied().unwrap_or(f64::NAN)
        ),
        history,
    })
}

fn divide_into(out: &mut [f64], num: &[f64], den: &[f64], grid: &Grid, what: &str) -> Result<()> {
    for (i, ((o, a), b)) in out.iter_mut().zip(num).zip(den).enumerate() {
        if !(*b >= DIVISION_FLOOR) {
            return Err(FkError::numeric(format!(
                "{what} = {b} at x={} is not a usable divisor; the kernel looks corrupted",
                grid.points()[i]
            )));
        }
        *o = a / b;
    }
    Ok(())
}

/// Larger of the two L1 marginal errors of `m(x,y) = f(x) k(x,0,y,T) g(y)`.
pub fn marginal_residual(
    kernel_0t: &KernelMatrix,
    data: &BoundaryData,
    f: &[f64],
    g: &[f64],
) -> Result<f64> {
    let grid = &data.grid;
    let k_g = kernel_0t.apply(g);
    let kt_f = kernel_0t.apply_transpose(f);
    let e0: Vec<f64> = (0..grid.n())
        .map(|i| (f[i] * k_g[i] - data.rho0[i]).abs())
        .collect();
    let et: Vec<f64> = (0..grid.n())
        .map(|i| (g[i] * kt_f[i] - data.rho_t[i]).abs())
        .collect();
    Ok(quad(grid, &e0)?.max(quad(grid, &et)?))
}

/// Checks that `kernels` tile `[0, T]` on the solution's grid and returns
/// the mesh they define.
fn tiling_mesh(sol: &BridgeSolution, kernels: &[KernelMatrix]) -> Result<Vec<f64>> {
    let first = kernels
        .first()
        .ok_or_else(|| FkError::domain("no kernels to propagate with"))?;
    let tol = 1e-9 * (1.0 + sol.horizon);
    if first.s.abs() > tol {
        return Err(FkError::domain(format!("kernel tiling starts at {}, not 0", first.s)));
    }
    let mut mesh = vec![0.0];
    for (k, pair) in kernels.iter().enumerate() {
        if !pair.grid.same_as(&sol.grid) {
            return Err(FkError::domain(format!("kernel {k} is on a different grid")));
        }
        let prev = *mesh.last().expect("non-empty");
        if (pair.s - prev).abs() > tol {
            return Err(FkError::domain(format!(
                "gap in kernel tiling between t={prev} and t={}",
                pair.s
            )));
        }
        mesh.push(pair.t);
    }
    let end = *mesh.last().expect("non-empty");
    if (end - sol.horizon).abs() > tol {
        return Err(FkError::domain(format!(
            "kernel tiling ends at {end}, horizon is {}",
            sol.horizon
        )));
    }
    *mesh.last_mut().expect("non-empty") = sol.horizon;
    Ok(mesh)
}

/// Fills `f(x,t)` forward from `f0` and `g(x,t)` backward from `g_T` on
/// the mesh defined by the kernel tiling.
pub fn propagate_fields(sol: &BridgeSolution, kernels: &[KernelMatrix]) -> Result<BridgeSolution> {
    let mesh = tiling_mesh(sol, kernels)?;
    let steps = kernels.len();
    let mut f_field = Vec::with_capacity(steps + 1);
    f_field.push(sol.f0.clone());
    for k in kernels {
        let next = k.apply_transpose(f_field.last().expect("seeded"));
        f_field.push(next);
    }
    let mut g_field = vec![Vec::new(); steps + 1];
    g_field[steps] = sol.g_t.clone();
    for idx in (0..steps).rev() {
        g_field[idx] = kernels[idx].apply(&g_field[idx + 1]);
    }
    for (k, (f, g)) in f_field.iter().zip(&g_field).enumerate() {
        if let Some(i) = f
            .iter()
            .zip(g)
            .position(|(a, b)| !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()))
        {
            return Err(FkError::numeric(format!(
                "propagated fields lost positivity at t={}, x={}",
                mesh[k],
                sol.grid.points()[i]
            )));
        }
    }
    Ok(BridgeSolution {
        time_mesh: mesh,
        f_field,
        g_field,
        ..sol.clone()
    })
}

/// Transition density `p(y_i, s, x_j, t)` on a grid.
#[derive(Debug, Clone)]
pub struct TransitionDensity {
    pub grid: Grid,
    pub s: f64,
    pub t: f64,
    pub values: Array2<f64>,
}

/// Rows may deviate from unit mass by at most this much.
pub const ROW_MASS_TOLERANCE: f64 = 1e-3;

impl TransitionDensity {
    /// `p = k(y,s,x,t) g(x,t) / g(y,s)`; fails if a row's mass is off by
    /// more than [`ROW_MASS_TOLERANCE`].
    pub fn from_kernel(kernel: &KernelMatrix, g_s: &[f64], g_t: &[f64]) -> Result<Self> {
        let n = kernel.n();
        if g_s.len() != n || g_t.len() != n {
            return Err(FkError::domain("g fields do not match the kernel grid"));
        }
        if g_s.iter().chain(g_t).any(|&v| !(v > 0.0)) {
            return Err(FkError::numeric("g field is not strictly positive"));
        }
        let mut values = kernel.values.clone();
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            let inv = 1.0 / g_s[i];
            for (v, gt) in row.iter_mut().zip(g_t) {
                *v *= gt * inv;
            }
        }
        let p = TransitionDensity {
            grid: kernel.grid.clone(),
            s: kernel.s,
            t: kernel.t,
            values,
        };
        let masses = p.row_masses();
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !((*m - 1.0).abs() <= ROW_MASS_TOLERANCE))
        {
            return Err(FkError::consistency(format!(
                "transition density row y={} on ({}, {}) has mass {m}; kernel and g field disagree",
                p.grid.points()[i],
                p.s,
                p.t
            )));
        }
        Ok(p)
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// `int p(y_i, s, x, t) dx` for every row.
    pub fn row_masses(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|r| self.grid.dot(r.as_slice().expect("standard layout")))
            .collect()
    }

    /// Row of `p` at an arbitrary start point (linear in `y` between rows).
    pub fn row_at(&self, y: f64) -> Result<Vec<f64>> {
        if !self.grid.contains(y) {
            return Err(FkError::domain(format!("start point {y} is outside the grid")));
        }
        let h = self.grid.spacing();
        let u = (y - self.grid.lo()) / h;
        let i = (u.floor() as usize).min(self.grid.n() - 2);
        let frac = u - i as f64;
        let a = self.values.row(i);
        if frac.abs() < 1e-12 {
            return Ok(a.to_vec());
        }
        let b = self.values.row(i + 1);
        Ok(a.iter().zip(b.iter()).map(|(p, q)| p + frac * (q - p)).collect())
    }

    /// Mass of `p(y_i, s, ., t)` outside `[y_i - eps, y_i + eps]`.
    pub(crate) fn escape_mass(&self, i: usize, eps: f64) -> Result<f64> {
        let y = self.grid.points()[i];
        let row = self.values.row(i);
        let row = row.as_slice().expect("standard layout");
        let left = quad_interval(&self.grid, row, self.grid.lo(), y - eps)?;
        let right = quad_interval(&self.grid, row, y + eps, self.grid.hi())?;
        Ok(left + right)
    }
}

/// Transition density between two mesh times of a propagated solution.
pub fn transition_density(kernel_st: &KernelMatrix, sol: &BridgeSolution) -> Result<TransitionDensity> {
    if !sol.has_fields() {
        return Err(FkError::domain("solution has no propagated fields"));
    }
    let is = sol.mesh_index(kernel_st.s).ok_or_else(|| {
        FkError::domain(format!("s={} is not a time of the solution mesh", kernel_st.s))
    })?;
    let it = sol.mesh_index(kernel_st.t).ok_or_else(|| {
        FkError::domain(format!("t={} is not a time of the solution mesh", kernel_st.t))
    })?;
    TransitionDensity::from_kernel(kernel_st, &sol.g_field[is], &sol.g_field[it])
}

/// `rho(x,t) = int p(y,s,x,t) rho(y,s) dy`.
pub fn propagate_density(p: &TransitionDensity, rho_s: &[f64]) -> Result<Vec<f64>> {
    if rho_s.len() != p.grid.n() {
        return Err(FkError::domain(format!(
            "density has {} values, transition density grid has {}",
            rho_s.len(),
            p.grid.n()
        )));
    }
    if let Some(v) = rho_s.iter().find(|v| !(**v >= 0.0)) {
        return Err(FkError::domain(format!("density must be nonnegative, got {v}")));
    }
    let w: Vec<f64> = rho_s
        .iter()
        .zip(p.grid.weights())
        .map(|(r, w)| r * w)
        .collect();
    Ok(ndarray::ArrayView1::from(&w[..]).dot(&p.values).to_vec())
}

/// Builds transition densities `p(., s, ., t)` for arbitrary `s < t` in
/// `[0, T]` from a propagated solution, constructing the needed kernels on
/// demand with the same potential and construction.
///
/// `g(., t)` is obtained from the next mesh time at or after `t`, and
/// `g(., s)` by applying `k(s, t)` to it, so every row of the result has
/// unit mass up to round-off.
pub struct TransitionBuilder {
    pub potential: Arc<dyn Potential>,
    pub spec: KernelSpec,
    pub solution: BridgeSolution,
}

impl TransitionBuilder {
    pub fn new(potential: Arc<dyn Potential>, spec: KernelSpec, solution: BridgeSolution) -> Result<Self> {
        if !solution.has_fields() {
            return Err(FkError::domain("solution has no propagated fields"));
        }
        Ok(Self {
            potential,
            spec,
            solution,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.solution.grid
    }

    /// `g(., t)` for any `t` in `[0, T]`.
    pub fn g_at(&self, t: f64) -> Result<Vec<f64>> {
        let sol = &self.solution;
        if let Some(k) = sol.mesh_index(t) {
            return Ok(sol.g_field[k].clone());
        }
        let next = sol
            .time_mesh
            .iter()
            .position(|&m| m > t)
            .ok_or_else(|| FkError::domain(format!("t={t} lies beyond the horizon")))?;
        if t < 0.0 {
            return Err(FkError::domain(format!("t={t} lies before 0")));
        }
        let k = kernel_matrix(
            self.potential.as_ref(),
            &sol.grid,
            t,
            sol.time_mesh[next],
            &self.spec,
        )?;
        Ok(k.apply(&sol.g_field[next]))
    }

    pub fn transition(&self, s: f64, t: f64) -> Result<TransitionDensity> {
        let k = kernel_matrix(self.potential.as_ref(), &self.solution.grid, s, t, &self.spec)?;
        let g_t = self.g_at(t)?;
        let g_s = k.apply(&g_t);
        TransitionDensity::from_kernel(&k, &g_s, &g_t)
    }
}

/// Kernel over `[t_a, t_b]` composed from a tiling chain, for mesh indices
/// `a < b`.
pub fn compose_between(chain: &[KernelMatrix], a: usize, b: usize) -> Result<KernelMatrix> {
    if !(a < b && b <= chain.len()) {
        return Err(FkError::domain(format!("invalid mesh index pair ({a}, {b})")));
    }
    chain[a + 1..b]
        .iter()
        .try_fold(chain[a].clone(), |acc, k| compose(&acc, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_chain, KernelSpec, ZeroPotential};
    use crate::numerics::make_uniform_grid;

    fn gaussian(mean: f64, var: f64) -> impl Fn(f64) -> f64 {
        move |x| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    /// Straightforward IPF over the dense coupling matrix, used as an
    /// independent oracle.
    fn brute_force_ipf(k: &Array2<f64>, w: &[f64], rho0: &[f64], rho_t: &[f64]) -> Array2<f64> {
        let n = w.len();
        let mut m = Array2::from_shape_fn((n, n), |(i, j)| k[[i, j]] * w[i] * w[j]);
        for _ in 0..5000 {
            for i in 0..n {
                let row: f64 = m.row(i).sum();
                let target = rho0[i] * w[i];
                m.row_mut(i).mapv_inplace(|v| v * target / row);
            }
            for j in 0..n {
                let col: f64 = m.column(j).sum();
                let target = rho_t[j] * w[j];
                m.column_mut(j).mapv_inplace(|v| v * target / col);
            }
        }
        m
    }

    fn small_problem() -> (Grid, KernelMatrix, BoundaryData) {
        let g = make_uniform_grid(-4.0, 4.0, 41).unwrap();
        let k = kernel_matrix(&ZeroPotential, &g, 0.0, 0.3, &KernelSpec::Heat).unwrap();
        let data = BoundaryData::from_fns(&g, gaussian(-0.5, 0.4), gaussian(0.5, 0.4), 0.3).unwrap();
        (g, k, data)
    }

    #[test]
    fn ipf_matches_dense_oracle() {
        let (g, k, data) = small_problem();
        let sol = solve_schroedinger_system(&k, &data, 1e-10, 10_000).unwrap();
        assert!(sol.final_residual < 1e-10);
        let oracle = brute_force_ipf(&k.values, g.weights(), &data.rho0, &data.rho_t);
        let w = g.weights();
        for i in 0..g.n() {
            for j in 0..g.n() {
                let ours = sol.f0[i] * k.values[[i, j]] * sol.g_t[j] * w[i] * w[j];
                assert!((ours - oracle[[i, j]]).abs() < 1e-9 * (1.0 + oracle[[i, j]]));
            }
        }
        assert!((quad(&g, &sol.f0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residual_history_is_monotone() {
        let (_, k, data) = small_problem();
        let sol = solve_schroedinger_system(&k, &data, 1e-12, 10_000).unwrap();
        for pair in sol.residual_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{pair:?}");
        }
    }

    #[test]
    fn different_starts_give_same_solution() {
        let (g, k, data) = small_problem();
        let tol = 1e-11;
        let a = solve_schroedinger_system(&k, &data, tol, 10_000).unwrap();
        let init: Vec<f64> = g.points().iter().map(|x| 1.0 + 0.5 * x.sin().abs() + x * x).collect();
        let b = solve_schroedinger_system_from(&k, &data, tol, 10_000, &init).unwrap();
        for (x, y) in a.f0.iter().zip(&b.f0) {
            assert!((x - y).abs() <= 10.0 * tol * (1.0 + x.abs()) * 1e3, "{x} {y}");
        }
        for (x, y) in a.g_t.iter().zip(&b.g_t) {
            assert!((x - y).abs() / x.abs() < 1e-6);
        }
    }

    #[test]
    fn zero_entry_is_rejected() {
        let (_, mut k, data) = small_problem();
        k.values[[20, 21]] = 0.0;
        let err = solve_schroedinger_system(&k, &data, 1e-10, 100).unwrap_err();
        assert!(matches!(err, FkError::Numeric(_)), "{err}");
    }

    #[test]
    fn non_convergence_carries_history() {
        let (_, k, data) = small_problem();
        match solve_schroedinger_system(&k, &data, 1e-300, 5) {
            Err(FkError::Convergence { history, .. }) => assert_eq!(history.len(), 5),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn boundary_data_validation() {
        let g = make_uniform_grid(-1.0, 1.0, 5).unwrap();
        assert!(BoundaryData::new(&g, vec![1.0; 5], vec![1.0, 1.0, 0.0, 1.0, 1.0], 1.0).is_err());
        assert!(BoundaryData::new(&g, vec![1.0; 4], vec![1.0; 5], 1.0).is_err());
        let d = BoundaryData::new(&g, vec![3.0; 5], vec![1.0; 5], 1.0).unwrap();
        assert!((quad(&g, &d.rho0).unwrap() - 1.0).abs() < 1e-15);
    }

    fn heat_bridge() -> (Grid, Vec<KernelMatrix>, BridgeSolution) {
        let g = make_uniform_grid(-6.0, 6.0, 121).unwrap();
        let mesh: Vec<f64> = (0..=4).map(|k| k as f64 * 0.1).collect();
        let chain = kernel_chain(&ZeroPotential, &g, &mesh, &KernelSpec::Heat).unwrap();
        let full = compose_between(&chain, 0, chain.len()).unwrap();
        let data = BoundaryData::from_fns(&g, gaussian(0.0, 0.3), gaussian(0.3, 0.5), 0.4).unwrap();
        let sol = solve_schroedinger_system(&full, &data, 1e-12, 10_000).unwrap();
        let sol = propagate_fields(&sol, &chain).unwrap();
        (g, chain, sol)
    }

    #[test]
    fn fields_reproduce_endpoints_and_factorization() {
        let (g, chain, sol) = heat_bridge();
        assert_eq!(sol.f_field[0], sol.f0);
        assert_eq!(sol.g_field[4], sol.g_t);
        for k in 0..sol.time_mesh.len() {
            let rho = sol.density(k);
            assert!((quad(&g, &rho).unwrap() - 1.0).abs() < 1e-9);
        }
        // rho propagated by p equals the field product
        let k02 = compose_between(&chain, 0, 2).unwrap();
        let p = transition_density(&k02, &sol).unwrap();
        for m in p.row_masses() {
            assert!((m - 1.0).abs() < 1e-12);
        }
        let moved = propagate_density(&p, &sol.density(0)).unwrap();
        for (a, b) in moved.iter().zip(sol.density(2)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_does_not_change_observables() {
        let (_, chain, sol) = heat_bridge();
        let other = sol.regauged(3.7);
        let p1 = transition_density(&chain[1], &sol).unwrap();
        let p2 = transition_density(&chain[1], &other).unwrap();
        for (a, b) in p1.values.iter().zip(p2.values.iter()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
        for k in 0..sol.time_mesh.len() {
            for (a, b) in sol.density(k).iter().zip(other.density(k)) {
                assert!((a - b).abs() <= 1e-14 * a.abs());
            }
        }
    }

    #[test]
    fn constant_g_gives_heat_transitions() {
        // rho_T is the heat-propagated rho_0, so g is constant and p = k
        let g = make_uniform_grid(-8.0, 8.0, 161).unwrap();
        let k = kernel_matrix(&ZeroPotential, &g, 0.0, 0.5, &KernelSpec::Heat).unwrap();
        let rho0: Vec<f64> = g.points().iter().map(|&x| gaussian(0.0, 0.5)(x)).collect();
        let rho_t = k.apply_transpose(&rho0);
        let data = BoundaryData::new(&g, rho0, rho_t, 0.5).unwrap();
        let sol = solve_schroedinger_system(&k, &data, 1e-12, 10_000).unwrap();
        let sol = propagate_fields(&sol, std::slice::from_ref(&k)).unwrap();
        // rows near the ends lose mass to truncation, so g is flat only inside
        let inner: Vec<f64> = g
            .points()
            .iter()
            .zip(&sol.g_t)
            .filter(|(x, _)| x.abs() <= 4.0)
            .map(|(_, v)| *v)
            .collect();
        let (lo, hi) = inner.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!((hi - lo) / hi < 1e-8, "{lo} {hi}");
        let p = transition_density(&k, &sol).unwrap();
        let c = g.nearest_index(0.0);
        for j in 0..g.n() {
            assert!((p.values[[c, j]] - k.values[[c, j]]).abs() < 1e-8 * (1.0 + k.values[[c, j]]));
        }
    }

    #[test]
    fn tiling_gaps_and_bad_rows_are_rejected() {
        let (g, chain, sol) = heat_bridge();
        let gappy = vec![chain[0].clone(), chain[2].clone(), chain[3].clone()];
        assert!(matches!(propagate_fields(&sol, &gappy), Err(FkError::Domain(_))));
        // a g field from the wrong solution breaks row masses
        let mut wrong = sol.g_field[1].clone();
        wrong.iter_mut().zip(g.points()).for_each(|(v, x)| *v *= 1.0 + 0.5 * x.abs());
        let err = TransitionDensity::from_kernel(&chain[1], &wrong, &sol.g_field[2]).unwrap_err();
        assert!(matches!(err, FkError::Consistency(_)));
    }

    #[test]
    fn one_hot_density_propagates_a_row() {
        let (g, chain, sol) = heat_bridge();
        let p = transition_density(&chain[0], &sol).unwrap();
        let c = g.nearest_index(0.0);
        let mut rho = vec![0.0; g.n()];
        rho[c] = 1.0 / g.spacing();
        let out = propagate_density(&p, &rho).unwrap();
        for (a, b) in out.iter().zip(p.row(c).iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((quad(&g, &out).unwrap() - quad(&g, &rho).unwrap()).abs() < 1e-6);
        assert!(propagate_density(&p, &rho[1..]).is_err());
    }

    #[test]
    fn builder_rows_have_unit_mass_off_mesh() {
        let (_, _, sol) = heat_bridge();
        let b = TransitionBuilder::new(Arc::new(ZeroPotential), KernelSpec::Heat, sol).unwrap();
        let p = b.transition(0.13, 0.17).unwrap();
        for m in p.row_masses() {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }
}
