//! Parametrix series `k = sum_n (-1)^n k_n` with
//! `k_n(y,s,x,t) = int_s^t dtau int dz c(z,tau) k_{n-1}(y,s,z,tau) k_0(z,tau,x,t)`.
//!
//! On the grid every `k_n(s, tau_j)` is a matrix and the `z` integral is a
//! weighted matrix product. The time integral uses composite Simpson weights on
//! the nodes `s = tau_0 < ... < tau_m = t`; at the two ends one of the
//! factors collapses to a delta function, which on the grid is `W^{-1}`,
//! so the end contributions reduce to diagonal scalings:
//! `c(y, s) k_0(y,s,x,t)` for `n = 1` at `tau = s` and
//! `k_{n-1}(y,s,x,t) c(x,t)` at `tau = t`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{heat_matrix, KernelMatrix, KernelMethod, KernelSpec, Potential};
use crate::error::{FkError, Result};
use crate::numerics::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametrixOptions {
    /// Highest series order kept.
    pub n_terms: usize,
    /// Longest sub-interval handled by one series; longer spans are split
    /// and recomposed by quadrature.
    pub max_split: f64,
    /// Trapezoid steps in time per sub-interval.
    pub quad_steps: usize,
    /// Sub-intervals are also shortened until `sup|c| * length` is at most
    /// this value on the grid box, which keeps the truncated alternating
    /// series positive where the potential is large.
    pub series_budget: f64,
}

impl Default for ParametrixOptions {
    fn default() -> Self {
        Self {
            n_terms: 8,
            max_split: 0.25,
            quad_steps: 4,
            series_budget: 2.0,
        }
    }
}

impl ParametrixOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms < 1 {
            return Err(FkError::config("kernel.n_terms", "parametrix needs n_terms >= 1"));
        }
        if !(self.max_split > 0.0) {
            return Err(FkError::config("kernel.split", "split length must be positive"));
        }
        if self.quad_steps < 1 {
            return Err(FkError::config("kernel.quad_steps", "need at least one time step"));
        }
        if !(self.series_budget > 0.0) {
            return Err(FkError::config(
                "kernel.series_budget",
                "series budget must be positive",
            ));
        }
        Ok(())
    }

    /// Number of equal sub-intervals used for `(s, t)`.
    pub fn pieces(&self, pot: &dyn Potential, grid: &Grid, s: f64, t: f64) -> usize {
        let r = grid.lo().abs().max(grid.hi().abs());
        let sup = pot.sup_abs(r, s, t);
        if sup == 0.0 {
            // the series stops at k_0; nothing to converge
            return 1;
        }
        let len = self.max_split.min(self.series_budget / sup);
        (((t - s) / len) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Parametrix kernel on a single interval, integrating in time over the
/// points of `time_mesh` that lie in `[s, t]` (both ends must be present).
pub fn fk_kernel_parametrix(
    pot: &dyn Potential,
    grid: &Grid,
    time_mesh: &[f64],
    s: f64,
    t: f64,
    n_terms: usize,
) -> Result<KernelMatrix> {
    if !(t > s) {
        return Err(FkError::domain(format!("kernel needs t > s, got s={s}, t={t}")));
    }
    if n_terms < 1 {
        return Err(FkError::domain("parametrix needs n_terms >= 1"));
    }
    let tol = 1e-12 * (1.0 + t.abs());
    let nodes: Vec<f64> = time_mesh
        .iter()
        .copied()
        .filter(|&tau| tau >= s - tol && tau <= t + tol)
        .collect();
    let has = |v: f64| nodes.iter().any(|&tau| (tau - v).abs() <= tol);
    if !has(s) || !has(t) {
        return Err(FkError::domain(format!(
            "s={s} and t={t} must both be points of the time mesh"
        )));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FkError::domain("time mesh must be strictly increasing"));
    }
    let mut nodes = nodes;
    *nodes.first_mut().unwrap() = s;
    *nodes.last_mut().unwrap() = t;
    check_bounded(pot, grid, s, t)?;

    let values = series(pot, grid, &nodes, n_terms)?;
    let k = KernelMatrix {
        grid: grid.clone(),
        s,
        t,
        values,
        method: KernelMethod::Parametrix,
        stderr: None,
        spec: KernelSpec::Parametrix(ParametrixOptions {
            n_terms,
            max_split: t - s,
            quad_steps: nodes.len() - 1,
            ..ParametrixOptions::default()
        }),
        potential: pot.name(),
    };
    positivity_or_convergence_error(&k, n_terms)?;
    Ok(k)
}

/// Parametrix kernel over `(s, t)`, split into short pieces and recomposed.
pub fn parametrix_matrix(
    pot: &dyn Potential,
    grid: &Grid,
    s: f64,
    t: f64,
    opts: &ParametrixOptions,
) -> Result<KernelMatrix> {
    opts.validate()?;
    check_bounded(pot, grid, s, t)?;
    let pieces = opts.pieces(pot, grid, s, t);
    let span = t - s;
    let mut acc: Option<KernelMatrix> = None;
    for p in 0..pieces {
        let a = s + span * p as f64 / pieces as f64;
        let b = if p + 1 == pieces {
            t
        } else {
            s + span * (p + 1) as f64 / pieces as f64
        };
        let nodes: Vec<f64> = (0..=opts.quad_steps)
            .map(|q| {
                if q == opts.quad_steps {
                    b
                } else {
                    a + (b - a) * q as f64 / opts.quad_steps as f64
                }
            })
            .collect();
        let values = series(pot, grid, &nodes, opts.n_terms)?;
        let piece = KernelMatrix {
            grid: grid.clone(),
            s: a,
            t: b,
            values,
            method: KernelMethod::Parametrix,
            stderr: None,
            spec: KernelSpec::Parametrix(*opts),
            potential: pot.name(),
        };
        positivity_or_convergence_error(&piece, opts.n_terms)?;
        acc = Some(match acc {
            None => piece,
            Some(prev) => super::compose(&prev, &piece)?,
        });
    }
    let k = acc.expect("at least one piece");
    if pieces > 1 {
        positivity_or_convergence_error(&k, opts.n_terms)?;
    }
    Ok(k)
}

fn check_bounded(pot: &dyn Potential, grid: &Grid, s: f64, t: f64) -> Result<()> {
    let r = grid.lo().abs().max(grid.hi().abs());
    let sup = pot.sup_abs(r, s, t);
    if !sup.is_finite() {
        return Err(FkError::domain(format!(
            "potential {} is unbounded on the grid box [-{r}, {r}] x [{s}, {t}]",
            pot.name()
        )));
    }
    Ok(())
}

fn positivity_or_convergence_error(k: &KernelMatrix, n_terms: usize) -> Result<()> {
    if let Some((i, j, v)) = k.first_nonpositive() {
        let p = k.grid.points();
        return Err(FkError::Convergence {
            message: format!(
                "parametrix entry k(y={}, s={}, x={}, t={}) = {v} is not positive after \
                 {n_terms} terms; increase n_terms or split (s, t) into shorter intervals",
                p[i], k.s, p[j], k.t
            ),
            history: Vec::new(),
        });
    }
    Ok(())
}

/// Partial sum of the series on one interval with the given time nodes.
///
/// Nesting the time integrals from the left and from the right gives two
/// discretizations that differ at fourth order; their average is returned,
/// which makes the result transform exactly like the continuous kernel
/// under time reversal.
fn series(pot: &dyn Potential, grid: &Grid, nodes: &[f64], n_terms: usize) -> Result<Array2<f64>> {
    // potential on the grid at every node
    let mut cvals: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
    for &tau in nodes {
        let row: Vec<f64> = grid.points().iter().map(|&z| pot.eval(z, tau)).collect();
        if let Some(k) = row.iter().position(|c| !c.is_finite()) {
            return Err(FkError::numeric(format!(
                "potential {} is not finite at (x={}, t={tau})",
                pot.name(),
                grid.points()[k]
            )));
        }
        cvals.push(row);
    }
    let left = nested_series(grid, nodes, &cvals, n_terms);
    if cvals.iter().all(|row| row.iter().all(|&c| c == 0.0)) {
        return Ok(left);
    }
    // right nesting = transposed left nesting of the mirrored problem
    let (s, t) = (nodes[0], nodes[nodes.len() - 1]);
    let mirrored: Vec<f64> = nodes.iter().rev().map(|&tau| s + t - tau).collect();
    let mirrored_c: Vec<Vec<f64>> = cvals.iter().rev().cloned().collect();
    let right = nested_series(grid, &mirrored, &mirrored_c, n_terms);
    Ok((left + right.t()) * 0.5)
}

/// Left-nested partial sum for potential values `cvals[q]` at `nodes[q]`.
fn nested_series(grid: &Grid, nodes: &[f64], cvals: &[Vec<f64>], n_terms: usize) -> Array2<f64> {
    let m = nodes.len() - 1;
    let n = grid.n();
    let w = grid.weights();

    // heat[i][j] = k_0(tau_i -> tau_j), i < j
    let mut heat: Vec<Vec<Option<Array2<f64>>>> = vec![vec![None; m + 1]; m + 1];
    for i in 0..m {
        for j in i + 1..=m {
            // uniform nodes repeat the same time differences
            let dt = nodes[j] - nodes[i];
            let reuse = (0..i).find_map(|i2| {
                let j2 = j - (i - i2);
                (nodes[j2] - nodes[i2] == dt).then(|| heat[i2][j2].clone()).flatten()
            });
            heat[i][j] = Some(reuse.unwrap_or_else(|| heat_matrix(grid, dt)));
        }
    }
    let k0 = heat[0][m].clone().expect("heat matrix for the full interval");

    if cvals.iter().all(|row| row.iter().all(|&c| c == 0.0)) {
        return k0;
    }

    // scaled[i][j] = diag(w * c(., tau_i)) k_0(tau_i -> tau_j) for interior i
    let mut scaled: Vec<Vec<Option<Array2<f64>>>> = vec![vec![None; m + 1]; m + 1];
    for i in 1..m {
        for j in i + 1..=m {
            let mut a = heat[i][j].clone().expect("heat matrix");
            for (mut row, (wz, cz)) in a.axis_iter_mut(Axis(0)).zip(w.iter().zip(&cvals[i])) {
                row *= wz * cz;
            }
            scaled[i][j] = Some(a);
        }
    }

    // prev[j] = k_{n-1}(s -> tau_j); prev[0] is the delta and is handled
    // analytically.
    let mut prev: Vec<Option<Array2<f64>>> = (0..=m).map(|j| heat[0][j].clone()).collect();
    let mut total = k0;
    for order in 1..=n_terms {
        let targets: Vec<usize> = if order == n_terms {
            vec![m]
        } else {
            (1..=m).collect()
        };
        let mut next: Vec<Option<Array2<f64>>> = vec![None; m + 1];
        for &j in &targets {
            let omega = time_weights(&nodes[..=j]);
            let mut acc = Array2::<f64>::zeros((n, n));
            if order == 1 {
                // tau = s: c(y, s) k_0(y, s, x, tau_j)
                let h = heat[0][j].as_ref().expect("heat matrix");
                for ((mut out, hrow), c) in acc
                    .axis_iter_mut(Axis(0))
                    .zip(h.axis_iter(Axis(0)))
                    .zip(&cvals[0])
                {
                    out.scaled_add(omega[0] * c, &hrow);
                }
            }
            for i in 1..j {
                let lhs = prev[i].as_ref().expect("lower order term");
                let rhs = scaled[i][j].as_ref().expect("scaled heat");
                general_mat_mul(omega[i], lhs, rhs, 1.0, &mut acc);
            }
            // tau = tau_j: k_{n-1}(y, s, x, tau_j) c(x, tau_j)
            let last = prev[j].as_ref().expect("lower order term");
            for (mut out, lrow) in acc.axis_iter_mut(Axis(0)).zip(last.axis_iter(Axis(0))) {
                for ((o, l), c) in out.iter_mut().zip(lrow.iter()).zip(&cvals[j]) {
                    *o += omega[j] * l * c;
                }
            }
            next[j] = Some(acc);
        }
        let term = next[m].as_ref().expect("top term");
        if order % 2 == 1 {
            total -= term;
        } else {
            total += term;
        }
        prev = next;
    }
    total
}

/// Quadrature weights on `nodes` for the integral from the first to the
/// last node: composite Simpson (with a closing 3/8 panel for an odd number
/// of steps) on uniform nodes, the trapezoid rule otherwise or for a single
/// step.
fn time_weights(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len() - 1;
    let h = (nodes[m] - nodes[0]) / m as f64;
    let uniform = nodes
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    let mut w = vec![0.0; m + 1];
    if m < 2 || !uniform {
        for k in 0..m {
            let d = nodes[k + 1] - nodes[k];
            w[k] += 0.5 * d;
            w[k + 1] += 0.5 * d;
        }
        return w;
    }
    let simpson_end = if m.is_multiple_of(2) { m } else { m - 3 };
    for k in (0..simpson_end).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if m % 2 == 1 {
        let k = m - 3;
        w[k] += 3.0 * h / 8.0;
        w[k + 1] += 9.0 * h / 8.0;
        w[k + 2] += 9.0 * h / 8.0;
        w[k + 3] += 3.0 * h / 8.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{
        heat_kernel, kernel_matrix, max_relative_deviation, ConstantPotential, QuantumPotential,
        ZeroPotential,
    };
    use crate::numerics::make_uniform_grid;

    #[test]
    fn zero_potential_reduces_to_heat() {
        let g = make_uniform_grid(-3.0, 3.0, 31).unwrap();
        let heat = kernel_matrix(&ZeroPotential, &g, 0.0, 0.8, &KernelSpec::Heat).unwrap();
        for n_terms in [1, 3, 8] {
            let opts = ParametrixOptions {
                n_terms,
                ..Default::default()
            };
            let k = kernel_matrix(&ZeroPotential, &g, 0.0, 0.8, &KernelSpec::Parametrix(opts))
                .unwrap();
            assert_eq!(k.values, heat.values);
        }
        let mesh = [0.0, 0.2, 0.4, 0.8];
        let k = fk_kernel_parametrix(&ZeroPotential, &g, &mesh, 0.0, 0.8, 5).unwrap();
        assert_eq!(k.values, heat.values);
    }

    #[test]
    fn constant_potential_matches_exponential_factor() {
        let g = make_uniform_grid(-8.0, 8.0, 321).unwrap();
        let mesh: Vec<f64> = (0..=8).map(|q| q as f64 * 0.5 / 8.0).collect();
        let k = fk_kernel_parametrix(&ConstantPotential { value: 1.0 }, &g, &mesh, 0.0, 0.5, 6)
            .unwrap();
        let idx = k.interior_indices(crate::kernels::default_margin(0.5));
        let p = g.points();
        let mut worst: f64 = 0.0;
        for &i in &idx {
            for &j in &idx {
                let exact = heat_kernel(p[i], 0.0, p[j], 0.5).unwrap() * (-0.5f64).exp();
                worst = worst.max((k.values[[i, j]] - exact).abs());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn partial_sums_follow_taylor_expansion() {
        // For constant kappa the n-term partial sum is k_0 times the Taylor
        // polynomial of exp(-kappa dt) of degree n.
        let kappa = 0.7;
        let dt = 0.4;
        let g = make_uniform_grid(-6.0, 6.0, 241).unwrap();
        let mesh: Vec<f64> = (0..=6).map(|q| q as f64 * dt / 6.0).collect();
        let centre = g.nearest_index(0.0);
        let k0 = heat_kernel(0.0, 0.0, 0.0, dt).unwrap();
        let mut taylor = 0.0;
        let mut term = 1.0;
        for n in 0..=4usize {
            taylor += term;
            term *= -kappa * dt / (n as f64 + 1.0);
            if n == 0 {
                continue;
            }
            let k = fk_kernel_parametrix(&ConstantPotential { value: kappa }, &g, &mesh, 0.0, dt, n)
                .unwrap();
            let got = k.values[[centre, centre]] / k0;
            // up to order 3 every time integrand is a polynomial the
            // Simpson / 3/8 / single-step trapezoid weights integrate exactly
            let tol = if n <= 3 { 1e-8 } else { 1e-5 };
            assert!((got - taylor).abs() < tol, "n={n} got={got} taylor={taylor}");
        }
    }

    #[test]
    fn splitting_respects_series_budget() {
        let g = make_uniform_grid(-8.0, 8.0, 17).unwrap();
        let opts = ParametrixOptions::default();
        assert_eq!(opts.pieces(&ZeroPotential, &g, 0.0, 1.0), 1);
        assert_eq!(opts.pieces(&ConstantPotential { value: 1.0 }, &g, 0.0, 1.0), 4);
        assert_eq!(opts.pieces(&ConstantPotential { value: 1.0 }, &g, 0.0, 0.3), 2);
        // sup |c| ~ 31 near x = 8, t = 0 -> pieces no longer than 2/31
        assert_eq!(opts.pieces(&QuantumPotential, &g, 0.0, 0.05), 1);
        assert_eq!(opts.pieces(&QuantumPotential, &g, 0.0, 0.25), 4);
    }

    #[test]
    fn mesh_must_contain_endpoints() {
        let g = make_uniform_grid(-1.0, 1.0, 5).unwrap();
        assert!(fk_kernel_parametrix(&ZeroPotential, &g, &[0.0, 0.5], 0.0, 0.7, 2).is_err());
        assert!(fk_kernel_parametrix(&ZeroPotential, &g, &[0.0, 0.7], 0.0, 0.7, 0).is_err());
        assert!(fk_kernel_parametrix(&ZeroPotential, &g, &[0.0, 0.7], 0.7, 0.0, 1).is_err());
    }

    #[test]
    fn long_unsplit_interval_reports_convergence_failure() {
        let g = make_uniform_grid(-8.0, 8.0, 81).unwrap();
        let mesh: Vec<f64> = (0..=4).map(|q| q as f64 * 0.25).collect();
        let err = fk_kernel_parametrix(&QuantumPotential, &g, &mesh, 0.0, 1.0, 3).unwrap_err();
        assert!(matches!(err, FkError::Convergence { .. }), "{err}");
    }

    #[test]
    fn refining_time_nodes_converges() {
        let g = make_uniform_grid(-6.0, 6.0, 121).unwrap();
        let build = |steps: usize| {
            let opts = ParametrixOptions {
                quad_steps: steps,
                ..Default::default()
            };
            kernel_matrix(&QuantumPotential, &g, 0.0, 0.1, &KernelSpec::Parametrix(opts)).unwrap()
        };
        let (a, b, c) = (build(2), build(4), build(8));
        let idx = a.interior_indices(3.0);
        let d1 = max_relative_deviation(&a.values, &c.values, &idx);
        let d2 = max_relative_deviation(&b.values, &c.values, &idx);
        assert!(d2 < d1 && d2 < 1e-4, "{d1} {d2}");
    }
}
